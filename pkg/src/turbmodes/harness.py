"""Deterministic Monte Carlo experiment runner tying bases, optics, and turbulence together.

Seeding: the master seed fans out to one substream per realization via
numpy's SeedSequence, so realizations can run on any number of threads (or be
reordered) without changing any result.  The channel screen of a realization is
shared across all bases and dimensions, and AO-on/AO-off runs with the same
master seed see identical screens (paired design).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analysis import (
    CrosstalkMatrix,
    QderReport,
    attach_thresholds,
    crosstalk_from_json,
    ensemble_average,
    normalize_crosstalk,
    qder,
    write_crosstalk_csv,
    write_qder_csv,
)
from .hilbert import (
    build_angular_basis,
    build_logical_basis,
    build_mub_family,
    build_sic_povm,
    find_sic_fiducial,
    logical_index_map,
)
from .optics import DEFAULT_WAIST, DEFAULT_WAVELENGTH, Grid, dump_field, synthesize_basis
from .turbulence import TurbulenceParams, ao_correct, apply_screen, sample_phase_screen
from .optics import fresnel_propagate

BASIS_CHOICES = ("logical", "angular", "mub", "sic")


class CalibrationError(RuntimeError):
    """Bisection bracket could not reach the target error rate."""


@dataclass(frozen=True)
class SimConfig:
    """Full experiment description; unset physical defaults are resolved at run time."""

    dimensions: tuple[int, ...] = (2,)
    bases: tuple[str, ...] = ("logical",)
    cn2: float = 10 ** (-14.7)
    length: float = 1000.0
    wavelength: float = DEFAULT_WAVELENGTH
    w0: float = DEFAULT_WAIST
    aperture: float | None = None  # default: 8 * w0
    grid_n: int = 512
    window: float | None = None  # default: 8 * w0 * sqrt(max dimension)
    max_order: int = 7
    include_m0: bool = False
    window_normalized: bool = False
    realizations: int = 100
    ao_enabled: bool = False
    corrected_orders: int = 4
    z: float = 0.0
    master_seed: int = 0
    sic_seed: int = 0
    sic_tol: float = 1e-8
    fiducial_cache: str | None = None
    singapore_thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "bases", tuple(self.bases))
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        for b in self.bases:
            if b not in BASIS_CHOICES:
                raise ValueError(f"unknown basis {b!r}; choose from {BASIS_CHOICES}")
        sing = {int(k): float(v) for k, v in self.singapore_thresholds.items()}
        object.__setattr__(self, "singapore_thresholds", sing)

    def resolved_aperture(self) -> float:
        return self.aperture if self.aperture is not None else 8.0 * self.w0

    def resolved_window(self) -> float:
        if self.window is not None:
            return self.window
        return 8.0 * self.w0 * math.sqrt(max(self.dimensions))

    def grid(self) -> Grid:
        return Grid(n=self.grid_n, window=self.resolved_window())

    def turbulence(self) -> TurbulenceParams:
        return TurbulenceParams(
            cn2=self.cn2,
            length=self.length,
            wavelength=self.wavelength,
            aperture=self.resolved_aperture(),
            max_order=self.max_order,
            seed=self.master_seed,
            include_m0=self.include_m0,
            window_normalized=self.window_normalized,
        )

    def echo(self) -> dict:
        """Every value the run will use, defaults resolved, in a stable layout."""
        out = asdict(self)
        out["dimensions"] = list(self.dimensions)
        out["bases"] = list(self.bases)
        out["aperture"] = self.resolved_aperture()
        out["window"] = self.resolved_window()
        out["singapore_thresholds"] = {str(k): v for k, v in self.singapore_thresholds.items()}
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def config_from_json(payload: dict) -> SimConfig:
    kwargs = dict(payload)
    kwargs.pop("config_hash", None)
    if "dimensions" in kwargs:
        kwargs["dimensions"] = tuple(kwargs["dimensions"])
    if "bases" in kwargs:
        kwargs["bases"] = tuple(kwargs["bases"])
    return SimConfig(**kwargs)


@dataclass(frozen=True)
class BasisRun:
    """Ensemble result for one basis in one dimension."""

    dim: int
    label: str
    kind: str  # crosstalk normalization kind: "mub" | "sic"
    crosstalk: CrosstalkMatrix
    report: QderReport

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "label": self.label,
            "kind": self.kind,
            "crosstalk": self.crosstalk.to_json(),
            "qder": self.report.to_json(),
        }


@dataclass(frozen=True)
class RunReport:
    config: SimConfig
    results: tuple[BasisRun, ...]
    timings: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        """Deterministic payload: config echo, hash, and results (no timing)."""
        return {
            "version": __version__,
            "config": self.config.echo(),
            "config_hash": self.config.config_hash(),
            "results": [r.to_json() for r in self.results],
        }


def report_from_json(payload: dict) -> RunReport:
    config = config_from_json(payload["config"])
    results = []
    for entry in payload["results"]:
        crosstalk = crosstalk_from_json(entry["crosstalk"])
        q = entry["qder"]
        report = QderReport(
            label=q["label"], qder=q["qder"], stddev=q["stddev"], thresholds=q["thresholds"]
        )
        results.append(
            BasisRun(
                dim=entry["dim"],
                label=entry["label"],
                kind=entry["kind"],
                crosstalk=crosstalk,
                report=report,
            )
        )
    return RunReport(config=config, results=tuple(results))


def _basis_specs(config: SimConfig) -> list[tuple[int, str, str, object]]:
    """Expand the configured basis choices into (dim, label, kind, ModeBasis)."""
    specs = []
    for d in config.dimensions:
        for choice in config.bases:
            if choice == "logical":
                specs.append((d, f"d{d}:OAM", "mub", build_logical_basis(d)))
            elif choice == "angular":
                specs.append((d, f"d{d}:ANG", "mub", build_angular_basis(d)))
            elif choice == "mub":
                family = build_mub_family(d)
                for b in family:
                    if b.kind == "logical":
                        continue  # covered by the "logical" choice
                    specs.append((d, f"d{d}:MUB{b.index if b.index else 1}", "mub", b))
            elif choice == "sic":
                fiducial = find_sic_fiducial(
                    d,
                    seed=config.sic_seed,
                    tol=config.sic_tol,
                    cache_path=config.fiducial_cache,
                )
                specs.append((d, f"d{d}:SIC", "sic", build_sic_povm(d, fiducial)))
    return specs


def _mode_matrix(fields) -> np.ndarray:
    return np.array([f.amplitudes for f in fields]).reshape(len(fields), -1)


def run_experiment(config: SimConfig, workers: int | None = None) -> RunReport:
    """Run the full screen -> (AO) -> aberrate -> project -> average pipeline."""
    t_start = time.perf_counter()
    if workers is None:
        workers = int(os.environ.get("TURBMODES_WORKERS", "1"))

    grid = config.grid()
    params = config.turbulence()
    specs = _basis_specs(config)

    t_bases = time.perf_counter()
    sent_stacks = []
    detect_stacks = []
    for d, label, kind, basis in specs:
        index_map = logical_index_map(d)
        fields = synthesize_basis(basis, index_map, config.w0, grid, config.wavelength)
        if config.z > 0:
            detect_fields = [fresnel_propagate(f, config.z) for f in fields]
            detect_stacks.append(_mode_matrix(detect_fields).conj())
        else:
            detect_stacks.append(_mode_matrix(fields).conj())
        sent_stacks.append(fields)
    t_synth = time.perf_counter()

    pitch2 = grid.pitch**2

    def one_realization(r: int) -> list[np.ndarray]:
        rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, r)))
        screen = sample_phase_screen(params, grid, rng)
        if config.ao_enabled:
            screen = ao_correct(screen, config.corrected_orders)
        raws = []
        for (d, label, kind, basis), fields, detect in zip(specs, sent_stacks, detect_stacks):
            aberrated = [apply_screen(f, screen) for f in fields]
            if config.z > 0:
                aberrated = [fresnel_propagate(f, config.z) for f in aberrated]
            sent = _mode_matrix(aberrated)
            gram = detect @ sent.T * pitch2
            raws.append(np.abs(gram) ** 2)
        return raws

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_real = list(pool.map(one_realization, range(config.realizations)))
    else:
        per_real = [one_realization(r) for r in range(config.realizations)]
    t_mc = time.perf_counter()

    results = []
    for idx, (d, label, kind, basis) in enumerate(specs):
        ensemble = ensemble_average([per_real[r][idx] for r in range(config.realizations)], kind)
        protocols = ("singapore",) if kind == "sic" else ("bb84", "mub")
        report = attach_thresholds(
            qder(ensemble, label=label), d, protocols, config.singapore_thresholds
        )
        results.append(BasisRun(dim=d, label=label, kind=kind, crosstalk=ensemble, report=report))
    t_end = time.perf_counter()

    timings = {
        "basis_construction_s": t_bases - t_start,
        "mode_synthesis_s": t_synth - t_bases,
        "monte_carlo_s": t_mc - t_synth,
        "reduction_s": t_end - t_mc,
        "total_s": t_end - t_start,
        "workers": workers,
    }
    return RunReport(config=config, results=tuple(results), timings=timings)


def write_outputs(report: RunReport, outdir, dump_fields: bool = False) -> None:
    """report.json (deterministic), timing.json, and CSV summaries."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "timing.json"), "w") as fh:
        json.dump(report.timings, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for run in report.results:
        safe = run.label.replace(":", "_")
        write_crosstalk_csv(os.path.join(outdir, f"crosstalk_{safe}.csv"), run.crosstalk)
    write_qder_csv(
        os.path.join(outdir, "qder_summary.csv"),
        [(run.dim, run.report) for run in report.results],
    )
    if dump_fields:
        fields_dir = os.path.join(outdir, "fields")
        os.makedirs(fields_dir, exist_ok=True)
        config = report.config
        grid = config.grid()
        for d, label, kind, basis in _basis_specs(config):
            index_map = logical_index_map(d)
            fields = synthesize_basis(basis, index_map, config.w0, grid, config.wavelength)
            safe = label.replace(":", "_")
            for k, f in enumerate(fields):
                dump_field(f, os.path.join(fields_dir, f"{safe}_{k:02d}.npz"))


@dataclass(frozen=True)
class CalibrationResult:
    cn2: float
    qder: float
    stderr: float
    target: float
    iterations: int
    zero_target: bool = False


def _probe_qders(config: SimConfig) -> np.ndarray:
    """Per-realization QDER values for the (single-basis) probe config."""
    specs = _basis_specs(config)
    if len(specs) != 1:
        raise ValueError("calibration probe must select exactly one basis/dimension")
    grid = config.grid()
    params = config.turbulence()
    (d, label, kind, basis) = specs[0]
    index_map = logical_index_map(d)
    fields = synthesize_basis(basis, index_map, config.w0, grid, config.wavelength)
    detect = _mode_matrix(fields).conj()
    pitch2 = grid.pitch**2
    out = []
    for r in range(config.realizations):
        rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, r)))
        screen = sample_phase_screen(params, grid, rng)
        if config.ao_enabled:
            screen = ao_correct(screen, config.corrected_orders)
        sent = _mode_matrix([apply_screen(f, screen) for f in fields])
        raw = np.abs(detect @ sent.T * pitch2) ** 2
        out.append(qder(normalize_crosstalk(raw, kind)).qder)
    return np.array(out)


def calibrate_cn2(
    target_qder: float,
    probe_dim: int,
    config: SimConfig,
    probe_basis: str = "logical",
    bracket: tuple[float, float] = (1e-17, 1e-10),
    max_iter: int = 40,
) -> CalibrationResult:
    """Bisection on log10(Cn^2) until the probe's ensemble QDER matches the target.

    Convergence is declared when the gap falls within the ensemble standard
    error; QDER monotonicity in Cn^2 is checked as the bracket shrinks.
    """
    if not (0.0 <= target_qder < 1.0):
        raise ValueError("target_qder must be a fraction in [0, 1)")
    probe = replace(config, dimensions=(probe_dim,), bases=(probe_basis,))

    if target_qder == 0.0:
        q = _probe_qders(replace(probe, cn2=bracket[0]))
        return CalibrationResult(
            cn2=bracket[0],
            qder=float(q.mean()),
            stderr=float(q.std(ddof=1) / math.sqrt(len(q))) if len(q) > 1 else 0.0,
            target=0.0,
            iterations=0,
            zero_target=True,
        )

    lo, hi = math.log10(bracket[0]), math.log10(bracket[1])
    seen: list[tuple[float, float, float]] = []  # (log_cn2, qder, se)

    def evaluate(log_cn2: float) -> tuple[float, float]:
        q = _probe_qders(replace(probe, cn2=10.0**log_cn2))
        se = float(q.std(ddof=1) / math.sqrt(len(q))) if len(q) > 1 else 0.0
        seen.append((log_cn2, float(q.mean()), se))
        seen.sort()
        for (_, qa, sa), (_, qb, sb) in zip(seen, seen[1:]):
            if qb < qa - 5.0 * max(sa, sb, 1e-7):
                raise CalibrationError("QDER is not monotone in Cn^2 over the probe bracket")
        return float(q.mean()), se

    q_lo, _ = evaluate(lo)
    q_hi, _ = evaluate(hi)
    if not (q_lo <= target_qder <= q_hi):
        raise CalibrationError(
            f"target {target_qder:.4f} outside achievable range "
            f"[{q_lo:.4f}, {q_hi:.4f}] for Cn^2 bracket {bracket}"
        )

    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        q_mid, se = evaluate(mid)
        if abs(q_mid - target_qder) <= max(se, 1e-6):
            return CalibrationResult(
                cn2=10.0**mid, qder=q_mid, stderr=se, target=target_qder, iterations=it
            )
        if q_mid < target_qder:
            lo = mid
        else:
            hi = mid
    q_final, se = evaluate(0.5 * (lo + hi))
    return CalibrationResult(
        cn2=10.0 ** (0.5 * (lo + hi)),
        qder=q_final,
        stderr=se,
        target=target_qder,
        iterations=max_iter,
    )
