"""Crosstalk matrices, quantum dit error rates, and security-threshold verdicts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .optics import FieldGrid, overlap

ROW_SUM_TOL = 1e-9

# Security thresholds in percent, stored exactly as published (two decimals).
BB84_THRESHOLDS = {2: 11.00, 3: 15.95, 4: 18.93, 5: 20.99, 6: 22.50, 8: 24.70}
MUB_PROTOCOL_THRESHOLDS = {2: 12.62, 3: 19.14, 4: 23.17, 5: 25.94, 6: 27.97, 8: 30.77}


class DegenerateChannelError(ValueError):
    """A crosstalk row collected no power, so normalization is undefined."""


class ThresholdUnavailableError(KeyError):
    """No stored threshold for the requested (dimension, protocol) pair."""


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Row-normalized projection probabilities with per-cell dispersion."""

    dim: int
    kind: str  # "mub" | "sic"
    values: np.ndarray
    stddev: np.ndarray
    realizations: int = 1

    def __post_init__(self):
        if self.kind not in ("mub", "sic"):
            raise ValueError(f"unknown crosstalk kind {self.kind!r}")
        size = self.dim if self.kind == "mub" else self.dim**2
        values = np.asarray(self.values, dtype=float)
        stddev = np.asarray(self.stddev, dtype=float)
        if values.shape != (size, size) or stddev.shape != (size, size):
            raise ValueError(f"expected {size}x{size} matrices for kind {self.kind!r} d={self.dim}")
        if np.any(values < 0):
            raise ValueError("crosstalk values must be non-negative")
        target = 1.0 if self.kind == "mub" else float(self.dim)
        row_err = np.abs(values.sum(axis=1) - target).max()
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to {target} (max deviation {row_err:.3e})")
        values.setflags(write=False)
        stddev.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stddev", stddev)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "kind": self.kind,
            "realizations": self.realizations,
            "values": self.values.tolist(),
            "stddev": self.stddev.tolist(),
        }


def crosstalk_from_json(payload: dict) -> CrosstalkMatrix:
    return CrosstalkMatrix(
        dim=payload["dim"],
        kind=payload["kind"],
        values=np.array(payload["values"]),
        stddev=np.array(payload["stddev"]),
        realizations=payload["realizations"],
    )


@dataclass(frozen=True)
class QderReport:
    """Per-basis dit error rate with dispersion and per-protocol verdicts."""

    label: str
    qder: float
    stddev: float
    thresholds: dict = field(default_factory=dict)  # protocol -> {threshold, passed}

    def __post_init__(self):
        if not (0.0 <= self.qder <= 1.0):
            raise ValueError(f"qder must be a fraction, got {self.qder}")

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "qder": self.qder,
            "stddev": self.stddev,
            "thresholds": self.thresholds,
        }


def raw_projection_matrix(
    sent: list[FieldGrid], detect: list[FieldGrid]
) -> np.ndarray:
    """Entry (i, j) = |<detect_i | sent_j>|^2 on the shared grid."""
    if not sent or not detect:
        raise ValueError("sent and detect mode lists must be non-empty")
    det = np.array([f.amplitudes for f in detect]).reshape(len(detect), -1).conj()
    snt = np.array([f.amplitudes for f in sent]).reshape(len(sent), -1)
    pitch2 = sent[0].grid.pitch ** 2
    for f in sent + detect:
        if f.grid != sent[0].grid or f.wavelength != sent[0].wavelength:
            raise ValueError("all fields must share grid and wavelength")
    gram = det @ snt.T * pitch2
    return np.abs(gram) ** 2


def normalize_crosstalk(raw: np.ndarray, kind: str, stddev=None, realizations: int = 1) -> CrosstalkMatrix:
    """Scale each row to sum to 1 (mub) or d (sic); dispersion scales with the row."""
    raw = np.asarray(raw, dtype=float)
    size = raw.shape[0]
    if raw.shape != (size, size):
        raise ValueError("raw matrix must be square")
    if kind == "mub":
        dim = size
        target = 1.0
    elif kind == "sic":
        dim = math.isqrt(size)
        if dim * dim != size:
            raise ValueError(f"sic matrix size {size} is not a perfect square")
        target = float(dim)
    else:
        raise ValueError(f"unknown crosstalk kind {kind!r}")
    sums = raw.sum(axis=1)
    dead = np.flatnonzero(sums <= 0)
    if dead.size:
        raise DegenerateChannelError(f"crosstalk row(s) {dead.tolist()} collected no power")
    factors = target / sums
    if stddev is None:
        stddev = np.zeros_like(raw)
    return CrosstalkMatrix(
        dim=dim,
        kind=kind,
        values=raw * factors[:, None],
        stddev=np.asarray(stddev, dtype=float) * factors[:, None],
        realizations=realizations,
    )


def ensemble_average(per_realization: list[np.ndarray], kind: str) -> CrosstalkMatrix:
    """Cellwise mean over realizations, then per-row normalization.

    Dispersion is the cellwise sample standard deviation taken before
    normalization and scaled by the same row factors as the mean.
    """
    if not per_realization:
        raise ValueError("need at least one realization")
    stack = np.array(per_realization, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ValueError("realizations must be a list of square matrices of equal shape")
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1) if len(per_realization) > 1 else np.zeros_like(mean)
    return normalize_crosstalk(mean, kind, stddev=std, realizations=len(per_realization))


def qder(c: CrosstalkMatrix, label: str = "") -> QderReport:
    """One minus the mean diagonal (mub) or trace over d^2 (sic)."""
    diag = np.diag(c.values)
    denominator = c.dim if c.kind == "mub" else c.dim**2
    value = 1.0 - float(diag.sum()) / denominator
    value = min(max(value, 0.0), 1.0)
    return QderReport(label=label, qder=value, stddev=float(diag.std()))


def threshold_lookup(d: int, protocol: str, singapore: dict[int, float] | None = None) -> float:
    """Stored security threshold as a fraction; Singapore values are config-supplied."""
    protocol = protocol.lower()
    if protocol == "bb84":
        table = BB84_THRESHOLDS
    elif protocol in ("mub", "mubprotocol", "mub_protocol", "six-state"):
        table = MUB_PROTOCOL_THRESHOLDS
    elif protocol == "singapore":
        table = singapore or {}
    else:
        raise ThresholdUnavailableError(f"unknown protocol {protocol!r}")
    if d not in table:
        raise ThresholdUnavailableError(f"no {protocol} threshold stored for d={d}")
    return table[d] / 100.0


def attach_thresholds(
    report: QderReport, d: int, protocols: tuple[str, ...] = ("bb84", "mub"),
    singapore: dict[int, float] | None = None,
) -> QderReport:
    verdicts = {}
    for protocol in protocols:
        try:
            threshold = threshold_lookup(d, protocol, singapore)
        except ThresholdUnavailableError:
            continue
        verdicts[protocol] = {"threshold": threshold, "passed": report.qder < threshold}
    return QderReport(
        label=report.label, qder=report.qder, stddev=report.stddev, thresholds=verdicts
    )


def write_qder_csv(path, rows: list[tuple[int, QderReport]]) -> None:
    """One row per basis: dimension, label, qder, stddev, per-protocol verdicts."""
    protocols = sorted({p for _, r in rows for p in r.thresholds})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["dimension", "basis", "qder", "stddev"]
        for p in protocols:
            header += [f"{p}_threshold", f"{p}_passed"]
        writer.writerow(header)
        for d, r in rows:
            row = [d, r.label, f"{r.qder:.6g}", f"{r.stddev:.6g}"]
            for p in protocols:
                verdict = r.thresholds.get(p)
                if verdict is None:
                    row += ["", ""]
                else:
                    row += [f"{verdict['threshold']:.4f}", str(verdict["passed"]).lower()]
            writer.writerow(row)


def write_crosstalk_csv(path, c: CrosstalkMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in c.values:
            writer.writerow([f"{v:.9g}" for v in row])
