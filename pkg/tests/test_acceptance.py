"""End-to-end acceptance checks for the whole toolkit.

Each test prints a single PASS line for its criterion when it succeeds, so a
verbose pytest run doubles as a readable acceptance report.  The heavy
Monte Carlo sweep fixtures are session scoped and shared between criteria.
"""

import json
import math
import time

import numpy as np
import pytest

from turbmodes.analysis import threshold_lookup
from turbmodes.harness import SimConfig, calibrate_cn2, run_experiment, write_outputs
from turbmodes.hilbert import (
    build_mub_family,
    build_sic_povm,
    certify_mub,
    certify_sic,
    find_sic_fiducial,
    logical_index_map,
)
from turbmodes.optics import Grid, default_grid, fresnel_propagate, lg_field, synthesize_basis
from turbmodes.turbulence import (
    TurbulenceParams,
    coefficient_sigmas,
    fried_parameter,
    sample_coefficients,
    zernike_terms,
)

W0 = 1e-3
LAM = 633e-9

SWEEP_DIMS = (2, 3, 4, 5, 6, 8)
TARGET_D2_QDER = 0.096


def announce(capsys, criterion: int, name: str):
    with capsys.disabled():
        print(f"\ncriterion {criterion} ({name}): PASS", flush=True)


@pytest.fixture(scope="session")
def calibrated_cn2():
    """Cn^2 tuned so the d=2 OAM AO-off ensemble QDER sits near the target."""
    config = SimConfig(
        dimensions=(2,), bases=("logical",), grid_n=256, realizations=40, master_seed=7
    )
    result = calibrate_cn2(
        TARGET_D2_QDER, probe_dim=2, config=config, bracket=(1e-16, 1e-11)
    )
    assert abs(result.qder - TARGET_D2_QDER) <= max(3 * result.stderr, 0.01), result
    return result.cn2


def sweep_config(cn2, ao_enabled, realizations=100):
    return SimConfig(
        dimensions=SWEEP_DIMS,
        bases=("logical", "angular", "mub", "sic"),
        cn2=cn2,
        grid_n=256,
        realizations=realizations,
        ao_enabled=ao_enabled,
        corrected_orders=4,
        master_seed=7,
    )


@pytest.fixture(scope="session")
def sweep_reports(calibrated_cn2):
    off = run_experiment(sweep_config(calibrated_cn2, False), workers=4)
    on = run_experiment(sweep_config(calibrated_cn2, True), workers=4)
    return off, on


def test_criterion_1_mub_exactness(capsys):
    for d in (2, 3, 4, 5, 8):
        t0 = time.perf_counter()
        family = build_mub_family(d)
        assert len(family) == d + 1
        cert = certify_mub(family, tol=1e-10)
        elapsed = time.perf_counter() - t0
        assert cert.passed, (d, cert.max_orthonormality_dev, cert.max_unbiasedness_dev)
        assert elapsed < 1.0, f"d={d} took {elapsed:.2f} s"
    announce(capsys, 1, "MUB exactness")


def test_criterion_2_sic_exactness(capsys):
    for d in (2, 3, 4, 6):
        t0 = time.perf_counter()
        fiducial = find_sic_fiducial(d, seed=0, tol=1e-8)
        cert = certify_sic(build_sic_povm(d, fiducial), tol=1e-6)
        elapsed = time.perf_counter() - t0
        assert cert.max_equiangularity_dev <= 1e-6, (d, cert.max_equiangularity_dev)
        assert cert.identity_residual <= 1e-6, (d, cert.identity_residual)
        assert elapsed < 120.0, f"d={d} took {elapsed:.2f} s"
    announce(capsys, 2, "SIC exactness")


def test_criterion_3_grid_fidelity(capsys):
    # synthesized Gram of every basis family member vs its exact coefficient Gram
    for d in (2, 3, 4, 5, 6, 8):
        grid = Grid(n=512, window=8 * W0 * math.sqrt(d))
        index_map = logical_index_map(d)
        bases = list(build_mub_family(d))
        if d in (2, 3):
            bases.append(build_sic_povm(d, find_sic_fiducial(d, seed=0)))
        for basis in bases:
            fields = synthesize_basis(basis, index_map, W0, grid)
            stack = np.array([f.amplitudes for f in fields]).reshape(len(fields), -1)
            grid_gram = stack.conj() @ stack.T * grid.pitch**2
            exact = basis.gram()
            assert np.abs(grid_gram - exact).max() < 1e-3, (d, basis.kind)

    # pure LG cross-overlaps up to charge 8
    grid = default_grid(w0=W0, d_max=16, n=512)
    fields = [lg_field(ell, W0, grid) for ell in range(-8, 9)]
    stack = np.array([f.amplitudes for f in fields]).reshape(len(fields), -1)
    gram = stack.conj() @ stack.T * grid.pitch**2
    off_diag = np.abs(gram - np.diag(np.diag(gram)))
    assert off_diag.max() <= 1e-6, off_diag.max()
    announce(capsys, 3, "grid fidelity")


def test_criterion_4_zero_turbulence_channel(capsys):
    config = SimConfig(
        dimensions=SWEEP_DIMS,
        bases=("logical", "angular", "mub", "sic"),
        cn2=1e-30,
        grid_n=256,
        realizations=2,
        master_seed=1,
    )
    report = run_experiment(config, workers=4)
    for run in report.results:
        assert run.report.qder < 1e-3, (run.label, run.report.qder)
    announce(capsys, 4, "zero-turbulence channel")


def test_criterion_5_turbulence_statistics(capsys):
    # coherence length against an independently frozen high-precision evaluation
    r0 = fried_parameter(1e-14, 1000.0, 633e-9)
    assert r0 == pytest.approx(0.02686444617092787, rel=1e-10)

    # sampled coefficient variances against the analytic Kolmogorov values
    params = TurbulenceParams(
        cn2=1e-14, length=1000.0, wavelength=633e-9, aperture=8e-3, max_order=7
    )
    rng = np.random.default_rng(123)
    draws = np.array([sample_coefficients(params, rng) for _ in range(100_000)])
    empirical = draws.var(axis=0)
    expected = coefficient_sigmas(params) ** 2
    rel_err = np.abs(empirical / expected - 1.0)
    assert rel_err.max() < 0.05, dict(zip(zernike_terms(7), rel_err))
    announce(capsys, 5, "turbulence statistics")


def test_criterion_6_propagation(capsys):
    grid = Grid(n=1024, window=24 * W0)
    f = lg_field(0, W0, grid, wavelength=LAM)
    z_r = math.pi * W0**2 / LAM
    for z_frac in (0.1, 0.5, 1.0, 2.0, 3.0):
        out = fresnel_propagate(f, z_frac * z_r)
        intensity = np.abs(out.amplitudes) ** 2
        w_est = math.sqrt(2 * float(np.sum(grid.radius**2 * intensity) / intensity.sum()))
        w_true = W0 * math.sqrt(1 + z_frac**2)
        assert abs(w_est / w_true - 1) < 0.01, z_frac
        assert abs(out.power() - f.power()) < 1e-6, z_frac
    announce(capsys, 6, "propagation")


def test_criterion_7_trend_reproduction(capsys, sweep_reports):
    off, on = sweep_reports

    def by_label(report):
        return {run.label: run.report for run in report.results}

    off_map, on_map = by_label(off), by_label(on)

    # (a) OAM AO-off QDER strictly increasing with dimension
    oam_off = [off_map[f"d{d}:OAM"].qder for d in SWEEP_DIMS]
    assert all(a < b for a, b in zip(oam_off, oam_off[1:])), oam_off

    # (b) paired screens: AO on never worse than AO off, for every basis
    for label, r_off in off_map.items():
        assert on_map[label].qder <= r_off.qder + 1e-12, (
            label, on_map[label].qder, r_off.qder
        )

    # (c) corrected OAM channels stay below the BB84 bound through d = 5
    for d in (2, 3, 4, 5):
        bound = threshold_lookup(d, "bb84")
        assert on_map[f"d{d}:OAM"].qder < bound, (d, on_map[f"d{d}:OAM"].qder, bound)
    announce(capsys, 7, "trend reproduction")


def test_criterion_8_determinism(capsys, calibrated_cn2, tmp_path):
    config = sweep_config(calibrated_cn2, ao_enabled=False, realizations=10)
    write_outputs(run_experiment(config, workers=1), tmp_path / "serial")
    write_outputs(run_experiment(config, workers=8), tmp_path / "parallel")
    a = (tmp_path / "serial" / "report.json").read_bytes()
    b = (tmp_path / "parallel" / "report.json").read_bytes()
    assert a == b
    assert json.loads(a)["config_hash"] == config.config_hash()
    announce(capsys, 8, "determinism")
