"""Command-line interface: bases, screen, simulate, calibrate, thresholds, validate."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analysis import BB84_THRESHOLDS, MUB_PROTOCOL_THRESHOLDS, ThresholdUnavailableError
from .harness import SimConfig, calibrate_cn2, config_from_json, run_experiment, write_outputs
from .hilbert import (
    SUPPORTED_MUB_DIMS,
    basis_to_json,
    build_mub_family,
    build_sic_povm,
    certify_mub,
    certify_sic,
    find_sic_fiducial,
)
from .optics import Grid
from .turbulence import TurbulenceParams, sample_phase_screen


def _cmd_bases(args) -> int:
    family = build_mub_family(args.dim)
    print(f"d={args.dim}: {len(family)} bases ({'complete' if family.complete else 'partial'})")
    payload = {"dim": args.dim, "complete": family.complete, "bases": []}
    for b in family:
        name = {"logical": "OAM", "angular": "ANG"}.get(b.kind, f"MUB{b.index}")
        print(f"  [{name}] {len(b)} vectors")
        payload["bases"].append(basis_to_json(b))
    if args.certify:
        cert = certify_mub(family, tol=args.tol)
        print(
            f"certification: orthonormality dev {cert.max_orthonormality_dev:.3e}, "
            f"unbiasedness dev {cert.max_unbiasedness_dev:.3e} -> "
            f"{'PASS' if cert.passed else 'FAIL'} at tol {cert.tol:g}"
        )
        if not cert.passed:
            return 1
    if args.sic:
        fiducial = find_sic_fiducial(args.dim, seed=args.seed, tol=args.sic_tol)
        povm = build_sic_povm(args.dim, fiducial)
        cert = certify_sic(povm, tol=args.sic_tol)
        print(
            f"SIC-POVM: {len(povm)} vectors, equiangularity dev "
            f"{cert.max_equiangularity_dev:.3e}, identity residual "
            f"{cert.identity_residual:.3e} -> {'PASS' if cert.passed else 'FAIL'}"
        )
        payload["sic"] = basis_to_json(povm)
        if not cert.passed:
            return 1
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
        print(f"wrote {args.out}")
    return 0


def _cmd_screen(args) -> int:
    params = TurbulenceParams(
        cn2=args.cn2,
        length=args.length,
        wavelength=args.wavelength,
        aperture=args.aperture,
        max_order=args.max_order,
        seed=args.seed,
    )
    grid = Grid(n=args.n, window=args.window)
    screens = []
    for r in range(args.count):
        rng = np.random.default_rng(np.random.SeedSequence((args.seed, r)))
        screens.append(sample_phase_screen(params, grid, rng).to_json())
    payload = {"fried_parameter_m": params.fried(), "screens": screens}
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.count} screen(s) to {args.out} (r0 = {params.fried():.4g} m)")
    else:
        print(text)
    return 0


def _load_config(path) -> SimConfig:
    with open(path) as fh:
        return config_from_json(json.load(fh))


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    report = run_experiment(config, workers=args.workers)
    write_outputs(report, args.out, dump_fields=args.dump_fields)
    for run in report.results:
        q = run.report
        verdicts = ", ".join(
            f"{p}: {'ok' if v['passed'] else 'ABOVE'} ({v['threshold']:.2%})"
            for p, v in q.thresholds.items()
        )
        print(f"{run.label}: QDER {q.qder:.4%} +- {q.stddev:.4%}  {verdicts}")
    print(f"report written to {args.out} (hash {report.config.config_hash()[:12]})")
    return 0


def _cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    result = calibrate_cn2(
        target_qder=args.target,
        probe_dim=args.dim,
        config=config,
        probe_basis=args.basis,
        bracket=(args.bracket_low, args.bracket_high),
    )
    payload = {
        "cn2": result.cn2,
        "achieved_qder": result.qder,
        "stderr": result.stderr,
        "target_qder": result.target,
        "iterations": result.iterations,
        "zero_target": result.zero_target,
    }
    print(json.dumps(payload, indent=1, sort_keys=True))
    if result.zero_target:
        print("warning: zero target hit the bracket minimum (QDER floor)", file=sys.stderr)
    return 0


def _cmd_thresholds(args) -> int:
    dims = [args.dim] if args.dim else sorted(BB84_THRESHOLDS)
    for d in dims:
        try:
            bb84 = BB84_THRESHOLDS[d]
            mub = MUB_PROTOCOL_THRESHOLDS[d]
        except KeyError:
            raise ThresholdUnavailableError(f"no thresholds stored for d={d}")
        print(f"d={d}: BB84 {bb84:.2f}%, MUB {mub:.2f}%")
    return 0


def _cmd_validate(args) -> int:
    """Quick invariant sweep over basis constructions and a tiny seeded run."""
    from .hilbert import displacement_operator

    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}{': ' + detail if detail else ''}")
        failures += 0 if ok else 1

    for d in (2, 3, 4, 5, 8):
        cert = certify_mub(build_mub_family(d), tol=1e-10)
        check(f"MUB family d={d}", cert.passed, f"unbiasedness dev {cert.max_unbiasedness_dev:.2e}")
    family6 = build_mub_family(6)
    check("d=6 partial family", not family6.complete and len(family6) == 2)

    worst = 0.0
    for d in (2, 3, 5, 8, 16):
        for k in range(d):
            for j in range(d):
                op = displacement_operator(d, k, j)
                worst = max(worst, float(np.abs(op @ op.conj().T - np.eye(d)).max()))
    check("displacement unitarity d<=16", worst <= 1e-13, f"max dev {worst:.2e}")

    for d in (2, 3):
        fiducial = find_sic_fiducial(d, seed=0, tol=1e-8)
        cert = certify_sic(build_sic_povm(d, fiducial), tol=1e-6)
        check(f"SIC-POVM d={d}", cert.passed, f"equiangularity dev {cert.max_equiangularity_dev:.2e}")

    config = SimConfig(dimensions=(2,), bases=("logical",), cn2=1e-30, realizations=2, grid_n=128)
    report_a = run_experiment(config)
    report_b = run_experiment(config)
    same = json.dumps(report_a.to_json(), sort_keys=True) == json.dumps(
        report_b.to_json(), sort_keys=True
    )
    check("determinism (repeated run)", same)
    check("zero-turbulence QDER floor", report_a.results[0].report.qder < 1e-3,
          f"qder {report_a.results[0].report.qder:.2e}")

    print(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turbmodes",
        description="Spatial-mode bases, turbulence screens, and QDER simulations",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bases", help="construct and optionally certify a MUB family")
    p.add_argument("--dim", type=int, required=True, help=f"dimension, e.g. {SUPPORTED_MUB_DIMS}")
    p.add_argument("--certify", action="store_true")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--sic", action="store_true", help="also search and certify a SIC-POVM")
    p.add_argument("--sic-tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write bases as JSON")
    p.set_defaults(func=_cmd_bases)

    p = sub.add_parser("screen", help="sample turbulence phase screens")
    p.add_argument("--cn2", type=float, required=True)
    p.add_argument("--length", type=float, default=1000.0)
    p.add_argument("--wavelength", type=float, default=633e-9)
    p.add_argument("--aperture", type=float, default=8e-3)
    p.add_argument("--max-order", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--window", type=float, default=16e-3)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", help="write screens as JSON")
    p.set_defaults(func=_cmd_screen)

    p = sub.add_parser("simulate", help="run a configured Monte Carlo experiment")
    p.add_argument("--config", required=True, help="SimConfig JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--dump-fields", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="bisect Cn^2 to hit a target QDER")
    p.add_argument("--config", required=True)
    p.add_argument("--target", type=float, required=True, help="target QDER as a fraction")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--basis", default="logical")
    p.add_argument("--bracket-low", type=float, default=1e-17)
    p.add_argument("--bracket-high", type=float, default=1e-10)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("thresholds", help="print stored security thresholds")
    p.add_argument("--dim", type=int)
    p.set_defaults(func=_cmd_thresholds)

    p = sub.add_parser("validate", help="run the invariant sanity suite")
    p.set_defaults(func=_cmd_validate)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
