"""Command-line front end: run experiments, trace defects, propagate, self-check."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import bench
from .estimators import (
    ESTIMATOR_NAMES,
    PROVEN_KINDS,
    bound_factorial,
    bound_real_part,
    quadrature_estimate,
    rho12_from_traces,
)
from .krylov import OrthPolicy, decompose
from .linops import (
    build_laplacian_1d,
    dense_reference_phi,
    load_matrix_market,
    operator_from_matrix,
    to_dense,
)
from .smalldense import NodeSet, corner_phi, divided_differences_exp, expm, ritz_values
from .stepper import StepControl, propagate

__all__ = ["main"]


def _parse_m_grid(text: str) -> tuple:
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return tuple(range(start, stop + 1, step))
    return tuple(int(x) for x in text.split(","))


def _config_from_args(args) -> bench.ExperimentConfig:
    if args.config:
        cfg = bench.load_config(args.config)
    else:
        if not args.preset:
            raise SystemExit("either --config or --preset is required")
        cfg = bench.ExperimentConfig(preset=args.preset)
    overrides = {}
    for name in ("preset", "n", "N", "nu", "p", "tol", "orth", "start", "qtol", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "m", None):
        overrides["m_grid"] = _parse_m_grid(args.m)
    if getattr(args, "estimators", None):
        overrides["estimators"] = tuple(args.estimators.split(","))
    if getattr(args, "dilation", None):
        overrides["time_dilation"] = args.dilation
    if getattr(args, "true_error", None) is not None:
        overrides["true_error"] = args.true_error
    return dataclasses.replace(cfg, **overrides)


def _add_problem_args(sub, with_estimators=True):
    sub.add_argument("--config", help="JSON experiment config; flags override it")
    sub.add_argument("--preset", choices=bench.PRESETS)
    sub.add_argument("--n", type=int, help="mesh size for laplacian1d / schrodinger-dw")
    sub.add_argument("--N", type=int, help="inner mesh points per direction for convdiff2d")
    sub.add_argument("--nu", type=float, help="convection parameter")
    sub.add_argument("--p", type=int, help="phi-function index")
    sub.add_argument("--tol", type=float, help="tolerance per unit step")
    sub.add_argument("--orth", choices=("mgs", "mgs_reorth", "full_reorth"),
                     help="orthogonalization scheme (mgs, mgs+, full)")
    sub.add_argument("--start", choices=bench.START_CASES, help="starting vector case")
    sub.add_argument("--dilation", choices=("1", "i", "-i"), help="time dilation sigma")
    sub.add_argument("--qtol", type=float, help="quadrature tolerance")
    sub.add_argument("--seed", type=int, help="seed for random starting vectors")
    if with_estimators:
        sub.add_argument("--estimators", help="comma list: " + ",".join(ESTIMATOR_NAMES))


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    rows = bench.run_experiment(cfg)
    if args.out:
        bench.write_results_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    for r in rows:
        err = "-" if r.true_error_per_t is None else f"{r.true_error_per_t:.3e}"
        print(f"m={r.m:3d} {r.estimator:18s} t(m)={r.t_m:.6e} zeta={r.zeta:.3e} "
              f"err/t={err} ac1={r.ac_est_1:.3e} ac2={r.ac_est_2:.3e}")
    ok = True
    if cfg.true_error:
        for r in rows:
            if ESTIMATOR_NAMES[r.estimator] in PROVEN_KINDS and r.true_error_per_t is not None:
                if r.true_error_per_t > cfg.tol:
                    ok = False
                    print(f"VIOLATION: m={r.m} {r.estimator} err/t={r.true_error_per_t:.3e}"
                          f" > tol={cfg.tol:.1e}", file=sys.stderr)
    return 0 if ok else 1


def cmd_defect_trace(args) -> int:
    cfg = _config_from_args(args)
    if args.t:
        grid = [float(x) for x in args.t.split(",")]
    else:
        grid = np.geomspace(args.t_min, args.t_max, args.points)
    path = bench.emit_defect_trace(cfg, args.m, grid, args.out)
    print(f"wrote defect trace ({len(grid)} points) to {path}")
    return 0


def cmd_propagate(args) -> int:
    if args.mtx:
        op = operator_from_matrix(load_matrix_market(args.mtx))
        rng = np.random.default_rng(args.seed or 0)
        v = rng.standard_normal(op.n)
        v /= np.linalg.norm(v)
        sigma = 1.0
    else:
        cfg = _config_from_args(args)
        setup = bench.build_problem(cfg)
        op, v, sigma = setup.base_op, setup.v, setup.sigma
    if sigma != 1.0:
        from .linops import scale_operator

        op = scale_operator(op, sigma)
    ctrl = StepControl(
        tol=args.tol or 1e-8,
        t_final=args.t_final,
        m_max=args.m or 30,
        estimator=args.estimator,
        p=args.p or 0,
        policy=OrthPolicy(scheme=args.orth or "mgs_reorth"),
    )
    report = propagate(op, v, ctrl)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return 0


def _check_corner_identity(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 8))
        H = np.triu(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)), -1)
        for j in range(m - 1):
            H[j + 1, j] = abs(rng.standard_normal()) + 0.2
        gamma = float(np.prod([H[j + 1, j].real for j in range(m - 1)]))
        for t in (0.1, 1.0):
            lhs = expm(t * H)[m - 1, 0]
            rhs = gamma * divided_differences_exp(NodeSet(ritz_values(H)), t)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst < 1e-8, f"max rel dev {worst:.2e}"


def _check_augmentation(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 7))
        H = np.triu(rng.standard_normal((m, m)), -1)
        for j in range(m - 1):
            H[j + 1, j] = abs(rng.standard_normal()) + 0.2
        for p in (1, 2):
            t = 0.7
            from .smalldense import phi_action

            lhs = t**p * phi_action(H, p, t, 1.0)[m - 1]
            rhs = corner_phi(H, p, t, 1.0)
            worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return worst < 1e-10, f"max rel dev {worst:.2e}"


def _check_trace_formula(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 9))
        H = np.triu(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)), -1)
        for j in range(m - 1):
            H[j + 1, j] = abs(rng.standard_normal()) + 0.1
        p = int(rng.integers(0, 3))
        rho1, rho2 = rho12_from_traces(H, p)
        lam = ritz_values(H)
        mp = m + p
        xi, eta = lam.real, lam.imag
        avg = xi.sum() / mp
        var_xi = (((xi - avg) ** 2).sum() + p * avg**2) / mp
        avg_eta = eta.sum() / mp
        var_eta = (((eta - avg_eta) ** 2).sum() + p * avg_eta**2) / mp
        worst = max(worst, abs(rho1 - avg), abs(rho2 - (var_xi - var_eta) / (mp + 1)))
    return worst < 1e-10, f"max abs dev {worst:.2e}"


def _check_laplacian_spectrum(rng) -> tuple[bool, str]:
    n = 60
    op = build_laplacian_1d(n)
    eig = np.sort(np.linalg.eigvalsh(to_dense(op)))
    j = np.arange(1, n + 1)
    ref = np.sort(-4.0 * np.sin(j * np.pi / (2 * (n + 1))) ** 2)
    dev = float(np.max(np.abs(eig - ref)))
    return dev < 1e-12, f"max abs dev {dev:.2e}"


def _check_bound_ordering(rng) -> tuple[bool, str]:
    op = build_laplacian_1d(120)
    v = rng.standard_normal(120)
    dec = decompose(op, v / np.linalg.norm(v), 8, OrthPolicy("full_reorth"))
    t = 1.0
    L = quadrature_estimate(dec, 0, t, qtol=1e-6).value
    zr = bound_real_part(dec, 0, t).value
    zf = bound_factorial(dec, 0, t).value
    ok = L <= zr * (1 + 1e-9) <= zf * (1 + 1e-9)
    return ok, f"L={L:.3e} real-part={zr:.3e} factorial={zf:.3e}"


def _check_propagate(rng) -> tuple[bool, str]:
    n = 120
    op = build_laplacian_1d(n)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    ctrl = StepControl(tol=1e-8, t_final=5.0, m_max=15, estimator="factorial-bound")
    report = propagate(op, v, ctrl)
    ref = dense_reference_phi(to_dense(op), v, 5.0, 0)
    err = float(np.linalg.norm(report.u - ref))
    ok = err <= 5.0 * 1e-8 + 1e-10 and abs(report.t_consumed - 5.0) < 1e-12
    return ok, f"substeps={len(report.substeps)} err={err:.2e}"


def cmd_check(args) -> int:
    rng = np.random.default_rng(12345)
    checks = [
        ("corner-identity", _check_corner_identity),
        ("augmentation-identity", _check_augmentation),
        ("trace-formula", _check_trace_formula),
        ("laplacian-spectrum", _check_laplacian_spectrum),
        ("bound-ordering", _check_bound_ordering),
        ("propagate-laplacian", _check_propagate),
    ]
    failed = 0
    for name, fn in checks:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a failing check must not kill the rest
            ok, detail = False, f"exception: {exc}"
        status = "PASS" if ok else "FAIL"
        print(f"check {name}: {status} ({detail})")
        failed += 0 if ok else 1
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kryphi",
        description="Krylov phi-function propagator with defect-based error control",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="estimator sweep over a grid of Krylov dimensions")
    _add_problem_args(run)
    run.add_argument("--m", help="m grid, e.g. 5:40:5 or 5,10,20")
    run.add_argument("--true-error", action=argparse.BooleanOptionalAction, default=None,
                     help="compare against the dense oracle (n <= 2500)")
    run.add_argument("--out", help="results CSV path")
    run.set_defaults(fn=cmd_run)

    trace = subs.add_parser("defect-trace", help="defect norm and its small-t prediction")
    _add_problem_args(trace, with_estimators=False)
    trace.add_argument("--m", type=int, required=True, help="Krylov dimension")
    trace.add_argument("--t", help="explicit comma list of times")
    trace.add_argument("--t-min", type=float, default=1e-3)
    trace.add_argument("--t-max", type=float, default=1e2)
    trace.add_argument("--points", type=int, default=200)
    trace.add_argument("--out", required=True, help="trace CSV path")
    trace.set_defaults(fn=cmd_defect_trace)

    prop = subs.add_parser("propagate", help="adaptive substepping propagator")
    _add_problem_args(prop, with_estimators=False)
    prop.add_argument("--mtx", help="Matrix Market file instead of a preset")
    prop.add_argument("--t-final", type=float, required=True)
    prop.add_argument("--m", type=int, help="Krylov dimension per substep")
    prop.add_argument("--estimator", default="real-part-bound", choices=tuple(ESTIMATOR_NAMES))
    prop.add_argument("--out", help="JSON report path (default: stdout)")
    prop.set_defaults(fn=cmd_propagate)

    check = subs.add_parser("check", help="built-in self tests; exit code 0 iff all pass")
    check.set_defaults(fn=cmd_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
