"""Experiment harness: estimator sweeps over m, defect traces, CSV output.

Desk-scale reruns of the two benchmark problems (2D convection-diffusion at
N = 50 instead of 500, the double-well problem at n = 400 instead of 10^4)
with machine-readable tables.  For every (m, estimator) pair one row records
the admissible step t(m), the estimate at t(m), the accuracy criteria, and
optionally the true error per unit step against the dense reference oracle.

Rows for a fixed config and seed are deterministic; wall-clock timings are
kept on the row objects but excluded from the CSV so identical runs produce
identical files.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .asymptotics import log_asymptotic_defect_norm
from .estimators import ESTIMATOR_NAMES, defect_log_abs, evaluate_estimator
from .estimators import accuracy_criterion_1, accuracy_criterion_2
from .krylov import KrylovDecomposition, OrthPolicy, arnoldi, lanczos
from .linops import (
    LinearOperator,
    build_convection_diffusion_2d,
    build_laplacian_1d,
    build_schrodinger_double_well,
    dense_reference_phi,
    laplacian_1d_eigenvector,
    to_dense,
)
from .smalldense import NodeSet, phi_action
from .stepper import StepControl, solve_t_of_m

__all__ = [
    "PRESETS",
    "START_CASES",
    "ExperimentConfig",
    "ResultRow",
    "ProblemSetup",
    "build_problem",
    "decompose_problem",
    "run_experiment",
    "write_results_csv",
    "read_results_csv",
    "emit_defect_trace",
    "load_config",
]

PRESETS = ("laplacian1d", "convdiff2d", "schrodinger-dw")
START_CASES = ("ones", "random", "lowmodes", "splitmodes", "wavepacket")
_DILATIONS = {"1": 1.0, "i": 1j, "-i": -1j}
_DEFAULT_START = {"laplacian1d": "random", "convdiff2d": "ones", "schrodinger-dw": "wavepacket"}

CSV_HEADER = "m,estimator,t_m,zeta,true_error_per_t,ac_est_1,ac_est_2,matvecs"
CSV_VERSION_LINE = "# kryphi-results v1"
TRACE_HEADER = "t,abs_defect,asymptotic_k2"
TRACE_VERSION_LINE = "# kryphi-defect-trace v1"

_ORACLE_LIMIT = 2500


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative experiment description (JSON-loadable, CLI-overridable)."""

    preset: str
    n: int = 400
    N: int = 50
    nu: float = 100.0
    p: int = 0
    tol: float = 1e-8
    m_grid: tuple = (5, 10, 15, 20, 25, 30, 35, 40)
    estimators: tuple = ("real-part-bound", "factorial-bound", "gen-residual", "eff-order")
    orth: str = "full_reorth"
    start: str | None = None
    time_dilation: str | None = None
    true_error: bool = False
    qtol: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class ResultRow:
    m: int
    estimator: str
    t_m: float
    zeta: float
    true_error_per_t: float | None
    ac_est_1: float
    ac_est_2: float
    matvecs: int
    wall_s: float = 0.0


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.preset not in PRESETS:
        raise ValueError(f"preset: unknown preset {cfg.preset!r}, choose from {PRESETS}")
    if not cfg.m_grid:
        raise ValueError("m_grid: must be a nonempty strictly increasing sequence")
    if any(b <= a for a, b in zip(cfg.m_grid, cfg.m_grid[1:])):
        raise ValueError("m_grid: must be strictly increasing")
    for name in cfg.estimators:
        if name not in ESTIMATOR_NAMES:
            raise ValueError(f"estimators: unknown estimator {name!r}")
    if not cfg.estimators:
        raise ValueError("estimators: must be nonempty")
    if cfg.tol <= 0:
        raise ValueError("tol: must be positive")
    if cfg.p < 0:
        raise ValueError("p: must be nonnegative")
    if cfg.start is not None and cfg.start not in START_CASES:
        raise ValueError(f"start: unknown starting vector case {cfg.start!r}")
    if cfg.time_dilation is not None and cfg.time_dilation not in _DILATIONS:
        raise ValueError(f"time_dilation: must be one of {tuple(_DILATIONS)}")
    if cfg.orth not in ("mgs", "mgs_reorth", "full_reorth"):
        raise ValueError(f"orth: unknown scheme {cfg.orth!r}")


@dataclass
class ProblemSetup:
    """Operator + starting vector + dilation, with a lazy dense propagator."""

    base_op: LinearOperator
    sigma: complex
    v: np.ndarray
    _dense: np.ndarray = None

    @property
    def n(self) -> int:
        return self.base_op.n

    def dense_propagator(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.sigma * to_dense(self.base_op)
        return self._dense


def _mode_combination(n: int, weights: list[tuple[float, range]]) -> np.ndarray:
    v = np.zeros(n)
    for w, idx in weights:
        for j in idx:
            v += w * laplacian_1d_eigenvector(n, j)
    return v / np.linalg.norm(v)


def _start_vector(cfg: ExperimentConfig, op: LinearOperator, wavepacket: np.ndarray | None):
    case = cfg.start or _DEFAULT_START[cfg.preset]
    n = op.n
    if case == "ones":
        return np.ones(n) / math.sqrt(n)
    if case == "random":
        rng = np.random.default_rng(cfg.seed)
        v = rng.standard_normal(n)
        return v / np.linalg.norm(v)
    if case == "wavepacket":
        if wavepacket is None:
            raise ValueError("start: wavepacket is only available for the schrodinger-dw preset")
        return wavepacket
    if cfg.preset != "laplacian1d":
        raise ValueError(f"start: case {case!r} needs the laplacian1d eigenbasis")
    if case == "lowmodes":
        if n <= 25:
            raise ValueError("start: lowmodes needs n > 25")
        return _mode_combination(n, [(1e6, range(1, 26)), (1.0, range(26, n + 1))])
    # splitmodes: clusters at both spectral ends
    if n <= 40:
        raise ValueError("start: splitmodes needs n > 40")
    return _mode_combination(
        n, [(1e5, range(1, 21)), (1.0, range(21, n - 19)), (1e5, range(n - 19, n + 1))]
    )


def build_problem(cfg: ExperimentConfig) -> ProblemSetup:
    """Construct the preset operator, dilation sigma, and starting vector."""
    validate_config(cfg)
    wavepacket = None
    if cfg.preset == "laplacian1d":
        op = build_laplacian_1d(cfg.n)
    elif cfg.preset == "convdiff2d":
        op = build_convection_diffusion_2d(cfg.N, cfg.nu)
    else:
        op, wavepacket = build_schrodinger_double_well(cfg.n)
    dilation = cfg.time_dilation
    if dilation is None:
        dilation = "-i" if cfg.preset == "schrodinger-dw" else "1"
    sigma = _DILATIONS[dilation]
    if sigma != 1.0 and op.structure != "hermitian":
        raise ValueError("time_dilation: +-i requires a hermitian base operator")
    v = _start_vector(cfg, op, wavepacket)
    return ProblemSetup(base_op=op, sigma=complex(sigma), v=v)


def decompose_problem(
    setup: ProblemSetup, m: int, policy: OrthPolicy
) -> KrylovDecomposition:
    """Decompose the base operator and record the dilation for downstream use."""
    if setup.base_op.structure == "hermitian":
        dec = lanczos(setup.base_op, setup.v, m, policy)
    else:
        dec = arnoldi(setup.base_op, setup.v, m, policy)
    dec.sigma = setup.sigma
    return dec


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per (m, estimator): t(m), zeta(t(m)), criteria, optional truth.

    The decomposition is built once per m and shared by all estimators.  The
    true-error column requires the dense oracle and is limited to
    n <= 2500.
    """
    setup = build_problem(cfg)
    if cfg.true_error and setup.n > _ORACLE_LIMIT:
        raise ValueError(
            f"true_error: dense oracle is limited to n <= {_ORACLE_LIMIT}, got n={setup.n}"
        )
    policy = OrthPolicy(scheme=cfg.orth)
    A_dense = setup.dense_propagator() if cfg.true_error else None
    rows: list[ResultRow] = []
    for m in cfg.m_grid:
        dec = decompose_problem(setup, m, policy)
        for name in sorted(cfg.estimators):
            t_start = time.perf_counter()
            ctrl = StepControl(tol=cfg.tol, estimator=name, p=cfg.p, qtol=cfg.qtol, m_max=max(m, 2))
            t_m = solve_t_of_m(dec, ctrl)
            zeta = evaluate_estimator(dec, cfg.p, t_m, name, qtol=cfg.qtol).value
            ac1 = accuracy_criterion_1(dec, cfg.p, t_m)
            ac2 = accuracy_criterion_2(dec, cfg.p, t_m)
            err_per_t = None
            if cfg.true_error:
                y = phi_action(dec.effective_hessenberg(), cfg.p, t_m, dec.beta)
                u = dec.V[:, : dec.m] @ y
                ref = dense_reference_phi(A_dense, setup.v, t_m, cfg.p)
                err_per_t = float(np.linalg.norm(u - ref) / t_m)
            rows.append(ResultRow(
                m=m, estimator=name, t_m=t_m, zeta=zeta, true_error_per_t=err_per_t,
                ac_est_1=ac1, ac_est_2=ac2, matvecs=dec.m,
                wall_s=time.perf_counter() - t_start,
            ))
    return rows


def write_results_csv(rows: list[ResultRow], path: str) -> None:
    """Fixed, versioned schema; floats written with repr for exact round-trip."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            err = "" if r.true_error_per_t is None else repr(r.true_error_per_t)
            fh.write(
                f"{r.m},{r.estimator},{r.t_m!r},{r.zeta!r},{err},"
                f"{r.ac_est_1!r},{r.ac_est_2!r},{r.matvecs}\n"
            )


def read_results_csv(path: str) -> list[ResultRow]:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        version = fh.readline().strip()
        if version != CSV_VERSION_LINE:
            raise ValueError(f"unknown results schema {version!r}")
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError("unexpected results header")
        for line in fh:
            m, est, t_m, zeta, err, ac1, ac2, mv = line.rstrip("\n").split(",")
            rows.append(ResultRow(
                m=int(m), estimator=est, t_m=float(t_m), zeta=float(zeta),
                true_error_per_t=None if err == "" else float(err),
                ac_est_1=float(ac1), ac_est_2=float(ac2), matvecs=int(mv),
            ))
    return rows


def emit_defect_trace(cfg: ExperimentConfig, m: int, t_grid, path: str) -> str:
    """CSV of (t, |delta(t)|, truncated K=2 prediction) over a time grid.

    Supports the special starting-vector cases (weighted eigenvector
    combinations) through ``cfg.start``.
    """
    setup = build_problem(cfg)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or np.any(t_grid <= 0):
        raise ValueError("t_grid must be nonempty with positive entries")
    dec = decompose_problem(setup, m, OrthPolicy(scheme=cfg.orth))
    ns = NodeSet(dec.ritz(), cfg.p)
    log_pref = math.log(dec.beta) + dec.log_gamma
    with open(path, "w", encoding="ascii") as fh:
        fh.write(TRACE_VERSION_LINE + "\n")
        fh.write(TRACE_HEADER + "\n")
        for t in t_grid:
            log_d = defect_log_abs(dec, cfg.p, float(t))
            pred = log_pref + log_asymptotic_defect_norm(ns, float(t), 2)
            fh.write(f"{float(t)!r},{_exp_or_zero(log_d)!r},{_exp_or_zero(pred)!r}\n")
    return path


def _exp_or_zero(logx: float) -> float:
    if logx == -math.inf:
        return 0.0
    return math.exp(logx) if logx < 709 else math.inf


def load_config(path: str) -> ExperimentConfig:
    """Read an ExperimentConfig from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    for key in ("m_grid", "estimators"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return ExperimentConfig(**raw)
