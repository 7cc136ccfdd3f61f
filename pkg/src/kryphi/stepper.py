"""Step-size selection and the restarted substepping propagator.

For a fixed Krylov dimension m, the admissible step t(m) is the smallest time
where the chosen error estimate crosses the per-unit-step tolerance,
zeta(t) = t * tol.  ``propagate`` repeatedly builds a fresh decomposition
from the current state, advances by min(t(m), remaining time), and applies
the lucky-breakdown stopping rule on the fly.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimatorUnavailableError, evaluate_estimator
from .krylov import KrylovDecomposition, OrthPolicy, decompose
from .linops import LinearOperator
from .smalldense import phi_action

__all__ = [
    "StepControl",
    "SubStep",
    "PropagationReport",
    "StepUnboundedError",
    "solve_t_of_m",
    "solve_t_of_m_detailed",
    "lucky_breakdown_check",
    "propagate",
]

_BISECT_RTOL = 1e-6
_WINDOW_OCTAVES = 40  # scan [2^-40, 2^40] * t0, i.e. twelve decades each way


class StepUnboundedError(RuntimeError):
    """The estimate never reaches t * tol inside the search window."""


@dataclass(frozen=True)
class StepControl:
    """Per-unit-step tolerance and propagation parameters."""

    tol: float
    t_final: float = 1.0
    m_max: int = 30
    estimator: str = "real-part-bound"
    p: int = 0
    qtol: float = 1e-3
    policy: OrthPolicy = OrthPolicy()

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.m_max < 2:
            raise ValueError("m_max must be at least 2")
        if self.p < 0:
            raise ValueError("p must be nonnegative")


@dataclass(frozen=True)
class SubStep:
    index: int
    t: float
    m: int
    zeta: float
    estimator: str
    lucky: bool = False
    breakdown: bool = False


@dataclass
class PropagationReport:
    """Substep bookkeeping for one propagation run."""

    substeps: list[SubStep]
    matvecs: int
    u: np.ndarray
    t_final: float
    tol: float
    p: int

    @property
    def t_consumed(self) -> float:
        return math.fsum(s.t for s in self.substeps)

    def to_json(self) -> str:
        payload = {
            "t_final": self.t_final,
            "tol": self.tol,
            "p": self.p,
            "matvecs": self.matvecs,
            "n_substeps": len(self.substeps),
            "substeps": [dataclasses.asdict(s) for s in self.substeps],
            "final_norm": float(np.linalg.norm(self.u)),
        }
        return json.dumps(payload, indent=2)


def lucky_breakdown_check(beta: float, h_next: float, p: int, tol: float) -> bool:
    """Stopping inequality beta h_{k+1,k} / (p+1)! <= tol.

    When it holds, the current subspace approximates phi_p(tA)v with error
    per unit step below tol for every t (dissipative case).
    """
    return beta * h_next / math.factorial(p + 1) <= tol


def _log_zeta(dec, ctrl: StepControl, t: float) -> float:
    est = evaluate_estimator(dec, ctrl.p, t, ctrl.estimator, qtol=ctrl.qtol)
    return est.log_value


def solve_t_of_m_detailed(dec: KrylovDecomposition, ctrl: StepControl) -> tuple[float, bool]:
    """Smallest t with zeta(t) = t * tol, plus a second-crossing flag.

    Works on g(t) = log zeta(t) - log t - log tol: geometric scan upward from
    t0 = 1 / ||H|| until the sign flips, then log-space bisection to 1e-6
    relative.  The flag reports another sign change within 10x of the root
    (possible for non-monotone quadrature-based estimates).
    """
    Heff = dec.effective_hessenberg()
    hnorm = float(np.linalg.norm(Heff, 2)) if dec.m > 1 else float(abs(Heff[0, 0]))
    t0 = 1.0 / hnorm if hnorm > 0 else 1.0
    log_tol = math.log(ctrl.tol)

    def g(t: float) -> float:
        # an estimator whose defining ratio has underflowed at small t reads
        # as "far below tolerance", not as a hard failure
        try:
            return _log_zeta(dec, ctrl, t) - math.log(t) - log_tol
        except EstimatorUnavailableError:
            return -math.inf

    t_prev = t0 * 2.0**(-_WINDOW_OCTAVES)
    g_prev = g(t_prev)
    if g_prev >= 0.0:
        raise ValueError(
            "estimate already exceeds t * tol at the lower search bound; "
            "no admissible step for this subspace"
        )
    bracket = None
    for j in range(-_WINDOW_OCTAVES + 1, _WINDOW_OCTAVES + 1):
        t_cur = t0 * 2.0**j
        g_cur = g(t_cur)
        if g_cur >= 0.0:
            bracket = (t_prev, t_cur)
            break
        t_prev, g_prev = t_cur, g_cur
    if bracket is None:
        raise StepUnboundedError("estimate stays below t * tol across the search window")
    lo, hi = bracket
    while hi - lo > _BISECT_RTOL * lo:
        mid = math.sqrt(lo * hi)
        if g(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    root = hi
    second = False
    for t_probe in np.geomspace(root * 1.1, root * 10.0, 8):
        if g(float(t_probe)) < 0.0:
            second = True
            break
    return root, second


def solve_t_of_m(dec: KrylovDecomposition, ctrl: StepControl) -> float:
    return solve_t_of_m_detailed(dec, ctrl)[0]


def _counting(op: LinearOperator) -> tuple[LinearOperator, list[int]]:
    counter = [0]
    base = op.apply

    def apply(x):
        counter[0] += 1
        return base(x)

    return dataclasses.replace(op, apply=apply), counter


def propagate(op: LinearOperator, v: np.ndarray, ctrl: StepControl) -> PropagationReport:
    """Advance to t_final by restarted Krylov substeps under zeta <= t * tol.

    Only dissipative operators (mu_2 <= 0) are accepted.  Each substep builds
    a fresh decomposition from the current state; the step is min(t(m),
    remaining).  For p >= 1 the first substep applies the phi_p propagator
    from the given data, and the remainder is continued with the exponential
    (p = 0) propagator, i.e. the result approximates
    e^{(t_final - t_1) A} phi_p(t_1 A) v.

    A lucky breakdown (or a numerical breakdown of the basis) finishes the
    run in a single step since the subspace is then exact to tolerance.  If
    the configured estimator is unavailable at some substep the fallback
    ladder gen-residual -> factorial-bound is used and recorded.
    """
    if op.mu2_estimate > 1e-10 * max(1.0, op.norm2_estimate):
        raise ValueError(
            f"propagate requires mu_2(A) <= 0, estimated {op.mu2_estimate:.3e}"
        )
    wrapped, counter = _counting(op)
    m = min(ctrl.m_max, op.n)
    remaining = ctrl.t_final
    u = np.asarray(v)
    substeps: list[SubStep] = []
    first = True
    for index in range(10000):
        if remaining <= 0.0:
            break
        p_k = ctrl.p if first else 0
        dec = decompose(wrapped, u, m, ctrl.policy, stop_tol=ctrl.tol, stop_p=p_k)
        ctrl_k = dataclasses.replace(ctrl, p=p_k)
        est_name = ctrl.estimator
        if dec.lucky or dec.breakdown:
            t_k = remaining
            zeta_k = dec.beta * dec.h_next / math.factorial(p_k + 1)
            est_name = "lucky-stop"
        else:
            zeta_k = t_k = None
            for candidate in _fallback_ladder(ctrl.estimator):
                try:
                    t_cand = min(
                        solve_t_of_m(dec, dataclasses.replace(ctrl_k, estimator=candidate)),
                        remaining,
                    )
                except EstimatorUnavailableError:
                    continue
                except StepUnboundedError:
                    t_cand = remaining
                try:
                    zeta_k, t_k = _admissible_step(dec, ctrl_k, candidate, t_cand)
                except EstimatorUnavailableError:
                    continue
                est_name = candidate
                break
            if t_k is None:
                raise EstimatorUnavailableError("all estimators in the fallback ladder failed")
        y = phi_action(dec.effective_hessenberg(), p_k, t_k, dec.beta)
        u = dec.V[:, : dec.m] @ y
        substeps.append(SubStep(index=index, t=t_k, m=dec.m, zeta=zeta_k,
                                estimator=est_name, lucky=dec.lucky, breakdown=dec.breakdown))
        remaining -= t_k
        if remaining <= 1e-15 * ctrl.t_final:
            remaining = 0.0
        first = False
    else:
        raise RuntimeError("substep limit reached")
    return PropagationReport(
        substeps=substeps, matvecs=counter[0], u=u,
        t_final=ctrl.t_final, tol=ctrl.tol, p=ctrl.p,
    )


def _fallback_ladder(primary: str) -> list[str]:
    ladder = [primary]
    for name in ("gen-residual", "factorial-bound"):
        if name != primary:
            ladder.append(name)
    return ladder


def _admissible_step(dec, ctrl_k: StepControl, est_name: str, t_k: float) -> tuple[float, float]:
    """Record zeta at the final step, halving if a non-monotone estimate pops over."""
    for _ in range(80):
        zeta_k = evaluate_estimator(dec, ctrl_k.p, t_k, est_name, qtol=ctrl_k.qtol).value
        if zeta_k <= t_k * ctrl_k.tol * (1.0 + 1e-9):
            return zeta_k, t_k
        t_k *= 0.5
    raise RuntimeError("could not find an admissible substep")
