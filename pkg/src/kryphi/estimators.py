"""Defect-based a-posteriori error bounds and estimates for Krylov propagators.

The scalar defect delta_{p,m}(t) = beta e_m^* t^p phi_p(t H_m) e_1 drives an
integral representation of the propagator error; in the dissipative case
(mu_2(A) <= 0) the error norm is bounded by the defect integral

    L_{p,m}(t) = h_{m+1,m} t^{-p} * integral_0^t |delta_{p,m}(s)| ds.

This module provides the defect, an adaptive quadrature for L, three proven
upper bounds on the error norm (real-part, real-spectrum, factorial), two
quadrature-style estimates (generalized residual and effective order), the
two accuracy criteria that predict when the closed-form bounds go slack, and
the trace formulas for the expansion coefficients rho_1, rho_2.

All magnitudes are carried in log space alongside the plain values: the
bound expressions contain gamma_m = prod h_{j+1,j} and t^m / (m+p)!, both of
which overflow or underflow in double precision well inside the parameter
range of interest.

Skew-Hermitian problems A = sigma B (sigma = +-i, B Hermitian) enter through
the ``sigma`` field of the decomposition: matrix formulations use sigma * H
and node formulations use nodes sigma * ritz(H) with the real gamma_m of the
underlying Lanczos recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import avg_var_stats
from .krylov import KrylovDecomposition
from .quadrature import adaptive_gauss_kronrod
from .smalldense import NodeSet, corner_phi, dd_exp_scaled, phi_action

__all__ = [
    "ErrorEstimate",
    "DefectEvaluation",
    "DefectIntegral",
    "EstimatorUnavailableError",
    "ESTIMATOR_NAMES",
    "PROVEN_KINDS",
    "defect",
    "defect_log_abs",
    "evaluate_defect",
    "defect_integral_quadrature",
    "quadrature_estimate",
    "bound_real_part",
    "bound_exact_real",
    "bound_factorial",
    "est_generalized_residual",
    "est_effective_order",
    "accuracy_criterion_1",
    "accuracy_criterion_2",
    "rho12_from_traces",
    "evaluate_estimator",
]

PROVEN_KINDS = frozenset(
    {"bound_real_part", "bound_exact_real", "bound_factorial", "quadrature_oracle"}
)
_ALL_KINDS = PROVEN_KINDS | {"est_generalized_residual", "est_effective_order"}

#: stable external names (CLI, config files, result tables)
ESTIMATOR_NAMES = {
    "real-part-bound": "bound_real_part",
    "real-spectrum-bound": "bound_exact_real",
    "factorial-bound": "bound_factorial",
    "gen-residual": "est_generalized_residual",
    "eff-order": "est_effective_order",
    "quadrature": "quadrature_oracle",
}


class EstimatorUnavailableError(RuntimeError):
    """An estimator's defining expression is undefined at this (t, p)."""


@dataclass(frozen=True)
class ErrorEstimate:
    """A tagged error-norm estimate zeta_{p,m}(t).

    ``is_proven_bound`` is true exactly for the three closed-form bounds and
    the quadrature oracle (which bounds the error up to quadrature accuracy).
    ``log_value`` stays finite and meaningful where ``value`` has underflowed
    to zero.
    """

    kind: str
    value: float
    log_value: float
    is_proven_bound: bool
    t: float
    p: int
    m: int

    def __post_init__(self):
        if self.kind not in _ALL_KINDS:
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if self.is_proven_bound != (self.kind in PROVEN_KINDS):
            raise ValueError(f"is_proven_bound inconsistent for kind {self.kind!r}")
        if self.value < 0:
            raise ValueError("estimate value must be nonnegative")


@dataclass(frozen=True)
class DefectEvaluation:
    """delta_{p,m}(t) together with the Ritz data the bounds consume."""

    dec: KrylovDecomposition
    p: int
    t: float
    value: complex
    nodes: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return self.nodes.real

    @property
    def eta(self) -> np.ndarray:
        return self.nodes.imag


@dataclass(frozen=True)
class DefectIntegral:
    """Adaptive quadrature value of L_{p,m}(t) with convergence metadata."""

    value: float
    error_estimate: float
    converged: bool
    nevals: int


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _estimate(kind: str, log_value: float, t: float, p: int, m: int) -> ErrorEstimate:
    value = math.exp(log_value) if log_value < 709 else math.inf
    return ErrorEstimate(
        kind=kind,
        value=value,
        log_value=log_value,
        is_proven_bound=kind in PROVEN_KINDS,
        t=t,
        p=p,
        m=m,
    )


# ---------------------------------------------------------------------------
# the defect
# ---------------------------------------------------------------------------

def defect(dec: KrylovDecomposition, p: int, t: float) -> complex:
    """delta_{p,m}(t) = beta e_m^* t^p phi_p(t sigma H) e_1 via the corner route."""
    return corner_phi(dec.effective_hessenberg(), p, t, dec.beta)


def defect_log_abs(dec: KrylovDecomposition, p: int, t: float) -> float:
    """log |delta_{p,m}(t)| through the divided-difference formulation.

    Equals log(beta gamma_m |exp_t[nodes, 0_p]|); robust where the plain
    corner value underflows.
    """
    if t == 0.0:
        return 0.0 if (dec.m == 1 and p == 0) else -math.inf
    mant, log_scale = dd_exp_scaled(NodeSet(dec.ritz(), p).padded, t)
    if mant == 0.0:
        return -math.inf
    return _log(dec.beta) + dec.log_gamma + math.log(abs(mant)) + log_scale


def evaluate_defect(dec: KrylovDecomposition, p: int, t: float) -> DefectEvaluation:
    return DefectEvaluation(dec=dec, p=p, t=t, value=defect(dec, p, t), nodes=dec.ritz())


def defect_integral_quadrature(
    dec: KrylovDecomposition, p: int, t: float, qtol: float = 1e-3
) -> DefectIntegral:
    """L_{p,m}(t) by adaptive Gauss-Kronrod on |delta_{p,m}(s)|.

    The integrand is piecewise smooth; intervals are pre-split at detected
    near-zeros to tame the oscillatory cases.  Hitting the subdivision limit
    returns the best value flagged ``converged=False``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if qtol <= 0:
        raise ValueError("qtol must be positive")
    Heff = dec.effective_hessenberg()
    beta = dec.beta

    def integrand(s: float) -> float:
        return abs(corner_phi(Heff, p, s, beta))

    res = adaptive_gauss_kronrod(integrand, 0.0, t, rtol=qtol)
    scale = dec.h_next / t**p
    return DefectIntegral(
        value=scale * res.value,
        error_estimate=scale * res.error_estimate,
        converged=res.converged,
        nevals=res.nevals,
    )


def quadrature_estimate(
    dec: KrylovDecomposition, p: int, t: float, qtol: float = 1e-3
) -> ErrorEstimate:
    """The defect integral packaged as the near-exact reference estimate."""
    L = defect_integral_quadrature(dec, p, t, qtol)
    return _estimate("quadrature_oracle", _log(L.value), t, p, dec.m)


# ---------------------------------------------------------------------------
# proven upper bounds (dissipative case mu_2(A) <= 0, caller-asserted)
# ---------------------------------------------------------------------------

def bound_real_part(dec: KrylovDecomposition, p: int, t: float) -> ErrorEstimate:
    """zeta = beta h_{m+1,m} gamma_m t (phi_{p+1})_t[xi_1..xi_m].

    Divided differences over the real parts of the Ritz values, evaluated as
    gamma_m exp_t[xi, 0_{p+1}] with log-gamma recombination.  Tight when the
    Ritz values sit close to the real axis.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return _estimate("bound_real_part", -math.inf, t, p, dec.m)
    xi = dec.ritz().real
    mant, log_scale = dd_exp_scaled(np.concatenate([xi, np.zeros(p + 1)]), t)
    val = max(mant.real, 0.0)
    log_zeta = (
        _log(dec.beta) + _log(dec.h_next) + dec.log_gamma
        - p * math.log(t) + _log(val) + log_scale
    )
    return _estimate("bound_real_part", log_zeta, t, p, dec.m)


def bound_exact_real(dec: KrylovDecomposition, p: int, t: float) -> ErrorEstimate:
    """zeta = beta h_{m+1,m} t (e_m^* phi_{p+1}(tH) e_1): exact L for real spectra.

    Only defined when the spectrum of sigma H is numerically real; otherwise
    rejected.  One corner evaluation at order p + 1.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    nodes = dec.ritz()
    radius = float(np.abs(nodes).max())
    if radius > 0 and float(np.abs(nodes.imag).max()) > 1e-10 * radius:
        raise ValueError("spectrum is not numerically real")
    if t == 0.0:
        return _estimate("bound_exact_real", -math.inf, t, p, dec.m)
    corner = corner_phi(dec.effective_hessenberg(), p + 1, t, dec.beta)
    log_zeta = _log(dec.h_next) - p * math.log(t) + _log(abs(corner))
    return _estimate("bound_exact_real", log_zeta, t, p, dec.m)


def bound_factorial(
    dec: KrylovDecomposition, p: int, t: float, xi_max: float = 0.0
) -> ErrorEstimate:
    """zeta = beta h_{m+1,m} gamma_m t^m e^(t xi_max) / (m+p)!, in log space.

    Cheapest of the bounds.  xi_max must be 0 for p >= 1 and nonpositive for
    p = 0 (use the largest real Ritz part when it is nonpositive).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if xi_max > 0:
        raise ValueError("xi_max must be nonpositive")
    if p >= 1 and xi_max != 0.0:
        raise ValueError("xi_max must be 0 for p >= 1")
    if t == 0.0:
        return _estimate("bound_factorial", -math.inf, t, p, dec.m)
    m = dec.m
    log_zeta = (
        _log(dec.beta) + _log(dec.h_next) + dec.log_gamma
        + m * math.log(t) + t * xi_max - math.lgamma(m + p + 1)
    )
    return _estimate("bound_factorial", log_zeta, t, p, dec.m)


# ---------------------------------------------------------------------------
# quadrature-style estimates (not proven bounds in general)
# ---------------------------------------------------------------------------

def est_generalized_residual(dec: KrylovDecomposition, p: int, t: float) -> ErrorEstimate:
    """Right-endpoint rectangle rule: zeta = h_{m+1,m} t^(1-p) |delta_{p,m}(t)|.

    An upper bound whenever |delta| is nondecreasing on [0, t], an
    overestimate by the factor m + p as t -> 0, and a possible underestimate
    for oscillatory defects.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    log_zeta = _log(dec.h_next) + (1 - p) * math.log(t) + defect_log_abs(dec, p, t)
    return _estimate("est_generalized_residual", log_zeta, t, p, dec.m)


def _effective_order_computable(dec: KrylovDecomposition, p: int, t: float) -> float:
    """rho(t) from Hessenberg entries / phi-vector component ratios."""
    H = dec.effective_hessenberg()
    m = dec.m
    y = phi_action(H, p, t, dec.beta)
    ym = y[m - 1]
    if ym == 0.0:
        raise EstimatorUnavailableError("phi-vector corner component vanished")
    if p == 0:
        rho = H[m - 1, m - 1]
        if m > 1:
            rho = rho + H[m - 1, m - 2] * y[m - 2] / ym
        return t * float(np.real(rho))
    y_prev = phi_action(H, p - 1, t, dec.beta)
    return float(np.real(y_prev[m - 1] / ym))


def est_effective_order(dec: KrylovDecomposition, p: int, t: float) -> ErrorEstimate:
    """zeta = h_{m+1,m} t^(1-p) |delta_{p,m}(t)| / (rho(t) + 1).

    rho(t) is the computable effective order; it starts at m + p - 1 for
    t -> 0, so this refines the rectangle rule by up to that factor.  Raises
    ``EstimatorUnavailableError`` when the defining ratio degenerates.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    rho = _effective_order_computable(dec, p, t)
    if rho + 1.0 <= 0.0:
        raise EstimatorUnavailableError(f"effective order rho = {rho} leaves no valid weight")
    log_zeta = (
        _log(dec.h_next) + (1 - p) * math.log(t)
        + defect_log_abs(dec, p, t) - math.log(rho + 1.0)
    )
    return _estimate("est_effective_order", log_zeta, t, p, dec.m)


# ---------------------------------------------------------------------------
# accuracy criteria and trace formulas
# ---------------------------------------------------------------------------

def accuracy_criterion_1(dec: KrylovDecomposition, p: int, t: float) -> float:
    """var_p(eta) (m+p) t^2 / (2 (m+p+1)(m+p+2)).

    Relative slack of the real-part bound against the defect integral;
    values above ~0.1 suggest switching to a quadrature estimate.
    """
    _, _, var_eta = avg_var_stats(NodeSet(dec.ritz(), p))
    mp = dec.m + p
    return var_eta * mp * t**2 / (2.0 * (mp + 1) * (mp + 2))


def accuracy_criterion_2(dec: KrylovDecomposition, p: int, t: float) -> float:
    """|rho_1 (m+p) t / (m+p+1) + (rho_1^2 + rho_2) (m+p) t^2 / (2 (m+p+2))|.

    Relative slack of the factorial bound; computed from Hessenberg traces,
    no eigensolve needed.
    """
    rho1, rho2 = rho12_from_traces(dec.effective_hessenberg(), p)
    mp = dec.m + p
    return abs(rho1 * mp * t / (mp + 1) + (rho1**2 + rho2) * mp * t**2 / (2.0 * (mp + 2)))


def rho12_from_traces(H: np.ndarray, p: int) -> tuple[float, float]:
    """Leading effective-order coefficients from Hessenberg entries.

    S_1 = trace(H); S_2 = trace(H^2) collapses to diagonal squares plus twice
    the subdiagonal-superdiagonal products thanks to the Hessenberg profile.
    """
    H = np.asarray(H)
    m = H.shape[0]
    d = np.diag(H)
    S1 = complex(d.sum())
    S2 = complex((d**2).sum())
    if m > 1:
        S2 += 2.0 * complex((np.diag(H, -1) * np.diag(H, 1)).sum())
    mp = m + p
    rho1 = S1.real / mp
    rho2 = (S1.imag**2 - S1.real**2) / mp**2 + (S1**2 + S2).real / (mp * (mp + 1))
    return float(rho1), float(rho2)


# ---------------------------------------------------------------------------
# dispatch by stable name
# ---------------------------------------------------------------------------

def evaluate_estimator(
    dec: KrylovDecomposition,
    p: int,
    t: float,
    name: str,
    qtol: float = 1e-3,
) -> ErrorEstimate:
    """Evaluate the estimator with external name ``name`` at time ``t``.

    The factorial bound receives xi_max = max Re(ritz) when p = 0 and that
    maximum is nonpositive, else the xi_max = 0 fallback.
    """
    kind = ESTIMATOR_NAMES.get(name)
    if kind is None:
        raise ValueError(f"unknown estimator name {name!r}")
    if kind == "bound_real_part":
        return bound_real_part(dec, p, t)
    if kind == "bound_exact_real":
        return bound_exact_real(dec, p, t)
    if kind == "bound_factorial":
        xi_max = 0.0
        if p == 0:
            top = float(dec.ritz().real.max())
            xi_max = top if top <= 0.0 else 0.0
        return bound_factorial(dec, p, t, xi_max=xi_max)
    if kind == "est_generalized_residual":
        return est_generalized_residual(dec, p, t)
    if kind == "est_effective_order":
        return est_effective_order(dec, p, t)
    return quadrature_estimate(dec, p, t, qtol=qtol)
