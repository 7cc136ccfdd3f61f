"""Dense m x m kernels: exp, phi actions, divided differences, Ritz values.

Everything here operates on the small Krylov-side matrices.  phi-function
actions and the scalar corner value go through augmented Hessenberg matrices,
so a single matrix exponential evaluation covers any p.  Divided differences
of the exponential are evaluated through the Opitz formula (corner of the
exponential of a bidiagonal node matrix); the recursive difference quotient
is numerically unusable for close nodes and exists only as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "AugmentedHessenberg",
    "NodeSet",
    "expm",
    "phi_action",
    "corner_phi",
    "divided_differences_exp",
    "dd_exp_scaled",
    "ritz_values",
]

_DENSE_GUARD = 4000


def expm(M: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring Pade matrix exponential with finite-value guards.

    Overflow is surfaced as an error rather than silently saturating.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expm requires a square matrix")
    if M.shape[0] > _DENSE_GUARD:
        raise ValueError(f"dense guard exceeded: k={M.shape[0]} > {_DENSE_GUARD}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    E = scipy.linalg.expm(M)
    if not np.all(np.isfinite(E)):
        raise OverflowError("overflow in matrix exponential")
    return E


def _graded_expm(M: np.ndarray, path_len: int) -> np.ndarray:
    """exp(M) with entries coefficient-exact through order ``path_len``.

    Corner entries of Hessenberg/bidiagonal exponentials are sums over paths
    of length >= path_len whose magnitude sits far below ||exp(M)||.  A Pade
    approximant of degree q reproduces the series only through order q, so
    for small ||M|| its corner carries wrong high-order coefficients and the
    relative accuracy of those entries is destroyed.  Here: scale to
    ||M|| <= 1, sum the Taylor polynomial past ``path_len`` (geometric tail
    below 1e-16 relative to every retained path order), square back up.
    """
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    norm = np.linalg.norm(M, 1)
    s = 0 if norm <= 1.0 else int(math.ceil(math.log2(norm)))
    A = M / 2**s
    k = M.shape[0]
    nterms = min(path_len, k) + 16
    T = np.eye(k, dtype=np.result_type(M.dtype, np.float64))
    term = T.copy()
    for j in range(1, nterms + 1):
        term = term @ A / j
        T += term
    for _ in range(s):
        T = T @ T
    if not np.all(np.isfinite(T)):
        raise OverflowError("overflow in matrix exponential")
    return T


@dataclass(frozen=True)
class AugmentedHessenberg:
    """Zero-padding augmentation [[H, 0], [e_1 e_m^*, J]] of an m x m Hessenberg.

    J is the p x p nilpotent lower shift, so the augmented matrix stays upper
    Hessenberg with positive subdiagonal whenever H has one, and its spectrum
    is spec(H) together with 0 of multiplicity p.  The (m+p, 1) corner of its
    exponential carries t^p e_m^* phi_p(tH) e_1.
    """

    base: np.ndarray
    p: int

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be nonnegative")

    @property
    def full(self) -> np.ndarray:
        H = np.asarray(self.base)
        m, p = H.shape[0], self.p
        out = np.zeros((m + p, m + p), dtype=np.result_type(H.dtype, np.float64))
        out[:m, :m] = H
        if p:
            out[m, m - 1] = 1.0
            for i in range(p - 1):
                out[m + i + 1, m + i] = 1.0
        return out


@dataclass(frozen=True)
class NodeSet:
    """Complex nodes plus a zero-padding count, e.g. (lambda_1..lambda_m, 0_p)."""

    nodes: np.ndarray
    pad: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.atleast_1d(np.asarray(self.nodes, dtype=complex)))
        if self.nodes.size == 0:
            raise ValueError("node list must be nonempty")
        if self.pad < 0:
            raise ValueError("padding count must be nonnegative")

    @property
    def m_eff(self) -> int:
        return self.nodes.size + self.pad

    @property
    def padded(self) -> np.ndarray:
        if self.pad == 0:
            return self.nodes
        return np.concatenate([self.nodes, np.zeros(self.pad, dtype=complex)])

    @property
    def xi(self) -> np.ndarray:
        return self.nodes.real

    @property
    def eta(self) -> np.ndarray:
        return self.nodes.imag


def _phi_augmented(H: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
    """[[H, W], [0, S]] whose exp's last column holds t^p phi_p(tH) w on top."""
    m = H.shape[0]
    dtype = np.result_type(H.dtype, w.dtype, np.float64)
    C = np.zeros((m + p, m + p), dtype=dtype)
    C[:m, :m] = H
    C[:m, m] = w
    for i in range(p - 1):
        C[m + i, m + i + 1] = 1.0
    return C


def phi_action(H: np.ndarray, p: int, t: float, beta: float) -> np.ndarray:
    """y_{p,m}(t) = beta * phi_p(tH) e_1 as a length-m vector.

    For p >= 1 the value is read off the last column of the exponential of an
    augmented matrix, which matches the scalar corner formulations exactly.
    """
    H = np.asarray(H)
    m = H.shape[0]
    if t < 0:
        raise ValueError("t must be nonnegative")
    if p < 0:
        raise ValueError("p must be nonnegative")
    if t == 0.0:
        y = np.zeros(m, dtype=np.result_type(H.dtype, np.float64))
        y[0] = beta / math.factorial(p)
        return y
    if p == 0:
        return beta * _graded_expm(t * H, m - 1)[:, 0]
    w = np.zeros(m, dtype=np.result_type(H.dtype, np.float64))
    w[0] = beta
    C = _phi_augmented(H, w, p)
    x = _graded_expm(t * C, m + p - 1)[:, m + p - 1]
    return x[:m] / t**p


def corner_phi(H: np.ndarray, p: int, t: float, beta: float) -> complex:
    """beta * e_{m+p}^* exp(t Htilde) e_1 = beta * t^p e_m^* phi_p(tH) e_1."""
    H = np.asarray(H)
    m = H.shape[0]
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return complex(beta) if (m == 1 and p == 0) else 0.0 + 0.0j
    full = AugmentedHessenberg(H, p).full
    return complex(beta * _graded_expm(t * full, m + p - 1)[m + p - 1, 0])


def dd_exp_scaled(nodes: np.ndarray, t: float) -> tuple[complex, float]:
    """exp_t[nodes] as (mantissa, log_scale) with value = mantissa * e^{log_scale}.

    Uses the dilation exp_t[mu] = t^{k-1} exp_1[t mu] and a real shift to the
    largest real part.  This keeps the Opitz corner entry well scaled, which
    matters twice: raw values of order t^{k-1}/(k-1)! underflow for large k,
    and the corner of exp(t Theta) loses all relative accuracy for small t
    because the absolute rounding level is set by the O(1) entries.
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=complex))
    k = nodes.size
    if t < 0:
        raise ValueError("t must be nonnegative")
    if k == 1:
        z = t * nodes[0]
        return complex(np.exp(z - z.real)), float(z.real)
    if t == 0.0:
        return 0.0 + 0.0j, 0.0
    z = t * nodes
    c = float(z.real.max())
    if np.all(z == z[0]):
        # fully confluent set: exp_t[c..c] = e^{tc} t^{k-1}/(k-1)! exactly; the
        # Opitz corner would drown in the absolute rounding of expm for k >~ 20
        phase = complex(np.exp(z[0] - c))
        return phase * math.exp(-math.lgamma(k)), (k - 1) * math.log(t) + c
    theta = np.diag(z - c)
    for i in range(k - 1):
        theta[i + 1, i] = 1.0
    mant = _graded_expm(theta, k - 1)[k - 1, 0]
    return complex(mant), (k - 1) * math.log(t) + c


def divided_differences_exp(ns: NodeSet, t: float) -> complex:
    """Divided differences exp_t[lambda_1, ..., lambda_m, 0_p] of z -> e^{tz}.

    Confluent (repeated) nodes are handled automatically by the matrix
    formulation.  May underflow to zero for many nodes at small t; use
    ``dd_exp_scaled`` where the log magnitude is needed.
    """
    mant, log_scale = dd_exp_scaled(ns.padded, t)
    if mant == 0.0:
        return 0.0 + 0.0j
    return complex(mant * math.exp(log_scale))


def ritz_values(H: np.ndarray) -> np.ndarray:
    """Eigenvalues of H via the dense QR eigensolver, unordered."""
    H = np.asarray(H)
    try:
        return np.linalg.eigvals(H)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver did not converge: {exc}") from exc
