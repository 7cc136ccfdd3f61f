"""Arnoldi and Lanczos construction of the Krylov basis and Hessenberg matrix.

The decomposition satisfies A V_m = V_m H_m + h_{m+1,m} v_{m+1} e_m^* up to a
floating-point residual.  Instead of asserting theoretical round-off
constants, the module exposes two computable diagnostics:
``decomposition_residual`` (the norm of the decomposition defect) and
``orthogonality_level`` (||V*V - I||).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linops import LinearOperator, matvec, scale_operator

__all__ = [
    "OrthPolicy",
    "KrylovDecomposition",
    "arnoldi",
    "lanczos",
    "decompose",
    "decomposition_residual",
    "orthogonality_level",
]

_SCHEMES = {"mgs": 1, "mgs_reorth": 2, "full_reorth": 3}


@dataclass(frozen=True)
class OrthPolicy:
    """Orthogonalization scheme and relative breakdown threshold.

    ``mgs`` is one modified Gram-Schmidt pass, ``mgs_reorth`` adds one
    reorthogonalization sweep (the default), ``full_reorth`` adds two.
    ``breakdown_tol`` is relative to the operator's spectral norm estimate.
    """

    scheme: str = "mgs_reorth"
    breakdown_tol: float = 1e-14

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown orthogonalization scheme {self.scheme!r}")
        if self.breakdown_tol <= 0:
            raise ValueError("breakdown_tol must be positive")


@dataclass(eq=False)
class KrylovDecomposition:
    """Output of ``arnoldi``/``lanczos``: (V_{m+1}, H_m, beta, h_{m+1,m}, gamma_m).

    ``V`` has m+1 columns (the last being the next basis vector, zero after a
    hard breakdown).  Subdiagonal entries of ``H`` are real positive; their
    product gamma_m is kept in log form (``log_gamma``) since it spans
    hundreds of orders of magnitude for m beyond ~30.

    ``sigma`` records a scalar dilation: the decomposition was computed for
    an operator B, while the operator of interest is sigma * B.  This is how
    skew-Hermitian problems A = -iB reuse the real Lanczos recurrence; all
    downstream evaluations use sigma * H and nodes sigma * ritz(H).
    Instances are immutable by convention and safe to share across threads.
    """

    V: np.ndarray
    H: np.ndarray
    beta: float
    h_next: float
    m: int
    log_gamma: float
    breakdown: bool = False
    lucky: bool = False
    sigma: complex = 1.0
    _ritz: np.ndarray = field(default=None, repr=False)

    @property
    def gamma(self) -> float:
        """gamma_m = prod of subdiagonals; may overflow to inf, prefer log_gamma."""
        return math.exp(self.log_gamma) if self.log_gamma < 709 else math.inf

    def ritz(self) -> np.ndarray:
        """Eigenvalues of sigma * H (cached)."""
        if self._ritz is None:
            lam = np.linalg.eigvals(self.H)
            self._ritz = self.sigma * lam if self.sigma != 1.0 else lam
        return self._ritz

    def effective_hessenberg(self) -> np.ndarray:
        """sigma * H, the matrix the propagator actually exponentiates."""
        return self.H if self.sigma == 1.0 else self.sigma * self.H


def _lucky_triggered(beta: float, h: float, stop_p: int, stop_tol: float | None) -> bool:
    if stop_tol is None:
        return False
    return beta * h / math.factorial(stop_p + 1) <= stop_tol


def arnoldi(
    op: LinearOperator,
    v: np.ndarray,
    m: int,
    policy: OrthPolicy = OrthPolicy(),
    *,
    stop_tol: float | None = None,
    stop_p: int = 0,
) -> KrylovDecomposition:
    """Arnoldi iteration with modified Gram-Schmidt orthogonalization.

    Returns a decomposition of dimension m, or a truncated one flagged with
    ``breakdown=True`` if a subdiagonal falls below the relative breakdown
    threshold, or with ``lucky=True`` if ``stop_tol`` is given and the
    early-stopping inequality beta h_{k+1,k} / (p+1)! <= stop_tol holds.
    """
    v = np.asarray(v)
    beta = float(np.linalg.norm(v))
    if beta == 0.0:
        raise ValueError("starting vector must be nonzero")
    if not 1 <= m <= op.n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={op.n}")
    passes = _SCHEMES[policy.scheme]
    scale = op.norm2_estimate if op.norm2_estimate > 0 else 1.0

    probe = matvec(op, v)
    dtype = np.result_type(v.dtype, probe.dtype, np.float64)
    V = np.zeros((op.n, m + 1), dtype=dtype)
    H = np.zeros((m, m), dtype=dtype)
    V[:, 0] = v / beta

    log_gamma = 0.0
    for j in range(m):
        w = matvec(op, V[:, j]).astype(dtype, copy=False)
        for _ in range(passes):
            for i in range(j + 1):
                c = np.vdot(V[:, i], w)
                H[i, j] += c
                w = w - c * V[:, i]
        h = float(np.linalg.norm(w))
        # the tolerance-based stopping rule takes precedence over the hard
        # breakdown threshold whenever a tolerance is in force
        if h > 0.0 and _lucky_triggered(beta, h, stop_p, stop_tol):
            V[:, j + 1] = w / h
            return KrylovDecomposition(
                V=V[:, : j + 2], H=H[: j + 1, : j + 1], beta=beta, h_next=h,
                m=j + 1, log_gamma=log_gamma, lucky=True,
            )
        if h <= policy.breakdown_tol * scale:
            return KrylovDecomposition(
                V=V[:, : j + 2], H=H[: j + 1, : j + 1], beta=beta, h_next=h,
                m=j + 1, log_gamma=log_gamma, breakdown=True,
            )
        V[:, j + 1] = w / h
        if j < m - 1:
            H[j + 1, j] = h
            log_gamma += math.log(h)
    return KrylovDecomposition(V=V, H=H, beta=beta, h_next=h, m=m, log_gamma=log_gamma)


def lanczos(
    op: LinearOperator,
    v: np.ndarray,
    m: int,
    policy: OrthPolicy = OrthPolicy(),
    *,
    stop_tol: float | None = None,
    stop_p: int = 0,
) -> KrylovDecomposition:
    """Hermitian Lanczos three-term recurrence; H is real symmetric tridiagonal.

    Reorthogonalization sweeps beyond the three-term projection follow the
    policy but are not folded into H (it stays tridiagonal); their effect is
    visible in ``decomposition_residual``.  Skew-Hermitian problems A = iB or
    A = -iB are handled by running this on B and setting ``sigma``
    downstream, per ``decompose``.
    """
    if op.structure != "hermitian":
        raise ValueError("lanczos requires a hermitian operator")
    v = np.asarray(v)
    beta = float(np.linalg.norm(v))
    if beta == 0.0:
        raise ValueError("starting vector must be nonzero")
    if not 1 <= m <= op.n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={op.n}")
    passes = _SCHEMES[policy.scheme]
    scale = op.norm2_estimate if op.norm2_estimate > 0 else 1.0

    probe = matvec(op, v)
    dtype = np.result_type(v.dtype, probe.dtype, np.float64)
    V = np.zeros((op.n, m + 1), dtype=dtype)
    H = np.zeros((m, m))
    V[:, 0] = v / beta

    log_gamma = 0.0
    h = 0.0
    for j in range(m):
        w = matvec(op, V[:, j]).astype(dtype, copy=False)
        if j > 0:
            w = w - H[j - 1, j] * V[:, j - 1]
        alpha = float(np.real(np.vdot(V[:, j], w)))
        H[j, j] = alpha
        w = w - alpha * V[:, j]
        for _ in range(passes - 1):
            w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        h = float(np.linalg.norm(w))
        if h > 0.0 and _lucky_triggered(beta, h, stop_p, stop_tol):
            V[:, j + 1] = w / h
            return KrylovDecomposition(
                V=V[:, : j + 2], H=H[: j + 1, : j + 1], beta=beta, h_next=h,
                m=j + 1, log_gamma=log_gamma, lucky=True,
            )
        if h <= policy.breakdown_tol * scale:
            return KrylovDecomposition(
                V=V[:, : j + 2], H=H[: j + 1, : j + 1], beta=beta, h_next=h,
                m=j + 1, log_gamma=log_gamma, breakdown=True,
            )
        V[:, j + 1] = w / h
        if j < m - 1:
            H[j + 1, j] = h
            H[j, j + 1] = h
            log_gamma += math.log(h)
    return KrylovDecomposition(V=V, H=H, beta=beta, h_next=h, m=m, log_gamma=log_gamma)


def decompose(
    op: LinearOperator,
    v: np.ndarray,
    m: int,
    policy: OrthPolicy = OrthPolicy(),
    *,
    stop_tol: float | None = None,
    stop_p: int = 0,
) -> KrylovDecomposition:
    """Structure-dispatching front end.

    Hermitian operators go through ``lanczos``; skew-Hermitian operators
    A are rewritten as A = -i (iA) so the real Lanczos recurrence runs on the
    Hermitian matrix B = iA, with sigma = -i recorded on the decomposition;
    everything else uses ``arnoldi``.
    """
    if op.structure == "hermitian":
        return lanczos(op, v, m, policy, stop_tol=stop_tol, stop_p=stop_p)
    if op.structure == "skew_hermitian":
        B = scale_operator(op, 1j)
        dec = lanczos(B, v, m, policy, stop_tol=stop_tol, stop_p=stop_p)
        dec.sigma = -1j
        return dec
    return arnoldi(op, v, m, policy, stop_tol=stop_tol, stop_p=stop_p)


def decomposition_residual(dec: KrylovDecomposition, op: LinearOperator) -> float:
    """||A V_m - V_m H_m - h_{m+1,m} v_{m+1} e_m^*||_2, columnwise.

    ``op`` must be the operator the decomposition was built for (i.e. B, not
    sigma * B).  This is the computable stand-in for the round-off
    perturbation term of the decomposition.
    """
    m = dec.m
    Vm = dec.V[:, :m]
    R = np.column_stack([matvec(op, Vm[:, j]) for j in range(m)])
    R = R - Vm @ dec.H
    R[:, m - 1] -= dec.h_next * dec.V[:, m]
    return float(np.linalg.norm(R, 2))


def orthogonality_level(dec: KrylovDecomposition) -> float:
    """||V_{m+1}^* V_{m+1} - I||_2; zero for an exactly orthonormal basis."""
    V = dec.V
    if dec.breakdown:
        V = dec.V[:, : dec.m]  # the vector after a hard breakdown is null
    G = V.conj().T @ V
    return float(np.linalg.norm(G - np.eye(G.shape[0]), 2))
