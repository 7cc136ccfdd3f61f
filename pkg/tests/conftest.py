"""Shared fixtures, independent oracles, and the acceptance summary hook."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from kryphi.krylov import KrylovDecomposition
from kryphi.linops import build_laplacian_1d, build_schrodinger_double_well, to_dense
from kryphi.linops import _augmented_full


# ---------------------------------------------------------------------------
# independent oracles (kept deliberately separate from the library routes)
# ---------------------------------------------------------------------------

def taylor_expm(M: np.ndarray, nterms: int = 50) -> np.ndarray:
    """Truncated exponential series; usable for ||M|| <= ~1."""
    out = np.eye(M.shape[0], dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(1, nterms):
        term = term @ M / k
        out = out + term
    return out


def phi_series(M: np.ndarray, p: int, nterms: int = 60) -> np.ndarray:
    """phi_p(M) by its power series; usable for ||M|| <= ~1."""
    out = np.zeros_like(M, dtype=complex)
    term = np.eye(M.shape[0], dtype=complex)
    for k in range(nterms):
        out = out + term / math.factorial(k + p)
        term = term @ M
    return out


def dd_exp_recursive(nodes, t: float) -> complex:
    """Recursive difference quotients of e^{tz}; only for well-separated nodes."""
    vals = [np.exp(t * complex(lam)) for lam in nodes]
    k = len(nodes)
    for level in range(1, k):
        vals = [
            (vals[i + 1] - vals[i]) / (nodes[i + level] - nodes[i])
            for i in range(k - level)
        ]
    return vals[0]


def random_hessenberg(rng, m: int, complex_entries: bool = True, subdiag_low: float = 0.1):
    """Upper Hessenberg with positive subdiagonal entries."""
    H = rng.standard_normal((m, m))
    if complex_entries:
        H = H + 1j * rng.standard_normal((m, m))
    H = np.triu(H, -1)
    for j in range(m - 1):
        H[j + 1, j] = abs(rng.standard_normal()) + subdiag_low
    return H


def structured_hessenberg(rng, m: int, upper_scale: float = 0.3, sub=(0.3, 1.0)):
    """Hessenberg suite whose exponential corners stay well conditioned.

    Moderate eigenvalue spread (so t = 10 does not drown the corner in the
    norm of the exponential) with O(1) subdiagonals (so gamma_m does not sink
    the corner at t = 0.1).
    """
    H = np.triu(upper_scale * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))))
    for j in range(m - 1):
        H[j + 1, j] = rng.uniform(*sub)
    return H


def dec_from_hessenberg(H, beta: float = 1.0, h_next: float = 0.5, sigma: complex = 1.0):
    """Synthetic decomposition around a prescribed Hessenberg matrix."""
    H = np.asarray(H)
    m = H.shape[0]
    sub = np.diag(H, -1).real
    if m > 1:
        log_gamma = float(np.sum(np.log(sub))) if (sub > 0).all() else -math.inf
    else:
        log_gamma = 0.0
    return KrylovDecomposition(
        V=np.eye(m, m + 1), H=H, beta=beta, h_next=h_next, m=m,
        log_gamma=log_gamma, sigma=sigma,
    )


def random_dissipative(rng, n: int, margin: float = 0.05):
    """Dense matrix with mu_2(A) <= -margin, by shifting a random matrix."""
    A = rng.standard_normal((n, n)) / math.sqrt(n)
    mu2 = scipy.linalg.eigvalsh(0.5 * (A + A.T)).max()
    return A - (mu2 + margin) * np.eye(n)


def phi_oracle_dyadic(A_dense, v, p: int, t_base: float):
    """phi_p(tA)v at t = t_base * {1/4, 1/2, 1} from one matrix exponential.

    Exponentiates the augmented matrix once at t_base/4 and reaches the other
    times by repeated application, exact by the semigroup property of the
    augmented system.
    """
    A = np.asarray(A_dense)
    n = A.shape[0]
    if p == 0:
        C, x = A, np.asarray(v).astype(np.result_type(A.dtype, np.asarray(v).dtype))
    else:
        C = _augmented_full(A, np.asarray(v), p)
        x = np.zeros(n + p, dtype=C.dtype)
        x[-1] = 1.0
    M = scipy.linalg.expm(C * (t_base / 4.0))
    out = {}
    x = M @ x
    for frac, reps in ((0.25, 0), (0.5, 1), (1.0, 2)):
        for _ in range(reps):
            x = M @ x
        t = t_base * frac
        out[frac] = x[:n].copy() if p == 0 else x[:n] / t**p
    return out


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def laplacian100():
    return build_laplacian_1d(100)


@pytest.fixture(scope="session")
def laplacian400():
    return build_laplacian_1d(400)


@pytest.fixture(scope="session")
def laplacian400_dense(laplacian400):
    return to_dense(laplacian400)


@pytest.fixture(scope="session")
def schrodinger400():
    return build_schrodinger_double_well(400)


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion
# ---------------------------------------------------------------------------

_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance.append((name, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(_acceptance):
            terminalreporter.write_line(f"{status}  {name}")
