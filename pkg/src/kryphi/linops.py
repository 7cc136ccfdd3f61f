"""Linear operators, test-problem generators, and the dense reference oracle.

This module holds the large-dimension side of the package: a thin immutable
operator wrapper with structure metadata, a CSR container with Matrix Market
I/O, the three standard test problems (1D Laplacian, 2D convection-diffusion,
Schroedinger double well), and ``dense_reference_phi``, the brute-force
evaluation of phi_p(tA)v used as the truth oracle in tests and benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    "LinearOperator",
    "SparseMatrixCSR",
    "MatrixMarketError",
    "matvec",
    "operator_from_matrix",
    "scale_operator",
    "to_dense",
    "build_laplacian_1d",
    "build_convection_diffusion_2d",
    "build_schrodinger_double_well",
    "laplacian_1d_eigenvector",
    "dense_reference_phi",
    "load_matrix_market",
    "save_matrix_market",
]

STRUCTURES = ("hermitian", "skew_hermitian", "general")

#: dimension guard for all dense brute-force work
DENSE_GUARD = 4000

# scaling target of the degree-13 Pade approximant; matrices are split so a
# single expm call stays below this 1-norm
_THETA_13 = 5.371920351148152


class MatrixMarketError(ValueError):
    """Raised on malformed or unsupported Matrix Market input."""


@dataclass(frozen=True)
class LinearOperator:
    """A dimension-n linear map with structure flags and norm metadata.

    ``apply`` must be linear and reentrant.  ``norm2_estimate`` is a power
    iteration estimate of the spectral norm; ``mu2_estimate`` estimates the
    logarithmic norm mu_2(A) = max spec((A + A*)/2).  Operators are immutable
    after construction and safe to share across threads.
    """

    n: int
    apply: Callable[[np.ndarray], np.ndarray]
    structure: str
    norm2_estimate: float
    mu2_estimate: float
    matrix: object = None  # optional scipy sparse / ndarray backing, used by oracles

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("operator dimension must be positive")
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")


def matvec(op: LinearOperator, x: np.ndarray) -> np.ndarray:
    """Apply ``op`` to the vector ``x`` with a dimension check."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != op.n:
        raise ValueError(f"dimension mismatch: operator is {op.n}, vector has shape {x.shape}")
    return op.apply(x)


@dataclass
class SparseMatrixCSR:
    """Square sparse matrix in compressed sparse row form.

    Offsets must be monotone nondecreasing, column indices must lie in
    [0, n), and the final offset equals nnz.  Violations raise ValueError
    at construction.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n: int
    _scipy: scipy.sparse.csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.data = np.asarray(self.data)
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("row offsets must have length n + 1")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be monotone nondecreasing")
        nnz = self.data.shape[0]
        if self.indices.shape[0] != nnz or self.indptr[-1] != nnz:
            raise ValueError("final offset must equal nnz")
        if nnz and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ValueError("column indices out of range")

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrixCSR":
        mat = scipy.sparse.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("only square matrices are supported")
        return cls(mat.indptr, mat.indices, mat.data, mat.shape[0])

    @classmethod
    def from_coo(cls, rows, cols, vals, n: int) -> "SparseMatrixCSR":
        coo = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
        return cls.from_scipy(coo.tocsr())

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        if self._scipy is None:
            self._scipy = scipy.sparse.csr_matrix(
                (self.data, self.indices, self.indptr), shape=(self.n, self.n)
            )
        return self._scipy

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ np.asarray(x)


def _norm_estimates(mat, seed: int = 0, iters: int = 20) -> tuple[float, float]:
    """Power-iteration estimates of ||A||_2 and mu_2(A) from a concrete matrix.

    Twenty iterations with a fixed seed: cheap, deterministic, and accurate
    enough for breakdown thresholds and step heuristics (not for proofs).
    """
    n = mat.shape[0]
    rng = np.random.default_rng(seed)
    is_complex = np.iscomplexobj(mat if not scipy.sparse.issparse(mat) else mat.data)
    x = rng.standard_normal(n)
    if is_complex:
        x = x + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    matH = mat.conj().T if scipy.sparse.issparse(mat) else np.conj(mat.T)
    # ||A||_2 via power iteration on A*A
    norm2 = 0.0
    for _ in range(iters):
        y = matH @ (mat @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, 0.0
        norm2 = math.sqrt(ny)
        x = y / ny
    # mu_2: dominant eigenvalue of Sym = (A + A*)/2, shifted to make it the
    # largest-magnitude one
    sym = lambda z: 0.5 * (mat @ z + matH @ z)  # noqa: E731
    x = rng.standard_normal(n)
    if is_complex:
        x = x + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(iters):
        y = sym(x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return norm2, 0.0
        s = ny
        x = y / ny
    x = rng.standard_normal(n)
    if is_complex:
        x = x + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = sym(x) + s * x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        x = y / ny
        lam = np.real(np.vdot(x, sym(x)))
    return norm2, float(lam)


def _detect_structure(mat, tol: float = 1e-12) -> str:
    herm = mat - (mat.conj().T if scipy.sparse.issparse(mat) else np.conj(mat.T))
    skew = mat + (mat.conj().T if scipy.sparse.issparse(mat) else np.conj(mat.T))
    nherm = scipy.sparse.linalg.norm(herm) if scipy.sparse.issparse(herm) else np.linalg.norm(herm)
    nskew = scipy.sparse.linalg.norm(skew) if scipy.sparse.issparse(skew) else np.linalg.norm(skew)
    nmat = scipy.sparse.linalg.norm(mat) if scipy.sparse.issparse(mat) else np.linalg.norm(mat)
    scale = max(nmat, 1e-300)
    if nherm <= tol * scale:
        return "hermitian"
    if nskew <= tol * scale:
        return "skew_hermitian"
    return "general"


def operator_from_matrix(mat, structure: str | None = None, seed: int = 0) -> LinearOperator:
    """Wrap a dense array, scipy sparse matrix, or SparseMatrixCSR."""
    if isinstance(mat, SparseMatrixCSR):
        mat = mat.to_scipy()
    elif not scipy.sparse.issparse(mat):
        mat = np.asarray(mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("matrix must be square")
    if structure is None:
        structure = _detect_structure(mat)
    norm2, mu2 = _norm_estimates(mat, seed=seed)
    return LinearOperator(
        n=mat.shape[0],
        apply=lambda x, _m=mat: _m @ x,
        structure=structure,
        norm2_estimate=norm2,
        mu2_estimate=mu2,
        matrix=mat,
    )


def scale_operator(op: LinearOperator, sigma: complex) -> LinearOperator:
    """Return sigma * op with the structure flag propagated.

    Multiplying a Hermitian operator by +-i yields a skew-Hermitian one and
    vice versa; real factors preserve structure.
    """
    sigma = complex(sigma)
    if sigma.imag == 0.0:
        structure = op.structure
    elif sigma.real == 0.0 and op.structure == "hermitian":
        structure = "skew_hermitian"
    elif sigma.real == 0.0 and op.structure == "skew_hermitian":
        structure = "hermitian"
    else:
        structure = "general"
    mat = op.matrix * sigma if op.matrix is not None else None
    if structure == "skew_hermitian":
        mu2 = 0.0
    elif sigma.imag == 0.0 and sigma.real >= 0:
        mu2 = sigma.real * op.mu2_estimate
    elif mat is not None:
        _, mu2 = _norm_estimates(mat)
    else:
        mu2 = abs(sigma) * op.norm2_estimate  # conservative fallback
    return LinearOperator(
        n=op.n,
        apply=lambda x, _f=op.apply, _s=sigma: _s * _f(x),
        structure=structure,
        norm2_estimate=abs(sigma) * op.norm2_estimate,
        mu2_estimate=float(mu2),
        matrix=mat,
    )


def to_dense(op: LinearOperator) -> np.ndarray:
    """Densify an operator (guard: n <= DENSE_GUARD)."""
    if op.n > DENSE_GUARD:
        raise ValueError(f"refusing to densify n={op.n} > {DENSE_GUARD}")
    if op.matrix is not None:
        m = op.matrix
        return m.toarray() if scipy.sparse.issparse(m) else np.asarray(m)
    cols = [op.apply(e) for e in np.eye(op.n)]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# test-problem generators
# ---------------------------------------------------------------------------

def build_laplacian_1d(n: int) -> LinearOperator:
    """Second-difference matrix B = tridiag(1, -2, 1) of dimension n.

    B is Hermitian negative definite; the eigenvalues of -B are
    4 sin(j pi / (2(n+1)))^2 for j = 1..n.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    ones = np.ones(n)
    B = scipy.sparse.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="csr")
    return operator_from_matrix(B, structure="hermitian")


def build_convection_diffusion_2d(N: int, nu: float) -> LinearOperator:
    """Central-difference discretization of Delta + nu (d/dx1 + d/dx2).

    Zero Dirichlet boundary, unit square, N inner mesh points per direction
    (h = 1/(N+1)), so the operator has dimension N^2.  Central differences
    put the convection term entirely into the skew part, hence mu_2 <= 0
    for every nu.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    h = 1.0 / (N + 1)
    ones = np.ones(N)
    D2 = scipy.sparse.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1]) / h**2
    D1 = scipy.sparse.diags([-ones[:-1], ones[:-1]], [-1, 1]) / (2.0 * h)
    I = scipy.sparse.identity(N)
    C1 = D2 + nu * D1
    A = (scipy.sparse.kron(C1, I) + scipy.sparse.kron(I, C1)).tocsr()
    structure = "hermitian" if nu == 0 else "general"
    return operator_from_matrix(A, structure=structure)


def build_schrodinger_double_well(n: int) -> tuple[LinearOperator, np.ndarray]:
    """Discretized H = Delta + V with V(x) = x^4 - 15 x^2 on [-10, 10].

    Periodic boundary, 3-point stencil on an n-point mesh of width 20/n,
    potential evaluated at the nodes.  Returns the Hermitian matrix B and the
    normalized Gaussian wavepacket v0; the propagation operator is A = -iB.
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    h = 20.0 / n
    x = -10.0 + h * np.arange(n)
    ones = np.ones(n)
    lap = scipy.sparse.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="lil")
    lap[0, n - 1] = 1.0
    lap[n - 1, 0] = 1.0
    V = x**4 - 15.0 * x**2
    B = (lap.tocsr() / h**2 + scipy.sparse.diags(V)).tocsr()
    v0 = (0.2 * np.pi) ** (-0.25) * np.exp(-((x + 2.5) ** 2) / 0.4)
    v0 = v0.astype(complex)
    v0 /= np.linalg.norm(v0)
    return operator_from_matrix(B, structure="hermitian"), v0


def laplacian_1d_eigenvector(n: int, j: int) -> np.ndarray:
    """Normalized j-th eigenvector (1-based) of tridiag(1, -2, 1)."""
    k = np.arange(1, n + 1)
    psi = np.sin(j * k * np.pi / (n + 1))
    return psi / np.linalg.norm(psi)


# ---------------------------------------------------------------------------
# dense reference oracle
# ---------------------------------------------------------------------------

def _augmented_full(A: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
    """[[A, W], [0, S]] with W e_1 = w and S the p x p superdiagonal shift.

    The last column of exp(tC) carries t^p phi_p(tA) w in its first n entries.
    """
    n = A.shape[0]
    dtype = np.result_type(A.dtype, w.dtype)
    C = np.zeros((n + p, n + p), dtype=dtype)
    C[:n, :n] = A
    C[:n, n] = w
    for i in range(p - 1):
        C[n + i, n + i + 1] = 1.0
    return C


def dense_reference_phi(A_dense: np.ndarray, v: np.ndarray, t: float, p: int) -> np.ndarray:
    """Reference value of phi_p(tA)v from a dense matrix exponential.

    Computed through the (n+p)-dimensional augmented matrix so a single exp
    evaluation covers every p.  The time step is split so each expm call sits
    below the Pade-13 scaling threshold, with the remaining doublings applied
    as matrix-vector products; the result is accurate to roughly 1e-13
    relative at desk scale.
    """
    A = np.asarray(A_dense)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    n = A.shape[0]
    if n > DENSE_GUARD:
        raise ValueError(f"dense oracle guard exceeded: n={n} > {DENSE_GUARD}")
    v = np.asarray(v)
    if v.shape != (n,):
        raise ValueError("vector length must match the matrix dimension")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if p < 0:
        raise ValueError("p must be nonnegative")
    if t == 0.0:
        return v / math.factorial(p)
    if p == 0:
        C, x = A, v
    else:
        C = _augmented_full(A, v, p)
        x = np.zeros(n + p, dtype=C.dtype)
        x[-1] = 1.0
    norm1 = t * np.linalg.norm(C, 1)
    k = 0
    if norm1 > _THETA_13:
        k = min(14, int(math.ceil(math.log2(norm1 / _THETA_13))))
    M = scipy.linalg.expm(C * (t / 2**k))
    for _ in range(2**k):
        x = M @ x
    if p == 0:
        return x
    return x[:n] / t**p


# ---------------------------------------------------------------------------
# Matrix Market coordinate I/O
# ---------------------------------------------------------------------------

def load_matrix_market(path: str) -> SparseMatrixCSR:
    """Read a coordinate-format Matrix Market file into CSR.

    Symmetric / skew-symmetric / hermitian headers are expanded to the full
    matrix.  Real, integer, and complex fields are supported; parse failures
    report the offending line number.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        parts = header.strip().lower().split()
        if len(parts) != 5 or parts[0] != "%%matrixmarket":
            raise MatrixMarketError("line 1: not a Matrix Market header")
        _, obj, fmt, fieldtype, symmetry = parts
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError("line 1: only coordinate-format matrices are supported")
        if fieldtype not in ("real", "integer", "complex"):
            raise MatrixMarketError(f"line 1: unsupported field type {fieldtype!r}")
        if symmetry not in ("general", "symmetric", "skew-symmetric", "hermitian"):
            raise MatrixMarketError(f"line 1: unsupported symmetry {symmetry!r}")
        lineno = 1
        size = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size = stripped.split()
            break
        if size is None:
            raise MatrixMarketError(f"line {lineno}: missing size line")
        try:
            rows, cols, nnz = (int(s) for s in size)
        except ValueError as exc:
            raise MatrixMarketError(f"line {lineno}: malformed size line") from exc
        if rows != cols:
            raise MatrixMarketError(f"line {lineno}: only square matrices are supported")
        complex_field = fieldtype == "complex"
        ri: list[int] = []
        ci: list[int] = []
        vals: list[complex] = []
        seen = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            toks = stripped.split()
            try:
                i, j = int(toks[0]) - 1, int(toks[1]) - 1
                if complex_field:
                    val = complex(float(toks[2]), float(toks[3]))
                else:
                    val = float(toks[2])
            except (ValueError, IndexError) as exc:
                raise MatrixMarketError(f"line {lineno}: malformed entry") from exc
            if not (0 <= i < rows and 0 <= j < cols):
                raise MatrixMarketError(f"line {lineno}: index out of range")
            seen += 1
            ri.append(i)
            ci.append(j)
            vals.append(val)
            if symmetry != "general" and i != j:
                ri.append(j)
                ci.append(i)
                if symmetry == "symmetric":
                    vals.append(val)
                elif symmetry == "skew-symmetric":
                    vals.append(-val)
                else:
                    vals.append(np.conj(val))
        if seen != nnz:
            raise MatrixMarketError(f"line {lineno}: expected {nnz} entries, found {seen}")
    dtype = complex if complex_field else float
    arr = np.asarray(vals, dtype=dtype)
    if nnz == 0:
        return SparseMatrixCSR(np.zeros(rows + 1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                               np.zeros(0, dtype=dtype), rows)
    return SparseMatrixCSR.from_coo(np.asarray(ri), np.asarray(ci), arr, rows)


def save_matrix_market(path: str, mat: SparseMatrixCSR) -> None:
    """Write a CSR matrix as general coordinate Matrix Market."""
    complex_field = np.iscomplexobj(mat.data)
    fieldtype = "complex" if complex_field else "real"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {fieldtype} general\n")
        fh.write(f"{mat.n} {mat.n} {len(mat.data)}\n")
        for row in range(mat.n):
            for k in range(mat.indptr[row], mat.indptr[row + 1]):
                col = mat.indices[k]
                val = mat.data[k]
                if complex_field:
                    fh.write(f"{row + 1} {col + 1} {val.real!r} {val.imag!r}\n")
                else:
                    fh.write(f"{row + 1} {col + 1} {float(val)!r}\n")
