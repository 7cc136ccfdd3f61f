"""Operators, generators, Matrix Market I/O, and the dense reference oracle."""

import math

import numpy as np
import pytest
import scipy.sparse

from kryphi.krylov import OrthPolicy, lanczos
from kryphi.linops import (
    MatrixMarketError,
    SparseMatrixCSR,
    build_convection_diffusion_2d,
    build_laplacian_1d,
    build_schrodinger_double_well,
    dense_reference_phi,
    load_matrix_market,
    matvec,
    operator_from_matrix,
    save_matrix_market,
    scale_operator,
    to_dense,
)

from conftest import phi_oracle_dyadic


class TestMatvec:
    def test_identity(self):
        op = operator_from_matrix(np.eye(4))
        e1 = np.eye(4)[:, 0]
        assert np.array_equal(matvec(op, e1), e1)

    def test_tridiagonal_stencil(self):
        op = build_laplacian_1d(3)
        out = matvec(op, np.ones(3))
        np.testing.assert_allclose(out, [-1.0, 0.0, -1.0], atol=1e-15)

    def test_csr_matches_dense(self):
        rng = np.random.default_rng(1)
        dense = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < 0.2)
        csr = SparseMatrixCSR.from_scipy(scipy.sparse.csr_matrix(dense))
        x = rng.standard_normal(50)
        ref = dense @ x
        np.testing.assert_allclose(csr.matvec(x), ref, rtol=1e-13, atol=1e-13)

    def test_dimension_mismatch(self):
        op = build_laplacian_1d(5)
        with pytest.raises(ValueError, match="dimension mismatch"):
            matvec(op, np.ones(4))


class TestOperatorInvariants:
    def test_apply_is_linear(self):
        rng = np.random.default_rng(2)
        op = build_convection_diffusion_2d(6, 30.0)
        x, y = rng.standard_normal(op.n), rng.standard_normal(op.n)
        a, b = 0.7, -1.3
        lhs = matvec(op, a * x + b * y)
        rhs = a * matvec(op, x) + b * matvec(op, y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * op.norm2_estimate)

    def test_hermitian_pairing(self):
        rng = np.random.default_rng(3)
        op, _ = build_schrodinger_double_well(64)
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        lhs = np.vdot(x, matvec(op, y))
        rhs = np.conj(np.vdot(y, matvec(op, x)))
        tol = 1e-12 * op.norm2_estimate * np.linalg.norm(x) * np.linalg.norm(y)
        assert abs(lhs - rhs) <= tol

    def test_skew_hermitian_rayleigh(self):
        rng = np.random.default_rng(4)
        op = scale_operator(build_laplacian_1d(40), -1j)
        assert op.structure == "skew_hermitian"
        x = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        val = np.vdot(x, matvec(op, x)).real
        assert abs(val) <= 1e-12 * op.norm2_estimate * np.linalg.norm(x) ** 2

    @pytest.mark.parametrize(
        "op,expected",
        [
            (build_laplacian_1d(50), "hermitian"),
            (build_convection_diffusion_2d(7, 0.0), "hermitian"),
            (build_convection_diffusion_2d(7, 50.0), "general"),
            (build_schrodinger_double_well(64)[0], "hermitian"),
        ],
    )
    def test_structure_flag_matches_symmetry(self, op, expected):
        assert op.structure == expected
        A = to_dense(op)
        herm_dev = np.linalg.norm(A - A.conj().T)
        scale = np.linalg.norm(A)
        if expected == "hermitian":
            assert herm_dev <= 1e-12 * scale
        else:
            assert herm_dev > 1e-6 * scale


class TestLaplacian1D:
    def test_n2_matrix_and_spectrum(self):
        op = build_laplacian_1d(2)
        np.testing.assert_allclose(to_dense(op), [[-2.0, 1.0], [1.0, -2.0]])
        eig = np.sort(np.linalg.eigvalsh(to_dense(op)))
        np.testing.assert_allclose(eig, [-3.0, -1.0], atol=1e-14)

    def test_largest_eigenvalue_closed_form(self):
        n = 100
        op = build_laplacian_1d(n)
        eig_max = np.max(np.linalg.eigvalsh(-to_dense(op)))
        ref = 4.0 * math.sin(n * math.pi / (2 * (n + 1))) ** 2
        assert abs(eig_max - ref) <= 1e-12

    @pytest.mark.parametrize("n", [10, 200])
    def test_full_spectrum_closed_form(self, n):
        op = build_laplacian_1d(n)
        eig = np.sort(np.linalg.eigvalsh(to_dense(op)))
        j = np.arange(1, n + 1)
        ref = np.sort(-4.0 * np.sin(j * np.pi / (2 * (n + 1))) ** 2)
        np.testing.assert_allclose(eig, ref, atol=1e-12)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            build_laplacian_1d(1)


class TestConvectionDiffusion2D:
    def test_pure_laplacian_symmetric_negative_definite(self):
        op = build_convection_diffusion_2d(3, 0.0)
        A = to_dense(op)
        np.testing.assert_allclose(A, A.T, atol=1e-14)
        assert np.max(np.linalg.eigvalsh(A)) < 0

    def test_mu2_nonpositive_with_convection(self):
        op = build_convection_diffusion_2d(20, 100.0)
        A = to_dense(op)
        mu2 = np.max(np.linalg.eigvalsh(0.5 * (A + A.T)))
        assert mu2 <= 1e-8

    def test_dimension(self):
        assert build_convection_diffusion_2d(5, 10.0).n == 25

    def test_rejects_small_N(self):
        with pytest.raises(ValueError):
            build_convection_diffusion_2d(1, 0.0)


class TestSchrodingerDoubleWell:
    def test_wavepacket_normalized(self):
        _, v0 = build_schrodinger_double_well(300)
        assert abs(np.linalg.norm(v0) - 1.0) <= 1e-14

    def test_hermitian_symmetry(self):
        op, _ = build_schrodinger_double_well(128)
        A = to_dense(op)
        assert np.linalg.norm(A - A.conj().T) <= 1e-12 * np.linalg.norm(A)

    def test_ground_state_vs_lanczos(self):
        n = 200
        op, _ = build_schrodinger_double_well(n)
        ground = np.min(np.linalg.eigvalsh(to_dense(op)))
        rng = np.random.default_rng(5)
        v = rng.standard_normal(n)
        dec = lanczos(op, v / np.linalg.norm(v), 150, OrthPolicy("full_reorth"))
        ritz_min = np.min(np.linalg.eigvalsh(dec.H))
        assert abs(ritz_min - ground) <= 1e-8

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            build_schrodinger_double_well(3)


class TestDenseReferencePhi:
    def test_t_zero_returns_scaled_vector(self):
        rng = np.random.default_rng(6)
        v = rng.standard_normal(7)
        for p in (0, 1, 3):
            np.testing.assert_allclose(
                dense_reference_phi(np.zeros((7, 7)), v, 0.0, p), v / math.factorial(p)
            )

    def test_diagonal_exponential(self):
        rng = np.random.default_rng(7)
        d = rng.standard_normal(9)
        v = rng.standard_normal(9)
        out = dense_reference_phi(np.diag(d), v, 0.8, 0)
        np.testing.assert_allclose(out, np.exp(0.8 * d) * v, rtol=1e-13)

    def test_phi1_of_zero_matrix(self):
        v = np.arange(1.0, 6.0)
        out = dense_reference_phi(np.zeros((5, 5)), v, 1.0, 1)
        np.testing.assert_allclose(out, v, rtol=1e-13)

    @pytest.mark.parametrize("p", [1, 2])
    def test_ode_residual_second_order(self, p):
        # w_p(t) = t^p phi_p(tA)v satisfies w' = A w + t^(p-1)/(p-1)! v;
        # the central difference quotient must converge at O(h^2)
        rng = np.random.default_rng(8)
        n = 12
        A = rng.standard_normal((n, n)) / 3.0
        v = rng.standard_normal(n)
        t = 0.9

        def w(tt):
            return tt**p * dense_reference_phi(A, v, tt, p)

        def residual(h):
            dw = (w(t + h) - w(t - h)) / (2 * h)
            rhs = A @ w(t) + t ** (p - 1) / math.factorial(p - 1) * v
            return np.linalg.norm(dw - rhs)

        r1, r2 = residual(1e-2), residual(5e-3)
        assert r1 / r2 == pytest.approx(4.0, rel=0.25)

    def test_semigroup_property(self):
        rng = np.random.default_rng(9)
        n = 80
        A = rng.standard_normal((n, n)) / math.sqrt(n)
        v = rng.standard_normal(n)
        s, t = 0.6, 1.1
        left = dense_reference_phi(A, v, s + t, 0)
        right = dense_reference_phi(A, dense_reference_phi(A, v, t, 0), s, 0)
        assert np.linalg.norm(left - right) <= 1e-11 * np.linalg.norm(left)

    def test_matches_series_for_p(self):
        rng = np.random.default_rng(10)
        n = 6
        A = rng.standard_normal((n, n)) / 4.0
        v = rng.standard_normal(n)
        t = 0.7
        from conftest import phi_series

        for p in (0, 1, 2, 3):
            ref = (phi_series(t * A, p) @ v).real
            out = dense_reference_phi(A, v, t, p)
            np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-14)

    def test_dyadic_oracle_helper_consistent(self):
        rng = np.random.default_rng(11)
        n = 10
        A = rng.standard_normal((n, n)) / 3.0
        v = rng.standard_normal(n)
        for p in (0, 2):
            chain = phi_oracle_dyadic(A, v, p, 1.2)
            for frac, val in chain.items():
                ref = dense_reference_phi(A, v, 1.2 * frac, p)
                np.testing.assert_allclose(val, ref, rtol=1e-11, atol=1e-14)

    def test_dimension_guard(self):
        with pytest.raises(ValueError, match="guard"):
            dense_reference_phi(np.zeros((4001, 4001)), np.zeros(4001), 1.0, 0)


class TestMatrixMarket:
    def test_symmetric_file(self, tmp_path):
        path = tmp_path / "sym.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real symmetric\n"
            "% 1D Laplacian n=2\n"
            "2 2 3\n"
            "1 1 -2.0\n"
            "2 1 1.0\n"
            "2 2 -2.0\n"
        )
        mat = load_matrix_market(str(path))
        np.testing.assert_allclose(mat.to_dense(), [[-2.0, 1.0], [1.0, -2.0]])

    def test_empty_matrix(self, tmp_path):
        path = tmp_path / "empty.mtx"
        path.write_text("%%MatrixMarket matrix coordinate real general\n3 3 0\n")
        mat = load_matrix_market(str(path))
        assert mat.n == 3
        np.testing.assert_array_equal(mat.to_dense(), np.zeros((3, 3)))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        n = 30
        dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.15)
        mat = SparseMatrixCSR.from_scipy(scipy.sparse.csr_matrix(dense))
        path = tmp_path / "rt.mtx"
        save_matrix_market(str(path), mat)
        back = load_matrix_market(str(path))
        np.testing.assert_array_equal(back.indptr, mat.indptr)
        np.testing.assert_array_equal(back.indices, mat.indices)
        np.testing.assert_array_equal(back.data, mat.data)

    def test_complex_hermitian_round_trip(self, tmp_path):
        path = tmp_path / "herm.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate complex hermitian\n"
            "2 2 2\n"
            "1 1 1.0 0.0\n"
            "2 1 0.0 1.0\n"
        )
        mat = load_matrix_market(str(path))
        ref = np.array([[1.0, -1j], [1j, 0.0]])
        np.testing.assert_allclose(mat.to_dense(), ref)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "2 2 2\n"
            "1 1 1.0\n"
            "2 oops 1.0\n"
        )
        with pytest.raises(MatrixMarketError, match="line 4"):
            load_matrix_market(str(path))

    def test_unsupported_field_type(self, tmp_path):
        path = tmp_path / "pat.mtx"
        path.write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n")
        with pytest.raises(MatrixMarketError, match="field type"):
            load_matrix_market(str(path))


class TestSparseCSRValidation:
    def test_rejects_nonmonotone_offsets(self):
        with pytest.raises(ValueError, match="monotone"):
            SparseMatrixCSR(np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 2.0]), 2)

    def test_rejects_bad_final_offset(self):
        with pytest.raises(ValueError, match="nnz"):
            SparseMatrixCSR(np.array([0, 1, 3]), np.array([0, 1]), np.array([1.0, 2.0]), 2)

    def test_rejects_out_of_range_indices(self):
        with pytest.raises(ValueError, match="out of range"):
            SparseMatrixCSR(np.array([0, 1, 2]), np.array([0, 5]), np.array([1.0, 2.0]), 2)
