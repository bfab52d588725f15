import random

import gmpy2
import mpmath
import numpy as np
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, strategies as st

from nhssh.bignum import BranchRule, cplx, pi, tol, working
from nhssh.errors import NearDefective, NoConvergence, SingularMatrix
from nhssh.linalg import BigMatrix, eig_general, lu_invert, lu_solve, matrix_exp, matrix_log

P = 60


def rand_matrix(n, digits, seed, shift=0):
    rnd = random.Random(seed)
    rows = [[cplx(str(rnd.uniform(-1, 1)), digits, str(rnd.uniform(-1, 1)))
             for _ in range(n)] for _ in range(n)]
    with working(digits):
        for i in range(n):
            rows[i][i] += shift
    return BigMatrix.from_rows(rows, digits)


def to_mp(M):
    return mpmath.matrix([[mpmath.mpc(str(z.real), str(z.imag)) for z in row] for row in M.data])


def mp_dist(a, b):
    return max(abs(a[i, j] - b[i, j]) for i in range(a.rows) for j in range(a.cols))


# lu ------------------------------------------------------------------------

def test_invert_identity():
    I = BigMatrix.identity(5, P)
    assert lu_invert(I).inverse == I


def test_invert_diag():
    inv = lu_invert(BigMatrix.diag([2, 4], P)).inverse
    assert inv.data[0, 0] == mpfr("0.5") and inv.data[1, 1] == mpfr("0.25")
    assert inv.data[0, 1] == 0


def test_invert_random_residual():
    M = rand_matrix(20, P, 1, shift=3)
    res = lu_invert(M)
    assert res.residual < tol(-P + 30, P)


def test_invert_matches_mpmath():
    M = rand_matrix(8, P, 2, shift=1)
    with mpmath.workdps(P + 20):
        ref = to_mp(M) ** -1
        assert mp_dist(to_mp(lu_invert(M).inverse), ref) < mpmath.mpf(10) ** (-P + 15)


def test_singular_raises():
    M = BigMatrix.from_rows([[1, 2], [2, 4]], P)
    with pytest.raises(SingularMatrix):
        lu_invert(M)


def test_lu_solve():
    M = rand_matrix(6, P, 4, shift=2)
    B = rand_matrix(6, P, 5)
    X = lu_solve(M, B)
    assert (M @ X - B).max_norm() < tol(-P + 20, P)


# eig -----------------------------------------------------------------------

def test_eig_diag():
    d = eig_general(BigMatrix.diag([3, 1, 2], P))
    assert d.eigenvalues == [1, 2, 3]


def test_eig_companion():
    d = eig_general(BigMatrix.from_rows([[3, -2], [1, 0]], P))
    with working(P):
        assert abs(d.eigenvalues[0] - 1) < tol(-P + 10, P)
        assert abs(d.eigenvalues[1] - 2) < tol(-P + 10, P)


def test_planted_spectrum():
    n = 6
    rnd = random.Random(11)
    lam = [cplx(str(rnd.uniform(-3, 3)), P, str(rnd.uniform(-3, 3))) for _ in range(n)]
    V = rand_matrix(n, P, 12, shift=2)
    with working(P):
        M = V @ BigMatrix.diag(lam, P) @ lu_invert(V).inverse
    d = eig_general(M)
    want = sorted(lam, key=lambda z: (z.real, z.imag))
    with working(P):
        for a, b in zip(d.eigenvalues, want):
            assert abs(a - b) < tol(-P + 40, P)


def test_eig_against_mpmath():
    M = rand_matrix(10, P, 21)
    d = eig_general(M)
    with mpmath.workdps(P + 20):
        ref = sorted(mpmath.eig(to_mp(M), right=False), key=lambda z: (z.real, z.imag))
        for a, b in zip(d.eigenvalues, ref):
            assert abs(mpmath.mpc(str(a.real), str(a.imag)) - b) < mpmath.mpf(10) ** (-P + 15)


def test_eig_residuals_and_sorting():
    M = rand_matrix(12, P, 31)
    d = eig_general(M)
    assert d.max_residual < tol(-P / 2, P)
    keys = [(z.real, z.imag) for z in d.eigenvalues]
    assert keys == sorted(keys)


def test_eig_transpose_invariance():
    M = rand_matrix(9, P, 41)
    a = eig_general(M, vectors=False).eigenvalues
    b = eig_general(M.T, vectors=False).eigenvalues
    with working(P):
        assert max(abs(x - y) for x, y in zip(a, b)) < tol(-P / 2, P)


def test_eig_sweep_cap():
    M = rand_matrix(6, P, 51)
    with pytest.raises(NoConvergence):
        eig_general(M, max_sweeps=1)


def test_eig_hermitian_real():
    A = rand_matrix(8, P, 61)
    with working(P):
        H = A + A.H
    d = eig_general(H)
    assert max(abs(z.imag) for z in d.eigenvalues) < tol(-P + 10, P)


@given(st.integers(1, 7), st.integers(0, 10 ** 6))
def test_eig_property_residual(n, seed):
    M = rand_matrix(n, 40, seed)
    d = eig_general(M)
    assert d.max_residual < tol(-20, 40)
    with working(40):
        assert abs(sum(d.eigenvalues, mpc(0)) - M.trace()) < tol(-30, 40)


# log / exp -----------------------------------------------------------------

def test_log_identity():
    assert matrix_log(BigMatrix.identity(4, P)).max_norm() == 0


def test_log_negative_diag_upper_branch():
    L = matrix_log(BigMatrix.diag([-1, -2], P))
    with working(P):
        assert abs(L.data[0, 0] - mpc(0, pi(P))) < tol(-P + 5, P)
        assert L.data[0, 0].imag == pi(P)
        assert abs(L.data[1, 1] - mpc(gmpy2.log(mpfr(2)), pi(P))) < tol(-P + 5, P)


def test_log_lower_branch_differs():
    L = matrix_log(BigMatrix.diag([-1], P), BranchRule.PRINCIPAL_LOWER)
    with working(P):
        assert L.data[0, 0].imag == -pi(P)


def test_exp_log_roundtrip_random():
    M = rand_matrix(10, P, 71, shift=2)
    with working(P):
        assert (matrix_exp(matrix_log(M)) - M).max_norm() < tol(-P / 2, P)


def test_log_matches_mpmath():
    M = rand_matrix(5, P, 81, shift=3)
    with mpmath.workdps(P + 20):
        ref = mpmath.logm(to_mp(M))
        assert mp_dist(to_mp(matrix_log(M)), ref) < mpmath.mpf(10) ** (-P + 15)


def test_exp_zero_is_identity():
    assert matrix_exp(BigMatrix.zeros(3, 3, P)) == BigMatrix.identity(3, P)


def test_exp_diag_one():
    E = matrix_exp(BigMatrix.diag([1], P))
    with working(P):
        assert abs(E.data[0, 0] - gmpy2.exp(mpfr(1))) < tol(-P + 5, P)


def test_exp_nilpotent():
    E = matrix_exp(BigMatrix.from_rows([[0, 1], [0, 0]], P))
    assert E == BigMatrix.from_rows([[1, 1], [0, 1]], P)


def test_exp_matches_mpmath():
    M = rand_matrix(6, P, 91)
    with working(P):
        M = M.scale(4)
    with mpmath.workdps(P + 20):
        ref = mpmath.expm(to_mp(M))
        assert mp_dist(to_mp(matrix_exp(M)), ref) < mpmath.mpf(10) ** (-P + 15)


def test_near_defective_raises():
    with working(P):
        eps = mpfr(10) ** -40
    M = BigMatrix.from_rows([[1, 1], [0, 1 + eps]], P)
    with pytest.raises(NearDefective):
        matrix_log(M)


def test_matmul_fixed_point_matches_plain():
    # inner dimension above the fast-product threshold, graded entries
    A = rand_matrix(12, P, 101)
    B = rand_matrix(12, P, 102)
    with working(P):
        for i in range(12):
            A.data[i, :] = A.data[i, :] * mpfr(10) ** (3 * i)
        plain = np.dot(A.data, B.data)
        fast = (A @ B).data
        for i in range(12):
            scale = max(abs(z) for z in plain[i])
            assert max(abs(x - y) for x, y in zip(plain[i], fast[i])) < tol(-P + 5, P) * scale
