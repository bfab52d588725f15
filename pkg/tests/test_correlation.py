import random

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, strategies as st

from nhssh.bignum import pi, real, tol, working
from nhssh.correlation import build_correlation, eigenvector_symbol, restrict, symbol
from nhssh.errors import DefectivePoint, PhaseError
from nhssh.linalg import BigMatrix, eig_general
from nhssh.model import ModelParams

P = 60
GAPPED = dict(u="1", v="1", w="5")
CRIT = dict(u="0.5", v="1", w="1.5")


def params(L=8, ell=4, delta="0", digits=P, **kw):
    return ModelParams(L=L, ell=ell, delta=delta, digits=digits, **kw)


def band_projector(p, k):
    """Hermitian lower-band projector from the closed-form eigenvector (u = 0)."""
    from nhssh.model import eta
    with working(p.digits):
        e = eta(p, k)
        # lower band of [[0, e], [e*, 0]]: (1, -e*/|e|)/sqrt2
        r = [mpc(1), -e.conjugate() / abs(e)]
        return BigMatrix.from_rows([[r[a].conjugate() * r[b] / 2 for b in range(2)]
                                    for a in range(2)], p.digits)


@given(st.floats(0, 6.28))
def test_symbol_trace_one(k):
    s = symbol(params(**GAPPED), real(str(k), P))
    with working(P):
        assert abs(s.trace() - 1) < tol(-P + 20, P)


@given(st.floats(0, 6.28))
def test_hermitian_symbol_is_band_projector(k):
    p = params(u="0", v="1", w="2")
    k = real(str(k), P)
    g = symbol(p, k).entries
    with working(P):
        assert (g @ g - g).max_norm() < tol(-P + 20, P)
        assert (g - g.H).max_norm() < tol(-P + 20, P)
        assert (g - band_projector(p, k)).max_norm() < tol(-P + 20, P)


def test_critical_grid_symbols_match_eigenvectors():
    p = params(L=40, delta="1e-3", **CRIT)
    for k in p.momenta():
        a = symbol(p, k, check=False).entries
        b = eigenvector_symbol(p, k).entries
        assert (a - b).max_norm() < tol(-P / 2, P)


def test_gapped_random_k_mutual_check():
    p = params(**GAPPED)
    rnd = random.Random(9)
    for _ in range(50):
        k = real(str(rnd.uniform(0, 6.28)), P)
        assert (symbol(p, k, check=False).entries - eigenvector_symbol(p, k).entries).max_norm() \
            < tol(-P / 2, P)


@pytest.mark.parametrize("kw", [GAPPED, CRIT, dict(u="1", v="5", w="1")])
def test_eigenvector_symbol_idempotent(kw):
    p = params(delta="0.01", **kw)
    for k in p.momenta():
        g = eigenvector_symbol(p, k).entries
        with working(P):
            assert (g @ g - g).max_norm() < tol(-P / 2, P)


def test_eigenvector_symbol_hermitian_limit():
    p = params(u="0", v="1", w="2")
    k = real("0.4", P)
    assert (eigenvector_symbol(p, k).entries - band_projector(p, k)).max_norm() < tol(-P / 2, P)


def test_exceptional_point_defective():
    with pytest.raises(DefectivePoint):
        eigenvector_symbol(params(**CRIT), pi(P))


def test_correlation_trace_half_filling():
    C = build_correlation(params(L=12, **GAPPED))
    with working(P):
        assert abs(C.trace() - 6) < tol(-P + 20, P)
        assert abs(C.matrix.trace() - 6) < tol(-P + 20, P)


def test_hermitian_correlation_is_projector():
    C = build_correlation(params(L=12, u="0", v="1", w="1.7")).matrix
    with working(P):
        assert (C @ C - C).max_norm() < tol(-P + 20, P)
        assert (C - C.H).max_norm() < tol(-P + 20, P)


def test_nonhermitian_correlation_not_hermitian():
    C = build_correlation(params(L=12, **GAPPED)).matrix
    assert (C - C.H).max_norm() > mpfr("1e-3")


def test_block_toeplitz_untwisted():
    C = build_correlation(params(L=12, **GAPPED)).matrix
    with working(P):
        for j in range(6):
            for l in range(6):
                for a in range(2):
                    for b in range(2):
                        ref = C[a, 2 * ((l - j) % 6) + b]
                        assert abs(C[2 * j + a, 2 * l + b] - ref) < tol(-P + 20, P)


def test_restrict_full_is_identity():
    C = build_correlation(params(L=8, **GAPPED))
    assert restrict(C, 8).matrix == C.matrix


def test_restrict_top_left_block_and_trace():
    C = build_correlation(params(L=12, **GAPPED))
    R = restrict(C, 6)
    assert R.restricted and R.size == 6
    assert R.matrix == BigMatrix(C.matrix.data[:6, :6].copy(), P)
    with working(P):
        assert abs(R.trace() - 3) < tol(-P + 20, P)


def test_restrict_rejects_odd():
    C = build_correlation(params(L=8, **GAPPED))
    with pytest.raises(ValueError):
        restrict(C, 3)


def test_critical_requires_twist():
    with pytest.raises(PhaseError):
        build_correlation(params(**CRIT))


def test_critical_restricted_spectrum_real_outside_unit_interval():
    p = params(L=200, delta="1e-7", digits=120, **CRIT)
    nu = eig_general(restrict(build_correlation(p), 20).matrix, vectors=False).eigenvalues
    margin = tol(-120 / 4, 120)
    for x in nu:
        assert abs(x.imag) < margin
        assert x.real < -margin or x.real > 1 + margin
