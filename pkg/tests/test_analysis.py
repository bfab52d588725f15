import random

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, strategies as st

from nhssh.analysis import (CurveKind, central_charge_fit, chord_log, collapse_deviation,
                            combined_curve, combined_for_site, combined_value, diag_potential,
                            edge_value, profile_deviation,
                            endpoint_deviation, interpolate, locality_ratio, mu_conjecture,
                            nn_temperature, parabola_cft, parabola_value, spectrum_reality_check,
                            triangular_fit)
from nhssh.bignum import pi, tol, working
from nhssh.correlation import build_correlation, restrict
from nhssh.entanglement import eh_kernel
from nhssh.errors import PhaseError
from nhssh.model import ModelParams

P = 50
CRIT = ModelParams(u="0.5", v="1", w="1.5", L=100, ell=0, delta="1e-7", digits=P)


def kernel(p, ell):
    return eh_kernel(restrict(build_correlation(p), ell))


@pytest.fixture(scope="module")
def homogeneous():
    return kernel(ModelParams(u="0", v="1", w="1", L=60, ell=0, delta="0.3", digits=P), 12)


@pytest.fixture(scope="module")
def gapped():
    return kernel(ModelParams(u="1", v="1", w="5", L=60, ell=0, digits=P), 20)


def close(a, b, e=-P + 5):
    with working(P):
        return abs(a - b) < tol(e, P)


# curves ------------------------------------------------------------------------

def test_parabola_endpoints_and_midpoint():
    assert parabola_value(0, 100, P) == 0 and parabola_value(100, 100, P) == 0
    with working(P):
        assert close(parabola_value(50, 100, P), pi(P) / 2)
        assert close(parabola_value(25, 100, P), 3 * pi(P) / 8)


def test_parabola_samples_at_half_sites():
    c = parabola_cft(10, 1, digits=P)
    assert c.kind is CurveKind.PARABOLA_CFT
    assert [float(x) for x in c.xs] == [j + 0.5 for j in range(10)]


def test_mu_examples():
    mu = mu_conjecture(100, digits=P)
    assert float(mu.values[0].imag) == pytest.approx(6.2518, abs=1e-4)
    with working(P):
        assert close(mu.values[99].imag, 2 * pi(P) / 200)
    # midpoint x = ell/2 is j = ell/2 - 1/2
    mid = mu_conjecture(101, digits=P).values[50]
    with working(P):
        assert close(mid, mpc(0, pi(P)))


def test_mu_affine_and_flipped():
    mu = mu_conjecture(20, digits=P).values
    fl = mu_conjecture(20, flipped=True, digits=P).values
    with working(P):
        d = [mu[j + 1] - mu[j] for j in range(19)]
        assert all(close(x, d[0]) for x in d)
        assert all(close(a + b, mpc(0, 4 * pi(P))) for a, b in zip(mu, fl))


def test_combined_endpoints():
    with working(P):
        for s in (1, -1):
            assert close(combined_value(100, 100, CRIT, s), 0)
            assert close(combined_value(0, 100, CRIT, s), 2 * pi(P))


def test_combined_requires_critical():
    with pytest.raises(PhaseError):
        combined_curve(10, CRIT.replace(w="5", delta="0"))


def test_combined_site_branches():
    c = combined_curve(10, CRIT)
    assert combined_for_site(c, 0) == c.samples[0][1][0]
    assert combined_for_site(c, 1) == c.samples[1][1][1]


# fits ----------------------------------------------------------------------------

def test_triangle_exact_recovery():
    with working(P):
        slope = mpfr("0.37")
        pts = [(j, mpfr(j + 1), slope * (j + 1) + mpfr("0.01")) for j in range(99)]
    fit = triangular_fit(pts, 0.2, ell=100, digits=P)
    assert close(fit["slope"], slope, -P + 30)
    assert fit.residual < tol(-P + 30, P)
    assert fit.extra["points"] == 20
    assert close(fit.extra["r_squared"], 1, -P + 30)


def test_triangle_r_squared_zigzag():
    # alternating +-h about a line: R^2 = 1 - n h^2 / sum (y - mean)^2
    with working(P):
        h = mpfr("0.1")
        pts = [(j, mpfr(j + 1), mpfr(j + 1) + (h if j % 2 == 0 else -h)) for j in range(10)]
    fit = triangular_fit(pts, 0.5, ell=20, digits=P)
    ys = [v for _, _, v in pts]
    m = sum(ys) / len(ys)
    expected = 1 - sum((v - (fit["slope"] * x + fit["offset"])) ** 2 for _, x, v in pts) / sum((v - m) ** 2 for v in ys)
    assert abs(float(fit.extra["r_squared"]) - float(expected)) < 1e-12
    assert 0.99 < fit.extra["r_squared"] < 1


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_triangle_idempotent(a, b):
    with working(P):
        pts = [(j, mpfr(j) + mpfr("0.5"), mpfr(a) * j + mpfr(b)) for j in range(40)]
    f1 = triangular_fit(pts, 0.5, ell=40, digits=P)
    with working(P):
        again = [(j, x, f1["slope"] * x + f1["offset"]) for j, x, _ in pts]
    f2 = triangular_fit(again, 0.5, ell=40, digits=P)
    assert close(f1["slope"], f2["slope"], -P + 20)
    assert close(f1["offset"], f2["offset"], -P + 20)


def test_triangle_window_validation():
    with pytest.raises(ValueError):
        triangular_fit([], 0.7, ell=10)


def test_central_charge_planted():
    L = 2000
    with working(P):
        samples = [(ell, -2 * chord_log(ell, L, P) + mpfr("0.3")) for ell in (20, 40, 60, 80, 100)]
    fit = central_charge_fit(samples, L, digits=P)
    with working(P):
        assert close(fit["c"], -2, -P + 10)
        assert close(fit["const"], mpfr("0.3"), -P + 10)


def test_central_charge_needs_five():
    with pytest.raises(ValueError):
        central_charge_fit([(1, 0)] * 4, 10)


def test_chord_log_value():
    with working(P):
        assert close(chord_log(500, 1000, P), gmpy2.log(1000 / pi(P)) / 3)


def test_interpolate():
    assert interpolate([0, 1, 2], [0, 10, 0], 0.5) == 5
    assert interpolate([0, 1, 2], [0, 10, 0], -1) == 0
    assert interpolate([0, 1, 2], [0, 10, 0], 1.5) == 5


def test_collapse_identical_and_scaled():
    # piecewise-linear data interpolates exactly, so two samplings of one line agree
    a = [(x / 10, 3 + x) for x in range(11)]
    b = [(x / 20, 3 + x / 2) for x in range(21)]
    assert collapse_deviation({10: a, 20: b}) < tol(-14, P)
    c = [(x, 1.1 * y) for x, y in a]
    assert float(collapse_deviation({10: a, 11: c})) == pytest.approx(0.1 / 1.1, rel=1e-6)


def test_endpoint_deviation_window():
    ref = lambda x: parabola_value(x, 100, P)
    with working(P):
        pts = [(mpfr(x), ref(x) * (mpfr("1.02") if x < 50 else 1)) for x in range(1, 100)]
    worst, rows = endpoint_deviation(pts, ref, 100, 0.1, digits=P)
    assert float(worst) == pytest.approx(0.02, rel=1e-9)
    assert all(r[0] <= 10 or r[0] >= 90 for r in rows)


# kernel-based --------------------------------------------------------------------

def test_reflection_symmetry_homogeneous(homogeneous):
    t = nn_temperature(homogeneous)
    ell = homogeneous.ell
    assert len(t) == ell - 1 and float(t[0][1]) == 1
    for j in range(ell - 1):
        assert close(t[j][2], t[ell - 2 - j][2], -P / 4)


def test_hermitian_diag_vanishes(homogeneous):
    assert all(abs(v) < tol(-P / 2, P) for _, _, v in diag_potential(homogeneous))
    with pytest.raises(ValueError):
        diag_potential(homogeneous, divide_by_u=True)


def test_rescale_factor(gapped):
    a = nn_temperature(gapped)
    b = nn_temperature(gapped, rescale=True)
    with working(P):
        f = 2 * gmpy2.sqrt(mpfr(5)) / 20
        assert all(close(x[2] * f, y[2]) for x, y in zip(a, b))


def test_gapped_channels_divide(gapped):
    d = diag_potential(gapped, divide_by_u=True)
    raw = diag_potential(gapped)
    with working(P):
        assert close(d[0][2], raw[0][2]) and close(d[1][2], -raw[1][2])
    assert float(d[0][1]) == 0.5


def test_locality_ratio_blocks(gapped):
    far, near = locality_ratio(gapped, 0.2)
    assert near > 0 and far < near
    left = locality_ratio(gapped, 0.2, outer="left")
    assert left[1] <= near


def test_reality_check_mu_none_uses_kernel_spectrum():
    p = CRIT.replace(L=100, digits=100)
    K = kernel(p, 12)
    r = spectrum_reality_check(K, None)
    assert r["fraction"] == 0  # every eigenvalue has Im = pi
    mu = mu_conjecture(12, digits=100)
    r2 = spectrum_reality_check(K, mu, digits=30)
    assert len(r2.extra["eigenvalues"]) == 12
    with pytest.raises(ValueError):
        spectrum_reality_check(K, mu_conjecture(10))


def test_edge_value_exact_for_quadratic_branches():
    pts = []
    for j in range(12):
        x = j + 0.5
        pts.append((j, x, 2 + x * x if j % 2 == 0 else 5 - 3 * x))
    with working(P):
        assert close(edge_value(pts, 0, parity=0, digits=P), 2, -P + 10)
        assert close(edge_value(pts, 0, parity=1, digits=P), 5, -P + 10)
        assert close(edge_value(pts, 12, parity=1, digits=P), -31, -P + 10)


def test_edge_value_needs_points():
    with pytest.raises(ValueError):
        edge_value([(0, 0.5, 1)], 0, parity=0)


def test_profile_deviation_sup_norm():
    assert float(profile_deviation([1, 2.2, -4], [1, 2, -4])) == pytest.approx(0.05)
    assert profile_deviation([0, 1], [0, 0]) == 1
