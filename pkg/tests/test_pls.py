import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import cauchy_rs
from kuramoto_pls import bicauchy, distributions as D, pls
from kuramoto_pls.errors import NoSolution, OutOfRange, UpperHalfPlane, WeightTooLarge


def beta_oracle(z):
    # independent form: -iz + iz sqrt(1 - z^-2), principal root, valid for Im z < 0
    return -1j * z + 1j * z * cmath.sqrt(1 - 1 / (z * z))


def beta_real_oracle(w):
    if abs(w) <= 1:
        return complex(math.sqrt(1 - w * w), -w)
    return -1j * w + 1j * math.copysign(math.sqrt(w * w - 1), w)


def test_beta_examples():
    assert pls.beta(0.0) == 1
    assert abs(pls.beta(1.0) - (-1j)) < 1e-15
    assert abs(pls.beta(2.0) - 1j * (math.sqrt(3) - 2)) < 1e-15
    with pytest.raises(UpperHalfPlane):
        pls.beta(0.3 + 0.01j)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, -1e-6))
def test_beta_lower_half_plane(x, y):
    z = complex(x, y)
    b = complex(pls.beta(z))
    assert abs(b * b + 2j * z * b - 1) < 1e-12 * max(1.0, abs(z))
    assert abs(b) < 1.0
    assert b.real > 0
    assert abs(b - beta_oracle(z)) < 1e-12 * max(1.0, abs(z))
    assert abs(complex(pls.beta(-z.conjugate())) - b.conjugate()) < 1e-14


def test_beta_real_axis():
    w = np.linspace(-5, 5, 2001)
    b = pls.beta(w)
    assert np.allclose(b, [beta_real_oracle(x) for x in w], atol=1e-14)
    inside = np.abs(w) <= 1
    assert np.max(np.abs(np.abs(b[inside]) - 1)) < 1e-12
    assert np.all(np.abs(b[~inside]) < 1)
    # limits from the lower half-plane agree with the axis values
    assert np.max(np.abs(pls.beta(w - 1e-12j) - b)) < 1e-5
    for edge in (-1.0, 1.0):
        assert abs(complex(pls.beta(edge - 1e-12)) - complex(pls.beta(edge + 1e-12))) < 1e-5


def test_beta_large_argument_stable():
    z = np.array([1e8 - 1e-3j, -3e7 - 5j, 1e-3 - 1e9j])
    b = pls.beta(z)
    assert np.all(np.isfinite(b))
    assert np.allclose(b, -0.5j / z, rtol=1e-6)  # beta(z) ~ -i/(2z) for large |z|


def test_beta_minus():
    assert pls.beta_minus(0.0) == -1
    assert abs(pls.beta_minus(1.0) - (-1j)) < 1e-15
    assert abs(pls.beta_minus(0.6) - complex(-0.8, -0.6)) < 1e-15
    for w in np.linspace(-1, 1, 21):
        assert abs(complex(pls.beta(w)) * pls.beta_minus(w) + 1) < 1e-14
    with pytest.raises(OutOfRange):
        pls.beta_minus(1.5)


def residual_oracle(d, K, r):
    """Real part of K int g(K r w) beta(w) dw - 1 on the real axis: only the
    locked interval contributes to the real part."""
    v, _ = integrate.quad(lambda w: d.density(K * r * w) * math.sqrt(1 - w * w), -1, 1, epsabs=1e-14, epsrel=1e-13)
    return K * v - 1


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_residual_examples(cauchy1):
    res = pls.self_consistency_residual(cauchy1, 4.0, math.sqrt(0.5))
    assert abs(res) < 1e-8
    assert pls.self_consistency_residual(cauchy1, 2.0, 0.5).real < 0
    for K, r in [(3.0, 0.2), (6.0, 0.9), (2.5, 0.5)]:
        res = pls.self_consistency_residual(cauchy1, K, r)
        assert abs(res.imag) < 1e-10
        assert res.real == pytest.approx(residual_oracle(cauchy1, K, r), abs=1e-10)


def test_residual_even_gaussian_and_bicauchy():
    for d in (D.gaussian(1.0), D.bicauchy(1.0, 2.0)):
        for K, r in [(3.0, 0.4), (9.0, 0.6)]:
            assert abs(pls.self_consistency_residual(d, K, r).imag) < 1e-10


@pytest.mark.parametrize("K", [2.5, 4.0, 8.0])
def test_solve_rs_cauchy(cauchy1, K):
    st_ = pls.solve_rs(cauchy1, K)
    assert len(st_) == 1
    oracle = bisect(lambda r: residual_oracle(cauchy1, K, r), 1e-6, 1.0)
    assert st_[0].r_s == pytest.approx(oracle, abs=1e-9)
    assert st_[0].r_s == pytest.approx(cauchy_rs(1.0, K), abs=1e-9)
    assert abs(pls.self_consistency_residual(cauchy1, K, st_[0].r_s)) < 1e-10


def test_solve_rs_gaussian():
    d = D.gaussian(1.0)
    K = 2 * d.critical_coupling()
    r = pls.solve_rs(d, K)[0].r_s
    assert r == pytest.approx(bisect(lambda x: residual_oracle(d, K, x), 1e-6, 1.0), abs=1e-9)


def test_solve_rs_below_threshold(cauchy1):
    with pytest.raises(NoSolution):
        pls.solve_rs(cauchy1, 1.0)


def test_solve_rs_bicauchy_two_roots():
    states = pls.solve_rs(D.bicauchy(1.0, 2.0), 8.0)
    assert len(states) == 2
    branches = {b.label: b for b in bicauchy.solve_branches(1.0, 2.0, 8.0)}
    assert states[0].r_s == pytest.approx(branches["plus"].r, abs=1e-6)
    assert states[1].r_s == pytest.approx(branches["minus"].r, abs=1e-6)


def test_drift_balance_policy():
    even = D.cauchy_mixture([(0.5, 1.0, -1.0), (0.5, 1.0, 1.0)])
    assert abs(pls.drift_balance(even, 5.0, 0.5)) < 1e-12
    skew = D.cauchy_mixture([(0.3, 0.5, -1.0), (0.7, 1.0, 0.8)])
    assert abs(pls.drift_balance(skew, 5.0, 0.5)) > 1e-3
    with pytest.raises(NoSolution, match="drift balance"):
        pls.solve_rs(skew, 5.0)


def test_omega_coefficient(cauchy_k4):
    g = cauchy_k4.dist.density
    assert pls.pls_omega_coefficient(cauchy_k4, 0, 1.3) == g(1.3)
    assert pls.pls_omega_coefficient(cauchy_k4, 1, 0.0) == pytest.approx(g(0.0))
    v = complex(pls.pls_omega_coefficient(cauchy_k4, 2, cauchy_k4.s))
    assert v == pytest.approx(-g(cauchy_k4.s), abs=1e-14)
    assert v.real == pytest.approx(-0.035368, abs=1e-6)


def test_tau_coefficient(cauchy_k4):
    v = pls.pls_tau_coefficient(cauchy_k4, 1, 0.0)
    assert v == pytest.approx(cauchy_k4.r_s, abs=1e-10)
    for ell, tau in [(1, 0.7), (3, 2.0), (5, 0.1), (2, 6.0)]:
        quad = pls.pls_tau_coefficient(cauchy_k4, ell, tau)
        closed = complex(pls.pole_coefficients(cauchy_k4, [ell], [tau])[0, 0])
        assert abs(quad - closed) < 1e-10
        assert abs(quad) <= 1.0
    for tau in (-3.0, -0.5):
        assert abs(pls.pls_tau_coefficient(cauchy_k4, 2, tau)) <= 1.0
    cert = pls.decay_certificate(cauchy_k4, 0.25, L=1)
    assert abs(pls.pls_tau_coefficient(cauchy_k4, 8, 0.0)) <= cert.q**8 + 1e-6


def test_pole_coefficients_reject_negative_tau(cauchy_k4):
    with pytest.raises(ValueError):
        pls.pole_coefficients(cauchy_k4, [1], [-0.1])


def test_sup_beta_on_line_matches_grid():
    s, a = 2 * math.sqrt(2), 0.25
    x = np.linspace(-30, 30, 600001)
    grid = np.max(np.abs(pls.beta((x - 1j * a) / s)))
    q = pls.sup_beta_on_line(s, a)
    assert grid <= q + 1e-12
    assert q - grid < 1e-9
    assert pls.sup_beta_on_line(s, 1e-6) > 0.999


def test_decay_certificate(cauchy_k4):
    cert = pls.decay_certificate(cauchy_k4, 0.25, L=12)
    assert cert.q < 1
    ratios = np.array(cert.mode_norms[1:]) / np.array(cert.mode_norms[:-1])
    assert np.all(ratios[3:] <= cert.q + 0.01)
    assert cert.fitted_constant() < np.inf
    with pytest.raises(WeightTooLarge):
        pls.decay_certificate(cauchy_k4, 1.2)


def test_modes_for_tolerance():
    q = 0.9155103026147448
    L = pls.modes_for_tolerance(q)
    assert q**L < 1e-10 <= q ** (L - 1)
