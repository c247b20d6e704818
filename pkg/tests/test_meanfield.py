import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from kuramoto_pls import bicauchy, pls
from kuramoto_pls import meanfield as mf
from kuramoto_pls.errors import CutoffWarning, DivergenceDetected

SMALL = mf.TauGrid(-20.0, 20.0, 0.02)


@pytest.fixture(autouse=True)
def _quiet_cutoff():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        yield


@pytest.fixture(scope="module")
def ref_small(cauchy_k4):
    return mf.stationary_reference(cauchy_k4, SMALL, 48)


def trimmed(ref, L):
    return mf.FourierField(ref.grid, ref.values[:L].copy(), ref.dist, ref.tail[:L, :L].copy())


# -- grid and norms ----------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        mf.TauGrid(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        mf.TauGrid(-1.03, 1.0, 0.02)
    g = mf.TauGrid(-1.0, 2.0, 0.5)
    assert g.tau[g.zero_index] == 0.0
    assert g.n == 7
    with pytest.raises(ValueError):
        mf.NormParams(a=0.0)


def test_norm_zero_field():
    f = mf.FourierField(SMALL, np.zeros((3, SMALL.n), dtype=complex))
    assert mf.weighted_norm(f, mf.NormParams()) == 0.0


def test_norm_gaussian_mode():
    # a -> 0: int e^{-2t^2} (1 + 4 t^2) dt
    want2, _ = integrate.quad(lambda t: math.exp(-2 * t * t) * (1 + 4 * t * t), -np.inf, np.inf, epsabs=1e-13)
    assert abs(want2 - 2 * math.sqrt(math.pi / 2)) < 1e-12
    g = mf.TauGrid(-10.0, 10.0, 0.001)
    f = mf.FourierField(g, np.exp(-g.tau**2)[None, :].astype(complex))
    val, err = mf.weighted_norm(f, mf.NormParams(a=1e-9), with_error=True)
    assert abs(val - math.sqrt(want2)) < 1e-5
    assert abs(val - 1.583233) < 1e-5
    assert err < 0.01


def test_norm_k_monotone():
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((6, SMALL.n)) + 1j * rng.standard_normal((6, SMALL.n))
    f = mf.FourierField(SMALL, vals * np.exp(-SMALL.tau**2 / 10))
    ks = [1.0, 0.5, 0.0, -0.5, -1.0]
    norms = [mf.weighted_norm(f, mf.NormParams(0.25, k)) for k in ks]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_grid_norm_matches_quadrature(cauchy_k4):
    ref = mf.stationary_reference(cauchy_k4, mf.TauGrid(), 6)
    got = np.sqrt(mf.mode_norms_sq(ref.values, ref.grid, 0.25))
    for ell in (1, 3, 6):
        want = pls.mode_norm(cauchy_k4, ell, 0.25)
        assert abs(got[ell - 1] - want) < 1e-3 * want


def test_boundary_weight():
    assert mf.boundary_weight(mf.TauGrid(), 0.25) == pytest.approx(math.exp(-20))


# -- stationary field ----------------------------------------------------------


def test_stationary_field_tau_zero(cauchy_k4, ref_small):
    ells = np.arange(1, 9)
    want = pls.pole_coefficients(cauchy_k4, ells, 0.0)
    assert np.max(np.abs(ref_small.values[:8, SMALL.zero_index] - want)) < 1e-12
    r = mf.order_parameter(ref_small)
    assert abs(r - cauchy_k4.r_s) < 1e-10


def test_stationary_field_negative_tau(cauchy_k4, ref_small):
    # values left of zero come from the tau-ODE; compare with direct quadrature
    j = SMALL.zero_index
    for ell, tau in ((1, -0.7), (2, -3.0), (4, -1.5)):
        k = j + int(round(tau / SMALL.dtau))
        want = pls.pls_tau_coefficient(cauchy_k4, ell, tau)
        assert abs(ref_small.values[ell - 1, k] - want) < 1e-8


def test_stationary_field_gaussian(gauss_2kc):
    f = mf.beta_field(gauss_2kc.dist, gauss_2kc.s, mf.TauGrid(-4.0, 4.0, 0.02), 4)
    j = f.grid.zero_index
    for ell, tau in ((1, 0.0), (2, 1.0), (3, -2.0)):
        k = j + int(round(tau / 0.02))
        assert abs(f.values[ell - 1, k] - pls.pls_tau_coefficient(gauss_2kc, ell, tau)) < 1e-8


def test_stationary_residual(ref_small, cauchy_k4):
    # residual of l u_l' + (K l/2)(m u_{l-1} - conj(m) u_{l+1}) by centered differences
    K = cauchy_k4.K
    u = ref_small.values
    L = u.shape[0] - 1
    m = u[0, SMALL.zero_index]
    full = np.vstack([ref_small.u0()[None, :], u])
    ell = np.arange(1, L + 1)[:, None]
    du = np.gradient(u[:L], SMALL.dtau, axis=1)
    res = ell * du + 0.5 * K * ell * (m * full[:L] - np.conj(m) * full[2:L + 2])
    inner = slice(1, -1)
    scale = np.max(np.abs(ell * du))
    assert np.max(np.abs(res[:8, inner])) < 1e-3 * scale


def test_order_parameter_rotation(ref_small, cauchy_k4):
    rot = mf.rotate(ref_small, 0.3)
    assert abs(mf.order_parameter(rot) - cauchy_k4.r_s * np.exp(-0.3j)) < 1e-12
    zero = mf.FourierField(SMALL, np.zeros((2, SMALL.n), dtype=complex))
    assert mf.order_parameter(zero) == 0


# -- dynamics ----------------------------------------------------------------------


@pytest.mark.parametrize("ell", [1, 2, 5])
def test_free_transport_decay(cauchy1, ell):
    a, t_end = 0.25, 2.0
    g = mf.TauGrid(-20.0, 20.0, 0.01)
    vals = np.zeros((5, g.n), dtype=complex)
    vals[ell - 1] = np.exp(-((g.tau - 8.0) ** 2)) * np.exp(0.7j * g.tau)
    f = mf.FourierField(g, vals, cauchy1)
    sim = mf.Simulator(mf.SimConfig(0.0, cauchy1, g), f)
    before = mf.mode_norms_sq(f.values, g, a)[ell - 1]
    after = mf.mode_norms_sq(sim.run(t_end).values, g, a)
    assert abs(after[ell - 1] / before - math.exp(-2 * a * ell * t_end)) < 1e-9
    others = np.delete(after, ell - 1)
    assert np.all(others == 0)


def test_zero_field_stays_zero(cauchy1):
    f = mf.FourierField(SMALL, np.zeros((4, SMALL.n), dtype=complex), cauchy1)
    out = mf.Simulator(mf.SimConfig(4.0, cauchy1, SMALL), f).run(1.0)
    assert np.all(out.values == 0)


def test_step_wrapper_leaves_input(ref_small, cauchy_k4):
    f = mf.initial_field(cauchy_k4, mf.Dilate(0.02), SMALL, 16, trimmed(ref_small, 16))
    keep = f.values.copy()
    g = mf.step(f, mf.SimConfig(4.0, cauchy_k4.dist, SMALL))
    assert np.array_equal(f.values, keep)
    assert not np.array_equal(g.values, keep)


def test_stationarity(cauchy_k4, ref_small):
    L = 32
    f = trimmed(ref_small, L)
    sim = mf.Simulator(mf.SimConfig(4.0, cauchy_k4.dist, SMALL), f, ref_small)
    out = sim.run(5.0)
    diff = mf.FourierField(SMALL, out.values - f.values)
    assert mf.weighted_norm(diff, mf.NormParams(0.25, 0.0)) < 1e-4


def test_rotated_reference_is_fixed(cauchy_k4, ref_small):
    L = 32
    f = mf.rotate(trimmed(ref_small, L), 0.4)
    out = mf.Simulator(mf.SimConfig(4.0, cauchy_k4.dist, SMALL), f, ref_small).run(2.0)
    assert np.max(np.abs(out.values - f.values)) < 1e-12


def test_phase_equivariance(cauchy_k4, ref_small):
    L, theta = 24, 0.7
    cfg = mf.SimConfig(4.0, cauchy_k4.dist, SMALL)
    f = mf.initial_field(cauchy_k4, mf.Dilate(0.05), SMALL, L, trimmed(ref_small, L))
    a = mf.rotate(mf.Simulator(cfg, f, ref_small).run(1.0), theta)
    b = mf.Simulator(cfg, mf.rotate(f, theta), ref_small).run(1.0)
    assert np.max(np.abs(a.values - b.values)) < 1e-9
    # the plain split without a reference is equivariant too
    a = mf.rotate(mf.Simulator(cfg, f).run(1.0), theta)
    b = mf.Simulator(cfg, mf.rotate(f, theta)).run(1.0)
    assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_bound_preservation(cauchy_k4, ref_small):
    L = 32
    f = mf.initial_field(cauchy_k4, mf.Dilate(0.05), SMALL, L, trimmed(ref_small, L))
    assert np.max(np.abs(f.values)) <= 1 + 1e-9
    peak = []
    sim = mf.Simulator(mf.SimConfig(4.0, cauchy_k4.dist, SMALL), f, ref_small)
    sim.run(5.0, 0.5, lambda t, g: peak.append(np.max(np.abs(g.values))))
    assert max(peak) <= 1 + 5e-3


def test_cutoff_warning(cauchy_k4, ref_small):
    f = trimmed(ref_small, 4)
    sim = mf.Simulator(mf.SimConfig(4.0, cauchy_k4.dist, SMALL), f, ref_small)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        sim.run(0.1)
    assert any(issubclass(x.category, CutoffWarning) for x in w)


# -- relaxation -------------------------------------------------------------------


def test_parse_perturbation():
    assert mf.parse_perturbation("rotate:0.05") == mf.Rotate(0.05)
    assert mf.parse_perturbation("dilate:0.02") == mf.Dilate(0.02)
    assert mf.parse_perturbation("bump:0.01,2,0.5") == mf.Bump(0.01, 2.0, 0.5)
    with pytest.raises(ValueError):
        mf.parse_perturbation("shear:1")


def test_circle_distance_recovers_rotation(ref_small):
    ref = trimmed(ref_small, 16)
    cd = mf.CircleDistance(ref, 0.25)
    for theta in (0.05, -1.234, 3.0):
        d, th = cd(mf.rotate(ref, theta).values)
        assert d < 1e-10
        assert abs(th - theta) < 1e-10


def test_fit_rate():
    t = np.linspace(0, 10, 101)
    b, r2 = mf.fit_rate(t, 3 * np.exp(-0.4 * t))
    assert abs(b - 0.4) < 1e-12
    assert abs(r2 - 1) < 1e-12


def test_relaxation_grid():
    g = mf.relaxation_grid(60.0)
    assert g.tau_min == -80.0 and g.tau_max == 40.0
    assert mf.relaxation_grid(5.0).tau_min == -40.0


def test_relaxation_short_dilate(cauchy_k4):
    cfg = mf.SimConfig(4.0, cauchy_k4.dist, SMALL, t_end=8.0, record_every=0.5, L=48)
    res = mf.relaxation_experiment(cauchy_k4, mf.Dilate(0.02), cfg)
    assert res.distance[-1] < 0.5 * res.distance[0]
    assert abs(res.reference_r - cauchy_k4.r_s) < 1e-10


def test_relaxation_bump_keeps_marginal(cauchy_k4):
    cfg = mf.SimConfig(4.0, cauchy_k4.dist, SMALL, t_end=4.0, record_every=0.5, L=32)
    res = mf.relaxation_experiment(cauchy_k4, mf.Bump(0.01, 2.0, 1.0), cfg)
    assert np.all(np.isfinite(res.distance))


def test_unstable_branch_diverges(bicauchy_k8):
    st = bicauchy.branch_pls_state(bicauchy_k8["minus"])
    cfg = mf.SimConfig(8.0, st.dist, SMALL, t_end=20.0, record_every=0.5, L=48)
    with pytest.raises(DivergenceDetected):
        mf.relaxation_experiment(st, mf.Dilate(0.02), cfg)


def test_stable_branch_does_not_diverge(bicauchy_k8):
    st = bicauchy.branch_pls_state(bicauchy_k8["plus"])
    cfg = mf.SimConfig(8.0, st.dist, SMALL, t_end=8.0, record_every=0.5, L=48)
    res = mf.relaxation_experiment(st, mf.Dilate(0.02), cfg)
    assert res.distance[-1] < res.distance[0]
