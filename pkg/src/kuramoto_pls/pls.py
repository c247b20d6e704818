"""Partially locked states with the locked phase profile fixed to the
arcsine branch (alpha = 1 everywhere).

Conventions: the Fourier variable is ``tau`` with kernel ``exp(-i tau w)``,
the state is scaled by ``s = K r_s`` and the mode-l coefficient of the
stationary density is ``beta(w/s)**l * g(w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .distributions import FrequencyDistribution
from .errors import NoSolution, OutOfRange, UpperHalfPlane, WeightTooLarge

QUAD = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
U_MAX = 50.0  # drifting tails: integrands decay at least like exp(-2u)


def _sqrt_one_minus_sq(z: np.ndarray) -> np.ndarray:
    # sqrt(1-z) * sqrt(1+z), each factor kept on the lower-half-plane side of
    # its cut, so real-axis values are limits from below.
    zero_im = z.imag == 0
    w1 = np.empty_like(z)
    w2 = np.empty_like(z)
    w1.real, w1.imag = 1.0 - z.real, np.where(zero_im, 0.0, -z.imag)
    w2.real, w2.imag = 1.0 + z.real, np.where(zero_im, -0.0, z.imag)
    return np.sqrt(w1) * np.sqrt(w2)


def beta(z):
    """beta(z) = -i z + sqrt(1 - z**2), continued to Im z <= 0 with |beta| <= 1."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag > 1e-12):
        raise UpperHalfPlane("beta is defined for Im z <= 0 only")
    z = z.real + 1j * np.minimum(z.imag, 0.0)
    root = _sqrt_one_minus_sq(z)
    plus = -1j * z + root
    minus = 1j * z + root  # plus * minus == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(minus) > np.abs(plus), 1.0 / minus, plus)
    return out[()] if out.ndim == 0 else out


def beta_minus(omega: float) -> complex:
    if abs(omega) > 1:
        raise OutOfRange("beta_minus needs |omega| <= 1")
    return complex(-math.sqrt(1.0 - omega * omega), -omega)


# ---------------------------------------------------------------------------
# self-consistency


def _locked_and_drift(g, s: float):
    """Integral of g(s w) beta(w) over R, split into the locked interval
    (w = sin phi) and the two drifting tails (w = +-cosh u)."""
    re_lock, _ = integrate.quad(lambda p: g(s * math.sin(p)) * math.cos(p) ** 2, -math.pi / 2, math.pi / 2, **QUAD)
    im_lock, _ = integrate.quad(
        lambda p: -g(s * math.sin(p)) * math.sin(p) * math.cos(p), -math.pi / 2, math.pi / 2, **QUAD
    )
    im_drift, _ = integrate.quad(
        lambda u: -(g(s * math.cosh(u)) - g(-s * math.cosh(u))) * math.exp(-u) * math.sinh(u), 0.0, U_MAX, **QUAD
    )
    return re_lock, im_lock + im_drift


def self_consistency_residual(dist: FrequencyDistribution, K: float, r: float) -> complex:
    """K * integral of g(K r w) beta(w) dw, minus one."""
    g = lambda w: float(dist.density(w))
    re, im = _locked_and_drift(g, K * r)
    return complex(K * re - 1.0, K * im)


def drift_balance(dist: FrequencyDistribution, K: float, r: float) -> float:
    """Net drift of the state: the tail term minus the first moment, combined
    into one convergent integral. Zero for even g; must vanish for a
    real order parameter."""
    return self_consistency_residual(dist, K, r).imag / K


@dataclass(frozen=True)
class PlsState:
    dist: FrequencyDistribution
    K: float
    r_s: float
    residual: complex = 0j

    @property
    def s(self) -> float:
        return self.K * self.r_s


def solve_rs(dist: FrequencyDistribution, K: float, bracket=None, tol: float = 1e-10, n_scan: int = 200) -> list[PlsState]:
    """All order parameters found on a scan of (1e-6, 1], largest first."""
    if K <= 0:
        raise ValueError("K must be positive")
    lo, hi = bracket if bracket is not None else (1e-6, 1.0)
    f = lambda r: self_consistency_residual(dist, K, r).real
    rs = np.linspace(lo, hi, n_scan)
    vals = np.array([f(r) for r in rs])
    roots = []
    for i in range(n_scan - 1):
        if vals[i] == 0.0:
            roots.append(rs[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(optimize.brentq(f, rs[i], rs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    if vals[-1] == 0.0:
        roots.append(rs[-1])
    if not roots:
        raise NoSolution(f"no partially locked state for K={K} on r in ({lo}, {hi})")
    states = []
    for r in sorted(roots, reverse=True):
        res = self_consistency_residual(dist, K, r)
        if abs(res.imag) > tol:
            raise NoSolution(
                f"drift balance fails at r={r} (imaginary residual {res.imag:.3e}); "
                "re-centre the frequencies in the rotating frame"
            )
        states.append(PlsState(dist, float(K), float(r), res))
    return states


# ---------------------------------------------------------------------------
# coefficients


def pls_omega_coefficient(state: PlsState, ell: int, omega):
    if ell < 0:
        raise ValueError("ell must be >= 0")
    g = state.dist.density(omega)
    if ell == 0:
        return g
    return beta(np.asarray(omega, dtype=float) / state.s) ** ell * g


def pls_tau_coefficient(state: PlsState, ell: int, tau: float) -> complex:
    """Fourier coefficient of the state at (ell, tau) by real-axis quadrature."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    s = state.s
    g = state.dist.density

    def locked(p):
        w = s * math.sin(p)
        return complex(np.exp(-1j * tau * w) * beta(math.sin(p)) ** ell * g(w)) * s * math.cos(p)

    def tail(u, sign):
        w = sign * s * math.cosh(u)
        b = -1j * sign * math.exp(-u)
        return complex(np.exp(-1j * tau * w) * b**ell * g(w)) * s * math.sinh(u)

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=1000, complex_func=True)
    v0, _ = integrate.quad(locked, -math.pi / 2, math.pi / 2, **opts)
    if tau == 0.0:
        vp, _ = integrate.quad(tail, 0.0, U_MAX, args=(1.0,), **opts)
        vm, _ = integrate.quad(tail, 0.0, U_MAX, args=(-1.0,), **opts)
        return v0 + vp + vm
    # near the locking edge in u, further out in w with a Fourier weight
    u_split = 2.0
    w_split = s * math.cosh(u_split)
    total = v0
    for sign in (1.0, -1.0):
        near, _ = integrate.quad(tail, 0.0, u_split, args=(sign,), **opts)
        F = lambda w, part: getattr(complex(beta(sign * w / s)) ** ell * float(g(sign * w)), part)
        c = [integrate.quad(F, w_split, np.inf, args=(part,), weight="cos", wvar=abs(tau))[0] for part in ("real", "imag")]
        sn = [integrate.quad(F, w_split, np.inf, args=(part,), weight="sin", wvar=abs(tau))[0] for part in ("real", "imag")]
        # e^{-i tau sign w} = cos(|tau| w) - i sign sgn(tau) sin(|tau| w)
        k = sign * math.copysign(1.0, tau)
        total += near + complex(c[0], c[1]) - 1j * k * complex(sn[0], sn[1])
    return total


def pole_coefficients(state: PlsState, ells, tau=0.0) -> np.ndarray:
    """Closed form of the tau-coefficients for Lorentzian mixtures, tau >= 0."""
    ells = np.asarray(ells)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("pole formula holds for tau >= 0")
    out = 0j
    for w, p in state.dist.lower_poles:
        out = out + w * np.multiply.outer(beta(p / state.s) ** ells, np.exp(-1j * p * tau))
    return out


# ---------------------------------------------------------------------------
# decay certificate


@dataclass
class DecayCertificate:
    a: float
    q: float
    mode_norms: list = field(default_factory=list)

    def fitted_constant(self, ell_min: int = 4) -> float:
        return max(n / self.q ** (i + 1) for i, n in enumerate(self.mode_norms) if i + 1 >= ell_min)


def sup_beta_on_line(s: float, a: float, n: int = 20001) -> float:
    """sup over real x of |beta((x - i a)/s)|.

    |beta(z)| < rho once |z| > (1 + rho)/(2 rho), so a finite window whose
    half-width follows from a first estimate covers the supremum."""
    y = a / s
    q0 = abs(complex(beta(-1j * y)))
    half = (1 + q0) / (2 * q0) + 1.0
    xs = np.linspace(-half, half, n)
    vals = np.abs(beta(xs - 1j * y))
    i = int(np.argmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    res = optimize.minimize_scalar(
        lambda x: -abs(complex(beta(x - 1j * y))), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    return float(max(vals[i], -res.fun))


def mode_norm(state: PlsState, ell: int, a: float) -> float:
    """Weighted norm of the ell-th tau-coefficient via Plancherel on the
    shifted line w = x - i a."""
    s = state.s

    def integrand(x):
        z = complex(x, -a)
        F = complex(beta(z / s)) ** ell * complex(state.dist.eval_complex(z))
        return (1.0 + abs(z) ** 2) * abs(F) ** 2

    pts = sorted({-s, s, *(p.real for _, p in state.dist.lower_poles)} if state.dist.is_rational else {-s, s})
    edges = [-np.inf, *pts, np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-11, limit=400)
        total += v
    return math.sqrt(2 * math.pi * total)


def decay_certificate(state: PlsState, a: float, L: int = 16) -> DecayCertificate:
    if a <= 0:
        raise ValueError("a must be positive")
    if a >= state.dist.analyticity_halfwidth:
        raise WeightTooLarge(f"a={a} reaches the analyticity half-width {state.dist.analyticity_halfwidth}")
    q = sup_beta_on_line(state.s, a)
    norms = [mode_norm(state, ell, a) for ell in range(1, L + 1)]
    return DecayCertificate(a=a, q=q, mode_norms=norms)


def modes_for_tolerance(q: float, tol: float = 1e-10) -> int:
    """Smallest L with q**L < tol."""
    return int(math.floor(math.log(tol) / math.log(q))) + 1
