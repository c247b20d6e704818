"""Finite-N Kuramoto ensembles.

theta_i' = omega_i + K Im(Z e^{-i theta_i}),  Z = mean(e^{i theta_j}).

Phases are advanced as unit complex numbers. Every RK4 stage phase is the
step-start phase rotated by the free part e^{i c omega dt} (precomputed once)
and by the small coupling part c dt K q, whose modulus is below 0.01 under
the step-size rule, so a short Taylor series replaces sin/cos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .distributions import FrequencyDistribution
from .pls import solve_rs


@dataclass
class OscillatorEnsemble:
    theta: np.ndarray
    omega: np.ndarray
    K: float
    sampling: str = "iid"
    seed: int | None = None

    def __post_init__(self):
        self.theta = np.mod(np.asarray(self.theta, dtype=float), 2 * math.pi)
        self.omega = np.asarray(self.omega, dtype=float)
        self.omega.setflags(write=False)
        if self.theta.shape != self.omega.shape:
            raise ValueError("theta and omega must have the same length")

    @property
    def N(self) -> int:
        return self.theta.size

    def order_parameter(self) -> complex:
        return complex(np.mean(np.exp(1j * self.theta)))


def sample_frequencies(dist: FrequencyDistribution, N: int, sampling: str = "iid", seed: int | None = 0) -> np.ndarray:
    if sampling == "iid":
        return dist.sample(np.random.default_rng(seed), N)
    if sampling == "quantile":
        return dist.quantile((np.arange(N) + 0.5) / N)
    raise ValueError(f"unknown sampling {sampling!r}")


def pls_initial_phases(omega: np.ndarray, s: float, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
    """Draw phases from the stationary conditional law at scale s = K r_s.

    Locked oscillators sit at arcsin(omega/s). A drifting oscillator is
    placed at a uniformly random time along its periodic orbit of
    theta' = omega - s sin(theta), whose closed form is
    tan(theta/2) = (s + nu tan(phi))/omega with nu = sqrt(omega^2 - s^2).
    """
    omega = np.asarray(omega, dtype=float)
    theta = np.empty_like(omega)
    locked = np.abs(omega) <= s
    theta[locked] = np.arcsin(omega[locked] / s)
    w = omega[~locked]
    nu = np.sqrt(w * w - s * s)
    phi = math.pi * (rng.random(w.size) - 0.5)
    theta[~locked] = 2 * np.arctan((s + nu * np.tan(phi)) / w)
    if noise:
        theta += noise * rng.standard_normal(theta.size)
    return np.mod(theta, 2 * math.pi)


def make_ensemble(dist: FrequencyDistribution, K: float, N: int, seed: int = 0, sampling: str = "iid",
                  init: str = "pls", r_s: float | None = None, noise: float = 1e-3) -> OscillatorEnsemble:
    """Frequencies from ``sampling``; phases from the PLS law (``init='pls'``)
    or uniform (``init='uniform'``)."""
    rng = np.random.default_rng(seed)
    omega = sample_frequencies(dist, N, sampling, seed)
    if init == "pls":
        if r_s is None:
            r_s = solve_rs(dist, K)[0].r_s
        theta = pls_initial_phases(omega, K * r_s, rng, noise)
    elif init == "uniform":
        theta = 2 * math.pi * rng.random(N)
    else:
        raise ValueError(f"unknown init {init!r}")
    return OscillatorEnsemble(theta, omega, float(K), sampling, seed)


def rhs(e: OscillatorEnsemble) -> np.ndarray:
    Z = e.order_parameter()
    return e.omega + e.K * (Z.imag * np.cos(e.theta) - Z.real * np.sin(e.theta))


def rhs_direct(e: OscillatorEnsemble) -> np.ndarray:
    diff = e.theta[None, :] - e.theta[:, None]
    return e.omega + e.K / e.N * np.sin(diff).sum(axis=1)


# ---------------------------------------------------------------------------
# RK4 kernel


@njit(cache=True, fastmath=True)
def _rotate(cr, ci, x):
    x2 = x * x
    c = 1.0 - x2 * (0.5 - x2 * (1.0 / 24.0 - x2 / 720.0))
    s = x * (1.0 - x2 * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 / 5040.0)))
    return cr * c - ci * s, cr * s + ci * c


@njit(cache=True, fastmath=True)
def _rk4_kernel(cr, ci, omega, K, dt, n_steps, stride):
    N = cr.size
    hr = np.cos(0.5 * dt * omega)
    hi = np.sin(0.5 * dt * omega)
    fr = np.cos(dt * omega)
    fi = np.sin(dt * omega)
    pr = np.empty(N)
    pi_ = np.empty(N)
    acc = np.empty(N)
    n_rec = n_steps // stride + 1
    rec = np.empty(n_rec, dtype=np.complex128)
    inv = 1.0 / N

    zr = 0.0
    zi = 0.0
    for i in range(N):
        zr += cr[i]
        zi += ci[i]
    zr *= inv
    zi *= inv
    rec[0] = complex(zr, zi)
    k_rec = 1
    half = 0.5 * dt * K
    full = dt * K
    for step in range(1, n_steps + 1):
        # stage 1 -> stage-2 phases
        ar = 0.0
        ai = 0.0
        for i in range(N):
            q = zi * cr[i] - zr * ci[i]
            acc[i] = q
            br = cr[i] * hr[i] - ci[i] * hi[i]
            bi = cr[i] * hi[i] + ci[i] * hr[i]
            xr, xi = _rotate(br, bi, half * q)
            pr[i] = xr
            pi_[i] = xi
            ar += xr
            ai += xi
        zr = ar * inv
        zi = ai * inv
        # stage 2 -> stage-3 phases
        ar = 0.0
        ai = 0.0
        for i in range(N):
            q = zi * pr[i] - zr * pi_[i]
            acc[i] += 2.0 * q
            br = cr[i] * hr[i] - ci[i] * hi[i]
            bi = cr[i] * hi[i] + ci[i] * hr[i]
            xr, xi = _rotate(br, bi, half * q)
            pr[i] = xr
            pi_[i] = xi
            ar += xr
            ai += xi
        zr = ar * inv
        zi = ai * inv
        # stage 3 -> stage-4 phases
        ar = 0.0
        ai = 0.0
        for i in range(N):
            q = zi * pr[i] - zr * pi_[i]
            acc[i] += 2.0 * q
            br = cr[i] * fr[i] - ci[i] * fi[i]
            bi = cr[i] * fi[i] + ci[i] * fr[i]
            xr, xi = _rotate(br, bi, full * q)
            pr[i] = xr
            pi_[i] = xi
            ar += xr
            ai += xi
        zr = ar * inv
        zi = ai * inv
        # stage 4 -> new step
        ar = 0.0
        ai = 0.0
        for i in range(N):
            q = zi * pr[i] - zr * pi_[i]
            tot = (acc[i] + q) / 6.0
            br = cr[i] * fr[i] - ci[i] * fi[i]
            bi = cr[i] * fi[i] + ci[i] * fr[i]
            xr, xi = _rotate(br, bi, full * tot)
            cr[i] = xr
            ci[i] = xi
            ar += xr
            ai += xi
        zr = ar * inv
        zi = ai * inv
        if step % stride == 0:
            rec[k_rec] = complex(zr, zi)
            k_rec += 1
    return rec


@dataclass
class Trajectory:
    t: np.ndarray
    Z: np.ndarray
    theta_final: np.ndarray


def max_step(K: float) -> float:
    return 0.01 / max(1.0, K)


def integrate(e: OscillatorEnsemble, t_end: float, dt: float | None = None, record_every: float = 0.1) -> Trajectory:
    """Classical RK4 for the phases; records Z every ``record_every``."""
    dmax = max_step(e.K)
    dt = dmax if dt is None else float(dt)
    if dt > dmax * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds 0.01/max(1, K) = {dmax}")
    stride = max(1, int(math.ceil(record_every / dt - 1e-9)))
    dt = record_every / stride
    n_steps = stride * int(math.ceil(t_end / record_every - 1e-9))
    cr = np.cos(e.theta)
    ci = np.sin(e.theta)
    rec = _rk4_kernel(cr, ci, e.omega, float(e.K), dt, n_steps, stride)
    t = np.arange(rec.size) * dt * stride
    return Trajectory(t, rec, np.mod(np.arctan2(ci, cr), 2 * math.pi))


@dataclass
class DampingResult:
    deviation: float
    passed: bool
    r_s: float
    trajectory: Trajectory


def damping_check(dist: FrequencyDistribution, K: float, N: int, seed: int, t_window=(20.0, 100.0),
                  tol: float = 0.05, sampling: str = "iid", r_s: float | None = None, noise: float = 1e-3,
                  record_every: float = 0.1) -> DampingResult:
    """sup over the window of ||Z(t)| - r_s| for a PLS-law start."""
    if r_s is None:
        r_s = solve_rs(dist, K)[0].r_s
    e = make_ensemble(dist, K, N, seed, sampling, "pls", r_s, noise)
    tr = integrate(e, t_window[1], record_every=record_every)
    mask = (tr.t >= t_window[0] - 1e-9) & (tr.t <= t_window[1] + 1e-9)
    dev = float(np.max(np.abs(np.abs(tr.Z[mask]) - r_s)))
    return DampingResult(dev, dev <= tol, r_s, tr)


def conditional_mean(omega: float, s: float, n: int = 200000, seed: int = 0) -> complex:
    """Monte Carlo mean of e^{-i theta} under the stationary law; equals beta(omega/s)."""
    th = pls_initial_phases(np.full(n, omega), s, np.random.default_rng(seed))
    return complex(np.mean(np.exp(-1j * th)))


__all__ = [
    "OscillatorEnsemble", "make_ensemble", "sample_frequencies", "pls_initial_phases", "rhs", "rhs_direct",
    "integrate", "Trajectory", "damping_check", "DampingResult", "max_step", "conditional_mean",
]
