"""Analytic frequency marginals g and their Fourier transforms.

Every supported density has a closed-form Fourier transform and a known
complex continuation: Cauchy (Lorentzian) mixtures, which include the
single Cauchy law and the symmetric bi-Cauchy law, and the centred Gaussian.
Lorentzian mixtures are rational, so integrals of ``g`` against functions
analytic in the lower half-plane reduce to sums over the lower poles
(see :attr:`FrequencyDistribution.lower_poles`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DegenerateDensity, PoleHit

POLE_RADIUS = 1e-9


@dataclass(frozen=True)
class Lorentzian:
    weight: float
    delta: float
    center: float

    @property
    def lower_pole(self) -> complex:
        return complex(self.center, -self.delta)


@dataclass(frozen=True)
class FrequencyDistribution:
    """Immutable description of an analytic frequency density.

    Use the constructors :func:`cauchy`, :func:`bicauchy`, :func:`gaussian`,
    :func:`cauchy_mixture` or :func:`parse` rather than building it directly.
    """

    kind: str
    components: tuple[Lorentzian, ...] = ()
    sigma: float = 0.0

    # -- classification -------------------------------------------------
    @property
    def is_rational(self) -> bool:
        return self.kind != "gaussian"

    @property
    def is_even(self) -> bool:
        if self.kind == "gaussian":
            return True
        mirrored = sorted((c.weight, c.delta, -c.center) for c in self.components)
        own = sorted((c.weight, c.delta, c.center) for c in self.components)
        return np.allclose(mirrored, own, rtol=0, atol=1e-14)

    @property
    def analyticity_halfwidth(self) -> float:
        """Distance from the real axis to the nearest pole (inf if entire)."""
        if self.kind == "gaussian":
            return math.inf
        return min(c.delta for c in self.components)

    @property
    def scale(self) -> float:
        """Typical frequency spread, used to size contours and windows."""
        if self.kind == "gaussian":
            return 4.0 * self.sigma
        return max(c.delta + abs(c.center) for c in self.components)

    @property
    def lower_poles(self) -> list[tuple[float, complex]]:
        """(weight, pole) pairs such that, for F analytic and decaying in the
        lower half-plane, the integral of F(w) g(w) over R equals
        ``sum(weight * F(pole))``."""
        if self.kind == "gaussian":
            raise TypeError("gaussian density has no poles")
        return [(c.weight, c.lower_pole) for c in self.components]

    # -- evaluation -----------------------------------------------------
    def density(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind == "gaussian":
            s = self.sigma
            out = np.exp(-0.5 * (omega / s) ** 2) / (s * math.sqrt(2 * math.pi))
        else:
            out = np.zeros_like(omega)
            for c in self.components:
                out = out + c.weight * c.delta / (math.pi * ((omega - c.center) ** 2 + c.delta**2))
        return out[()] if out.ndim == 0 else out

    def fourier(self, tau):
        """Closed-form transform of g: integral of exp(-i tau w) g(w) dw."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "gaussian":
            out = np.exp(-0.5 * (self.sigma * tau) ** 2) + 0j
        else:
            out = np.zeros(tau.shape, dtype=complex)
            for c in self.components:
                out = out + c.weight * np.exp(-c.delta * np.abs(tau) - 1j * c.center * tau)
        return out[()] if out.ndim == 0 else out

    def fourier_derivative(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "gaussian":
            s2 = self.sigma**2
            out = -s2 * tau * np.exp(-0.5 * s2 * tau**2) + 0j
        else:
            out = np.zeros(tau.shape, dtype=complex)
            for c in self.components:
                out = out + c.weight * (-c.delta * np.sign(tau) - 1j * c.center) * np.exp(
                    -c.delta * np.abs(tau) - 1j * c.center * tau
                )
        return out[()] if out.ndim == 0 else out

    def eval_complex(self, z):
        """Analytic continuation of the density to complex arguments."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "gaussian":
            s = self.sigma
            out = np.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2 * math.pi))
        else:
            out = np.zeros(z.shape, dtype=complex)
            for c in self.components:
                for pole in (complex(c.center, c.delta), complex(c.center, -c.delta)):
                    if np.any(np.abs(z - pole) < POLE_RADIUS):
                        raise PoleHit(f"z within {POLE_RADIUS} of pole {pole}")
                out = out + c.weight * c.delta / (math.pi * ((z - c.center) ** 2 + c.delta**2))
        return out[()] if out.ndim == 0 else out

    def critical_coupling(self) -> float:
        g0 = float(self.density(0.0))
        if g0 <= 0:
            raise DegenerateDensity(f"g(0) = {g0} <= 0")
        return 2.0 / (math.pi * g0)

    def fourier_norm_a(self, a: float) -> float:
        """Weighted Sobolev norm of the transform, or ``math.inf``.

        The weight exp(2 a tau) is one-sided, so the integral diverges as soon
        as ``a`` reaches the pole distance of a Lorentzian component.
        """
        if a <= 0:
            raise ValueError("a must be positive")
        if a >= self.analyticity_halfwidth:
            return math.inf

        def integrand(t):
            return math.exp(2 * a * t) * (abs(self.fourier(t)) ** 2 + abs(self.fourier_derivative(t)) ** 2)

        if self.kind == "gaussian":
            sig2 = self.sigma**2
            peak = a / sig2
            half = 40.0 / self.sigma
            val, _ = integrate.quad(lambda t: math.exp(2 * a * t - sig2 * t * t) * (1 + sig2 * sig2 * t * t),
                                    peak - half, peak + half, points=[0.0] if abs(peak) < half else None,
                                    epsabs=0, epsrel=1e-12, limit=400)
        else:
            # integrand <= C exp(-2 (halfwidth - |a|) |tau|); truncate where that is negligible
            d = self.analyticity_halfwidth
            left, _ = integrate.quad(integrand, -40.0 / (d + a), 0.0, epsabs=1e-14, epsrel=1e-12, limit=400)
            right, _ = integrate.quad(integrand, 0.0, 40.0 / (d - a), epsabs=1e-14, epsrel=1e-12, limit=400)
            val = left + right
        return math.sqrt(val)

    def two_sided_norm(self, a: float) -> float:
        """Diagnostic: L2 norm of exp(a|tau|) times the transform."""
        if a >= self.analyticity_halfwidth:
            return math.inf

        def integrand(t):
            return math.exp(2 * a * abs(t)) * abs(self.fourier(t)) ** 2

        upper = 40.0 / (self.analyticity_halfwidth - a) if self.is_rational else a / self.sigma**2 + 10.0 / self.sigma
        val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=400)
        return math.sqrt(2 * val)

    # -- sampling -------------------------------------------------------
    def cdf(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind == "gaussian":
            return special.ndtr(omega / self.sigma)
        out = np.zeros_like(omega)
        for c in self.components:
            out = out + c.weight * (0.5 + np.arctan((omega - c.center) / c.delta) / math.pi)
        return out

    def quantile(self, p):
        """Inverse CDF; closed form for single-component laws, bisection otherwise."""
        p = np.asarray(p, dtype=float)
        if self.kind == "gaussian":
            return self.sigma * special.ndtri(p)
        if len(self.components) == 1:
            c = self.components[0]
            return c.center + c.delta * np.tan(math.pi * (p - 0.5))
        # bracket from the widest single-Lorentzian quantiles
        lo_c = min(c.center for c in self.components)
        hi_c = max(c.center for c in self.components)
        dmax = max(c.delta for c in self.components)
        wmin = min(c.weight for c in self.components)
        lo = lo_c + dmax * np.tan(math.pi * (np.minimum(p, 0.5) * wmin - 0.5)) - 1.0
        hi = hi_c + dmax * np.tan(math.pi * (0.5 - (1 - np.maximum(p, 0.5)) * wmin)) + 1.0
        lo = np.broadcast_to(lo, p.shape).copy()
        hi = np.broadcast_to(hi, p.shape).copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-13 * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma, size=n)
        weights = np.array([c.weight for c in self.components])
        which = rng.choice(len(self.components), size=n, p=weights / weights.sum())
        deltas = np.array([c.delta for c in self.components])[which]
        centers = np.array([c.center for c in self.components])[which]
        return centers + deltas * np.tan(math.pi * (rng.random(n) - 0.5))

    def describe(self) -> str:
        if self.kind == "gaussian":
            return f"gauss:sigma={self.sigma!r}"
        if self.kind == "cauchy":
            c = self.components[0]
            return f"cauchy:delta={c.delta!r},omega0={c.center!r}"
        if self.kind == "bicauchy":
            c = self.components[0]
            return f"bicauchy:delta={c.delta!r},omega0={abs(c.center)!r}"
        return "mix:" + ";".join(f"{c.weight!r},{c.delta!r},{c.center!r}" for c in self.components)


def cauchy(delta: float = 1.0, omega0: float = 0.0) -> FrequencyDistribution:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return FrequencyDistribution("cauchy", (Lorentzian(1.0, float(delta), float(omega0)),))


def bicauchy(delta: float = 1.0, omega0: float = 2.0) -> FrequencyDistribution:
    if delta <= 0 or omega0 < 0:
        raise ValueError("need delta > 0 and omega0 >= 0")
    d, w = float(delta), float(omega0)
    return FrequencyDistribution("bicauchy", (Lorentzian(0.5, d, w), Lorentzian(0.5, d, -w)))


def gaussian(sigma: float = 1.0) -> FrequencyDistribution:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return FrequencyDistribution("gaussian", sigma=float(sigma))


def cauchy_mixture(parts: Iterable[Sequence[float]]) -> FrequencyDistribution:
    comps = tuple(Lorentzian(float(w), float(d), float(o)) for w, d, o in parts)
    if not comps:
        raise ValueError("empty mixture")
    if any(c.weight <= 0 or c.delta <= 0 for c in comps):
        raise ValueError("mixture weights and half-widths must be positive")
    total = sum(c.weight for c in comps)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"mixture weights sum to {total}, not 1")
    return FrequencyDistribution("mixture", comps)


def _keyvals(body: str) -> dict[str, float]:
    out = {}
    for item in filter(None, body.split(",")):
        key, _, val = item.partition("=")
        if not _:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip().lower()] = float(val)
    return out


def parse(spec: str) -> FrequencyDistribution:
    """Parse ``cauchy:delta=1``, ``bicauchy:delta=1,omega0=2``,
    ``gauss:sigma=1`` or ``mix:w1,d1,o1;w2,d2,o2``."""
    name, _, body = spec.strip().partition(":")
    name = name.lower()
    if name == "mix":
        parts = [tuple(float(x) for x in chunk.split(",")) for chunk in body.split(";") if chunk.strip()]
        if any(len(p) != 3 for p in parts):
            raise ValueError("mixture components need weight,delta,omega0")
        return cauchy_mixture(parts)
    kv = _keyvals(body)
    try:
        if name == "cauchy":
            return cauchy(kv.pop("delta", 1.0), kv.pop("omega0", 0.0))
        if name == "bicauchy":
            return bicauchy(kv.pop("delta", 1.0), kv.pop("omega0"))
        if name in ("gauss", "gaussian"):
            return gaussian(kv.pop("sigma", 1.0))
    except KeyError as exc:
        raise ValueError(f"missing parameter {exc} in {spec!r}") from None
    finally:
        if name in ("cauchy", "bicauchy", "gauss", "gaussian") and kv:
            raise ValueError(f"unknown parameters {sorted(kv)} in {spec!r}")
    raise ValueError(f"unknown distribution kind {name!r}")
