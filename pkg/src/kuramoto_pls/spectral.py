"""Spectral stability of a partially locked state.

The dispersion function is D(lam) = det(I - (K/2) M(lam)) with

    M = [[J0(lam),             J2(lam)           ],
         [conj J2(conj lam),   conj J0(conj lam) ]]

    Jk(lam) = integral of beta(w/s)**k g(w) / (lam + i w + s beta(w/s)) dw.

The denominator equals ``lam + s*S(w/s)`` with ``S(z) = sqrt(1 - z**2)``,
whose real part is positive in the open lower half-plane. Three evaluators
are provided:

``poles``    exact residue sum for Lorentzian mixtures;
``contour``  trapezoid rule on the shifted line w = x - i a' (x = c sinh v),
             which is smooth up to and across Re lam = 0;
``quad``     adaptive quadrature on the real axis (an independent check,
             valid for Re lam > 0 only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import AxisTooClose, ContourTooClose, NonConvergent, NotEven
from .pls import QUAD, U_MAX, PlsState, beta

WINDING_FLOOR = 1e-6
SIMPLICITY_TOL = 1e-4
MAX_SAMPLES = 2**20
DELTA_SWEEP = (1e-2, 1e-3, 1e-4)


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class StabilityReport:
    zero_count: int | None
    simplicity: float | None
    verdict: Verdict
    factor_counts: tuple[int, int] | None = None  # (1 - K h_c, 1 - K h_s)
    delta_counts: dict = field(default_factory=dict)
    far_edge_deviation: float | None = None
    enlarged_count: int | None = None
    reason: str = ""

    def as_dict(self) -> dict:
        return {
            "zero_count": self.zero_count,
            "simplicity": self.simplicity,
            "verdict": self.verdict.value,
            "factor_counts": list(self.factor_counts) if self.factor_counts else None,
            "delta_counts": {f"{k:g}": v for k, v in self.delta_counts.items()},
            "far_edge_deviation": self.far_edge_deviation,
            "enlarged_count": self.enlarged_count,
            "reason": self.reason,
        }


class SpectralProblem:
    def __init__(self, pls: PlsState, delta: float = 1e-3, X: float | None = None, Y: float | None = None,
                 method: str = "auto"):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.pls = pls
        self.K = pls.K
        self.s = pls.s
        self.delta = float(delta)
        self.X = float(X) if X is not None else 2.0 * pls.K
        self.Y = float(Y) if Y is not None else 2.0 * pls.K + 4.0 * pls.dist.scale
        if self.X <= self.delta or self.Y <= 0:
            raise ValueError("contour needs X > delta and Y > 0")
        if method == "auto":
            method = "poles" if pls.dist.is_rational else "contour"
        if method not in ("poles", "contour", "quad"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self._nodes = None

    def with_delta(self, delta: float) -> "SpectralProblem":
        return SpectralProblem(self.pls, delta, self.X, self.Y, self.method)

    def enlarged(self, factor: float = 1.5) -> "SpectralProblem":
        return SpectralProblem(self.pls, self.delta, factor * self.X, factor * self.Y, self.method)

    # -- J_k evaluators (no axis guard) ------------------------------------
    def _J(self, lam, ks=(0, 1, 2)) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        if self.method == "poles":
            out = np.zeros((len(ks),) + lam.shape, dtype=complex)
            for w, p in self.pls.dist.lower_poles:
                b = complex(beta(p / self.s))
                den = lam + 1j * p + self.s * b
                for i, k in enumerate(ks):
                    out[i] += w * b**k / den
            return out
        if self.method == "contour":
            return self._J_contour(lam, ks)
        flat = np.array([[self._J_quad(k, complex(l)) for l in lam.ravel()] for k in ks])
        return flat.reshape((len(ks),) + lam.shape)

    def _contour_shift(self) -> float:
        d = self.pls.dist
        if d.is_rational:
            return 0.5 * min(self.s, d.analyticity_halfwidth)
        return min(0.5 * self.s, d.sigma)

    def _make_nodes(self, h: float):
        d = self.pls.dist
        a = self._contour_shift()
        xmax = 1e6 * d.scale if d.is_rational else 14.0 * d.sigma + 2 * self.s
        vmax = math.asinh(xmax / a)
        v = np.arange(-math.ceil(vmax / h), math.ceil(vmax / h) + 1) * h
        x = a * np.sinh(v)
        w = x - 1j * a
        b = beta(w / self.s)
        weight = h * a * np.cosh(v) * d.eval_complex(w)
        sS = self.s * b + 1j * w  # s * sqrt(1 - (w/s)^2)
        return weight, b, sS

    def _contour_sum(self, nodes, lam, ks):
        weight, b, sS = nodes
        out = np.empty((len(ks), lam.size), dtype=complex)
        flat = lam.ravel()
        bk = [weight * b**k for k in ks]
        for start in range(0, flat.size, 256):
            chunk = flat[start:start + 256]
            inv = 1.0 / (chunk[:, None] + sS[None, :])
            for i in range(len(ks)):
                out[i, start:start + 256] = inv @ bk[i]
        return out.reshape((len(ks),) + lam.shape)

    def _ensure_nodes(self):
        if self._nodes is not None:
            return self._nodes
        probes = np.array(
            [self.delta + 1j * y for y in np.linspace(-self.Y, self.Y, 9)] + [self.X, 1.0, 1e-4],
            dtype=complex,
        )
        h = 0.2
        prev = self._contour_sum(self._make_nodes(h), probes, (0, 2))
        while True:
            h /= 2
            nodes = self._make_nodes(h)
            cur = self._contour_sum(nodes, probes, (0, 2))
            if np.max(np.abs(cur - prev)) < 1e-13 * max(1.0, np.max(np.abs(cur))):
                self._nodes = nodes
                return nodes
            if h < 1e-4:
                raise NonConvergent("shifted-contour quadrature did not converge")
            prev = cur

    def _J_contour(self, lam, ks):
        return self._contour_sum(self._ensure_nodes(), lam, ks)

    def _J_quad(self, k: int, lam: complex) -> complex:
        if lam.real <= 0:
            raise AxisTooClose("real-axis quadrature needs Re(lambda) > 0")
        s = self.s
        g = self.pls.dist.density
        opts = dict(QUAD, complex_func=True)

        def locked(p):
            return complex(beta(math.sin(p))) ** k * g(s * math.sin(p)) * s * math.cos(p) / (lam + s * math.cos(p))

        def tail(u, sign):
            b = -1j * sign * math.exp(-u)
            return b**k * g(sign * s * math.cosh(u)) * s * math.sinh(u) / (lam + 1j * sign * s * math.sinh(u))

        total, _ = integrate.quad(locked, -math.pi / 2, math.pi / 2, **opts)
        for sign in (1.0, -1.0):
            ustar = math.asinh(abs(lam.imag) / s) if -sign * lam.imag > 0 else None
            pts = [ustar] if ustar is not None and 0 < ustar < U_MAX else None
            v, _ = integrate.quad(tail, 0.0, U_MAX, args=(sign,), points=pts, **opts)
            total += v
        return total

    # -- public API --------------------------------------------------------
    def _guard(self, lam):
        if np.any(np.asarray(lam).real < self.delta / 2):
            raise AxisTooClose(f"Re(lambda) below delta/2 = {self.delta / 2}")

    def Jk(self, k: int, lam):
        self._guard(lam)
        out = self._J(lam, (k,))[0]
        return out[()] if out.ndim == 0 else out

    def j_identity(self, lam):
        """(K/2)(J0 + 2 (lam/s) J1 + J2); equals 1 at a solved state.

        The J1 term carries lam/s because Jk is written in unscaled frequency."""
        self._guard(lam)
        J = self._J(lam, (0, 1, 2))
        return 0.5 * self.K * (J[0] + 2.0 * np.asarray(lam) / self.s * J[1] + J[2])

    def M_matrix(self, lam: complex) -> np.ndarray:
        self._guard(lam)
        return self._M(complex(lam))

    def _M(self, lam: complex) -> np.ndarray:
        J = self._J(np.array([lam, np.conj(lam)]), (0, 2))
        return np.array([[J[0, 0], J[1, 0]], [np.conj(J[1, 1]), np.conj(J[0, 1])]])

    def _D(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        J = self._J(np.stack([lam, np.conj(lam)]), (0, 2))
        c = 0.5 * self.K
        j0, j0c = J[0, 0], np.conj(J[0, 1])
        j2, j2c = J[1, 0], np.conj(J[1, 1])
        return (1 - c * j0) * (1 - c * j0c) - c * c * j2 * j2c

    def determinant(self, lam):
        self._guard(lam)
        out = self._D(lam)
        return out[()] if out.ndim == 0 else out

    def hc(self, lam):
        self._guard(lam)
        J = self._J(lam, (0, 2))
        return 0.5 * (J[0] - J[1])

    def hs(self, lam):
        self._guard(lam)
        J = self._J(lam, (0, 2))
        return 0.5 * (J[0] + J[1])

    def _factor(self, which: str):
        def f(lam):
            J = self._J(lam, (0, 2))
            h = 0.5 * (J[0] - J[1]) if which == "c" else 0.5 * (J[0] + J[1])
            return 1.0 - self.K * h
        return f

    # -- argument principle ------------------------------------------------
    def _perimeter(self, t: np.ndarray) -> np.ndarray:
        d, X, Y = self.delta, self.X, self.Y
        edge = np.minimum(np.floor(t).astype(int), 3)
        u = t - edge
        pts = np.empty(t.shape, dtype=complex)
        pts[edge == 0] = d + (X - d) * u[edge == 0] - 1j * Y
        pts[edge == 1] = X + 1j * (-Y + 2 * Y * u[edge == 1])
        pts[edge == 2] = X - (X - d) * u[edge == 2] + 1j * Y
        pts[edge == 3] = d + 1j * (Y - 2 * Y * u[edge == 3])
        return pts

    def _winding(self, func, n0: int = 256):
        t = np.linspace(0.0, 4.0, 4 * n0, endpoint=False)
        vals = func(self._perimeter(t))
        while True:
            if np.min(np.abs(vals)) < WINDING_FLOOR:
                i = int(np.argmin(np.abs(vals)))
                raise ContourTooClose(f"|D| = {abs(vals[i]):.2e} at lambda = {self._perimeter(t[i:i+1])[0]}")
            ratio = np.roll(vals, -1) / vals
            step = np.angle(ratio)
            bad = (np.abs(step) >= math.pi / 4) | (np.abs(np.log(np.abs(ratio))) > 1.0)
            if not bad.any():
                break
            idx = np.nonzero(bad)[0]
            t_next = np.where(idx == t.size - 1, 4.0, t[(idx + 1) % t.size])
            t_new = 0.5 * (t[idx] + t_next)
            if t.size + t_new.size > MAX_SAMPLES:
                raise NonConvergent("winding refinement exceeded 2^20 samples")
            t = np.concatenate([t, t_new])
            vals = np.concatenate([vals, func(self._perimeter(t_new))])
            order = np.argsort(t, kind="stable")
            t, vals = t[order], vals[order]
        total = step.sum() / (2 * math.pi)
        n = int(round(total))
        if abs(total - n) > 1e-6:
            raise NonConvergent(f"winding number {total} is not an integer")
        far = np.abs(1 - vals[t < 3.0]).max()
        return n, float(far)

    def count_zeros(self) -> int:
        return self._winding(self._D)[0]

    # -- behaviour at the origin -------------------------------------------
    def simplicity_at_zero(self) -> float:
        lams = 10.0 ** (-2.0 - 0.2 * np.arange(11))
        q = self._D(lams.astype(complex)) / lams
        t = 10.0**-0.2
        rich = (q[1:] - t * q[:-1]) / (1 - t)
        est, prev = rich[-1], rich[-2]
        if abs(est - prev) > 0.1 * abs(est) and abs(est) > 1e-14:
            raise NonConvergent(f"D(lambda)/lambda not settling: {prev} vs {est}")
        return float(abs(est))

    def hs_prime_zero(self) -> float:
        d = self.pls.dist
        if not d.is_even:
            raise NotEven("h_s'(0) formula requires an even density")
        s = self.s
        g = lambda x: float(d.density(x))
        drift, _ = integrate.quad(lambda t: g(s * math.cosh(t)) * math.exp(-t), 0.0, U_MAX, **QUAD)
        lock, _ = integrate.quad(lambda x: g(s * x), 0.0, 1.0, **QUAD)
        return 2.0 / s * (drift - lock)

    def hc_zero(self) -> complex:
        J = self._J(np.array([0j]), (0, 2))
        return complex(0.5 * (J[0, 0] - J[1, 0]))

    # -- verdict -------------------------------------------------------------
    def stability_verdict(self) -> StabilityReport:
        try:
            count, far = self._winding(self._D)
            enlarged = self.enlarged()._winding(self.enlarged()._D)[0]
        except (ContourTooClose, NonConvergent) as exc:
            return StabilityReport(None, None, Verdict.INCONCLUSIVE, reason=f"{type(exc).__name__}: {exc}")
        report = StabilityReport(count, None, Verdict.INCONCLUSIVE, far_edge_deviation=far, enlarged_count=enlarged)
        reasons = []
        if enlarged != count:
            reasons.append(f"count changes under contour enlargement ({count} -> {enlarged})")
        if self.pls.dist.is_even:
            try:
                report.factor_counts = (self._winding(self._factor("c"))[0], self._winding(self._factor("s"))[0])
            except (ContourTooClose, NonConvergent) as exc:
                reasons.append(f"factor count failed: {exc}")
        for d in DELTA_SWEEP:
            try:
                report.delta_counts[d] = self.with_delta(d).count_zeros() if d != self.delta else count
            except (ContourTooClose, NonConvergent) as exc:
                reasons.append(f"delta={d:g}: {type(exc).__name__}")
        if len(set(report.delta_counts.values())) > 1:
            reasons.append(f"delta sweep disagrees: {report.delta_counts}")
        try:
            report.simplicity = self.simplicity_at_zero()
        except NonConvergent as exc:
            reasons.append(str(exc))
        if count > 0:
            report.verdict = Verdict.UNSTABLE
        elif not reasons and report.simplicity is not None and report.simplicity > SIMPLICITY_TOL:
            report.verdict = Verdict.STABLE
        elif report.simplicity is not None and report.simplicity <= SIMPLICITY_TOL:
            reasons.append(f"zero at the origin not simple (|D/lam| -> {report.simplicity:.2e})")
        report.reason = "; ".join(reasons)
        return report


def kernel_weight_integral() -> float:
    """Integral over (1, inf) of 1/(sqrt(x^2-1) (x + sqrt(x^2-1))).

    On (1, 2) the substitution x = 1 + y^2 removes the endpoint singularity."""
    near = lambda y: 2.0 / (math.sqrt(2.0 + y * y) * (1.0 + y * y + y * math.sqrt(2.0 + y * y)))
    far = lambda x: 1.0 / (math.sqrt(x * x - 1.0) * (x + math.sqrt(x * x - 1.0)))
    a, _ = integrate.quad(near, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    b, _ = integrate.quad(far, 2.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    return a + b


def stability_verdict(pls: PlsState, **kwargs) -> StabilityReport:
    return SpectralProblem(pls, **kwargs).stability_verdict()
