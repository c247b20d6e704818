"""Mean-field Kuramoto dynamics in Fourier variables.

State: u_l(tau), l = 1..L, on a uniform tau-grid, with u_0 = g-hat fixed.

    d/dt u_l = l d/dtau u_l + (K l / 2) (m u_{l-1} - conj(m) u_{l+1}),   m = u_1(0).

One step (dt = dtau) is Strang split: half coupling, transport, half coupling.
Transport moves mode l exactly l cells toward negative tau. The coupling is
linear for frozen m and is advanced with the implicit midpoint rule, m taken
at the midpoint by fixed-point iteration on the tau = 0 column. The midpoint
rule conserves sum |u_l|^2 / l of the homogeneous part exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import integrate, optimize

from .distributions import FrequencyDistribution
from .errors import CutoffWarning, DivergenceDetected
from .pls import PlsState, beta, modes_for_tolerance, sup_beta_on_line


@dataclass(frozen=True)
class TauGrid:
    tau_min: float = -40.0
    tau_max: float = 40.0
    dtau: float = 0.02

    def __post_init__(self):
        if not (self.tau_min < 0 < self.tau_max) or self.dtau <= 0:
            raise ValueError("need tau_min < 0 < tau_max and dtau > 0")
        j0 = -self.tau_min / self.dtau
        if abs(j0 - round(j0)) > 1e-9:
            raise ValueError("tau = 0 must be a grid point")

    @property
    def zero_index(self) -> int:
        return int(round(-self.tau_min / self.dtau))

    @property
    def n(self) -> int:
        return int(round((self.tau_max - self.tau_min) / self.dtau)) + 1

    @property
    def tau(self) -> np.ndarray:
        return (np.arange(self.n) - self.zero_index) * self.dtau

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.dtau)
        w[0] = w[-1] = 0.5 * self.dtau
        return w


@dataclass(frozen=True)
class NormParams:
    a: float = 0.25
    k: float = 0.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")


@dataclass
class FourierField:
    grid: TauGrid
    values: np.ndarray  # (L, n), row l-1 holds u_l
    dist: FrequencyDistribution | None = None
    tail: np.ndarray | None = None  # (L, L): u_l at tau_max + j dtau, j = 1..L

    @property
    def L(self) -> int:
        return self.values.shape[0]

    def u0(self) -> np.ndarray:
        if self.dist is None:
            return np.zeros(self.grid.n, dtype=complex)
        return self.dist.fourier(self.grid.tau)

    def copy(self) -> "FourierField":
        return replace(self, values=self.values.copy(), tail=None if self.tail is None else self.tail.copy())


@dataclass
class SimConfig:
    K: float
    dist: FrequencyDistribution
    grid: TauGrid = field(default_factory=TauGrid)
    t_end: float = 60.0
    record_every: float = 1.0
    L: int | None = None
    cutoff_tol: float = 1e-4

    @property
    def dt(self) -> float:
        return self.grid.dtau


# ---------------------------------------------------------------------------
# norms


def _gram(x: np.ndarray, y: np.ndarray, grid: TauGrid, a: float) -> np.ndarray:
    """Per-mode weighted inner products: int e^{2 a tau} (conj(x) y + conj(x') y')."""
    w = grid.trapezoid_weights() * np.exp(2 * a * grid.tau)
    dx = np.gradient(x, grid.dtau, axis=-1)
    dy = np.gradient(y, grid.dtau, axis=-1)
    return (np.conj(x) * y + np.conj(dx) * dy) @ w


def mode_norms_sq(values: np.ndarray, grid: TauGrid, a: float) -> np.ndarray:
    return _gram(values, values, grid, a).real


def weighted_norm(f: FourierField, p: NormParams, with_error: bool = False):
    """||u||_{a,k}; optionally also a relative error estimate obtained by
    repeating the computation on every other grid point."""
    ell = np.arange(1, f.L + 1, dtype=float)
    val = math.sqrt(max(0.0, float(np.sum(ell ** (2 * p.k) * mode_norms_sq(f.values, f.grid, p.a)))))
    if not with_error:
        return val
    coarse_grid = TauGrid(f.grid.tau_min, f.grid.tau_min + 2 * f.grid.dtau * ((f.grid.n - 1) // 2), 2 * f.grid.dtau) \
        if f.grid.zero_index % 2 == 0 else None
    if coarse_grid is None:
        return val, math.nan
    coarse = f.values[:, : 2 * coarse_grid.n - 1 : 2]
    cval = math.sqrt(max(0.0, float(np.sum(ell ** (2 * p.k) * mode_norms_sq(coarse, coarse_grid, p.a)))))
    err = abs(val - cval) / 3.0 / max(val, 1e-300)
    return val, err


def boundary_weight(grid: TauGrid, a: float) -> float:
    """Weight e^{2 a tau_min} at the truncated end of the domain."""
    return math.exp(2 * a * grid.tau_min)


# ---------------------------------------------------------------------------
# stationary fields


def _tau_zero_coefficients(dist: FrequencyDistribution, s: float, L: int) -> np.ndarray:
    """c_l = integral of beta(w/s)^l g(w) dw, l = 0..L."""
    ells = np.arange(L + 1)
    if dist.is_rational:
        out = np.zeros(L + 1, dtype=complex)
        for w, p in dist.lower_poles:
            out += w * complex(beta(p / s)) ** ells
        return out
    # entire density: trapezoid on a shifted line, refined until stable
    a = min(0.5 * s, dist.sigma)
    prev = None
    for h in (0.05, 0.025, 0.0125, 0.00625):
        xmax = 14.0 * dist.sigma + 2 * s
        v = np.arange(-math.ceil(math.asinh(xmax / a) / h), math.ceil(math.asinh(xmax / a) / h) + 1) * h
        wpt = a * np.sinh(v) - 1j * a
        weight = h * a * np.cosh(v) * dist.eval_complex(wpt)
        b = beta(wpt / s)
        cur = np.array([np.sum(weight * b**l) for l in ells])
        if prev is not None and np.max(np.abs(cur - prev)) < 1e-14:
            return cur
        prev = cur
    return prev


def beta_field(dist: FrequencyDistribution, s: float, grid: TauGrid, L: int, extra: int | None = None) -> FourierField:
    """Sample u_l(tau) = integral of e^{-i tau w} beta(w/s)^l g(w) dw.

    These fields solve d/dtau u_l = -(s/2)(u_{l-1} - u_{l+1}) with u_0 = g-hat,
    which is integrated away from tau = 0 with a wider mode truncation.
    Lorentzian mixtures use the closed form for tau >= 0.
    """
    extra = 2 * L + 20 if extra is None else extra
    Lp = max(extra, L + 1)
    tau = grid.tau
    j0 = grid.zero_index
    tail_tau = grid.tau_max + grid.dtau * np.arange(1, L + 1)
    c0 = _tau_zero_coefficients(dist, s, Lp)

    def rhs(t, y):
        u = y[:Lp] + 1j * y[Lp:]
        up = np.empty(Lp + 2, dtype=complex)
        up[0] = complex(dist.fourier(t))
        up[1:Lp + 1] = u
        up[Lp + 1] = 0.0
        du = -0.5 * s * (up[0:Lp] - up[2:Lp + 2])
        return np.concatenate([du.real, du.imag])

    def sweep(targets):
        if targets.size == 0:
            return np.zeros((L, 0), dtype=complex)
        y0 = np.concatenate([c0[1:].real, c0[1:].imag])
        sol = integrate.solve_ivp(rhs, (0.0, targets[-1]), y0, method="DOP853", t_eval=targets,
                                  rtol=1e-12, atol=1e-15)
        if not sol.success:
            raise RuntimeError(sol.message)
        return (sol.y[:L] + 1j * sol.y[Lp:Lp + L])

    values = np.empty((L, grid.n), dtype=complex)
    values[:, j0] = c0[1:L + 1]
    neg = tau[:j0][::-1]
    values[:, :j0] = sweep(neg)[:, ::-1]
    if dist.is_rational:
        ells = np.arange(1, L + 1)
        pos = np.concatenate([tau[j0 + 1:], tail_tau])
        closed = np.zeros((L, pos.size), dtype=complex)
        for w, p in dist.lower_poles:
            closed += w * np.multiply.outer(complex(beta(p / s)) ** ells, np.exp(-1j * p * pos))
        values[:, j0 + 1:] = closed[:, : grid.n - j0 - 1]
        tail = closed[:, grid.n - j0 - 1:]
    else:
        pos = np.concatenate([tau[j0 + 1:], tail_tau])
        both = sweep(pos)
        values[:, j0 + 1:] = both[:, : grid.n - j0 - 1]
        tail = both[:, grid.n - j0 - 1:]
    return FourierField(grid, values, dist, tail)


def sample_pls_field(state: PlsState, grid: TauGrid, L: int) -> FourierField:
    return beta_field(state.dist, state.s, grid, L)


def default_modes(state: PlsState, a: float, tol: float = 1e-10) -> int:
    return modes_for_tolerance(sup_beta_on_line(state.s, a), tol)


# ---------------------------------------------------------------------------
# dynamics


def order_parameter(f: FourierField) -> complex:
    return complex(np.conj(f.values[0, f.grid.zero_index]))


def rotate(f: FourierField, theta: float) -> FourierField:
    ph = np.exp(1j * theta * np.arange(1, f.L + 1))
    g = f.copy()
    g.values *= ph[:, None]
    if g.tail is not None:
        g.tail *= ph[:, None]
    return g


@njit(cache=True, fastmath=True)
def _midpoint_coupling(W, R, phase, m, delta, h, K, buf):
    """One implicit-midpoint step of the deviation W = u - R_theta(ref) for
    frozen m. R holds ref rows 0..L+1 (row 0 is g-hat); phase = e^{i theta}.
    The tridiagonal solve needs no pivoting: under the scaling diag(l^-1/2)
    the matrix is identity plus skew-Hermitian."""
    L, n = W.shape
    hk = 0.25 * h * K
    mc = m.conjugate()
    cp = np.empty(L, dtype=np.complex128)
    inv = np.empty(L, dtype=np.complex128)
    for i in range(L):
        l = i + 1
        den = 1.0 + 0j
        if i > 0:
            den -= (-hk * l * m) * cp[i - 1]
        inv[i] = 1.0 / den
        cp[i] = (hk * l * mc) * inv[i] if i < L - 1 else 0j
    zero = np.zeros(n, dtype=np.complex128)
    for i in range(L):
        l = i + 1
        lo = hk * l * m
        hi = -hk * l * mc
        f_lo = 2.0 * hk * l * delta * phase ** (l - 1)
        f_hi = 2.0 * hk * l * delta.conjugate() * phase ** (l + 1)
        iv = inv[i]
        w = W[i]
        r_lo = R[l - 1]
        r_hi = R[l + 1]
        w_lo = W[i - 1] if i > 0 else zero
        b_lo = buf[i - 1] if i > 0 else zero
        w_hi = W[i + 1] if i < L - 1 else zero
        out = buf[i]
        for j in range(n):
            out[j] = (w[j] + f_lo * r_lo[j] - f_hi * r_hi[j] + lo * (w_lo[j] + b_lo[j]) + hi * w_hi[j]) * iv
    W[L - 1, :] = buf[L - 1, :]
    for i in range(L - 2, -1, -1):
        c = cp[i]
        w = W[i]
        w_next = W[i + 1]
        b = buf[i]
        for j in range(n):
            w[j] = b[j] - c * w_next[j]


@njit(cache=True)
def _shift(W, tail):
    """Exact transport; returns sum of |W|^2 over the cells leaving at tau_min."""
    L, n = W.shape
    out = 0.0
    for i in range(L):
        l = i + 1
        for j in range(l):
            out += W[i, j].real ** 2 + W[i, j].imag ** 2
        for j in range(n - l):
            W[i, j] = W[i, j + l]
        for k in range(l):
            W[i, n - l + k] = tail[i, k]
    return out


@njit(cache=True)
def _rebase(W, R, d_phase_old, d_phase_new, sign):
    """W += sign * (p_old^l - p_new^l) * R_l for l = 1..L."""
    L, n = W.shape
    for i in range(L):
        l = i + 1
        c = sign * (d_phase_old ** l - d_phase_new ** l)
        if c == 0:
            continue
        for j in range(n):
            W[i, j] += c * R[l, j]


class Simulator:
    """Advances a FourierField with the split scheme above.

    With a stationary ``reference`` the split is applied to the deviation
    from the rotated copy of the reference that has the current phase of
    m. The PDE is unchanged, every rotated reference is an exact fixed point
    of the discrete map and rotation equivariance is kept. Without one the
    reference is the incoherent state and this is the plain split."""

    def __init__(self, cfg: SimConfig, f: FourierField, reference: FourierField | None = None):
        self.cfg = cfg
        self.K = float(cfg.K)
        self.dt = f.grid.dtau
        self.grid = f.grid
        self.dist = f.dist
        L, n = f.values.shape
        self.j0 = f.grid.zero_index
        R = np.zeros((L + 2, n), dtype=complex)
        R[0] = f.dist.fourier(f.grid.tau) if f.dist is not None else 0.0
        if reference is not None:
            rows = min(reference.L, L + 1)
            R[1:rows + 1] = reference.values[:rows]
            self.tail = np.zeros((L, L), dtype=complex)
        else:
            self.tail = np.zeros((L, L), dtype=complex) if f.tail is None else np.ascontiguousarray(f.tail[:L, :L])
        self.R = R
        self.m_ref = complex(R[1, self.j0])
        self.balanced = reference is not None and abs(self.m_ref) > 0
        self.phase = 1.0 + 0j
        self.W = np.array(f.values, dtype=complex, order="C")
        if self.balanced:
            _rebase(self.W, R, 0j, 1.0 + 0j, 1.0)  # W = u - ref
        self.buf = np.empty_like(self.W)
        self.t = 0.0
        self.warned = False
        self.boundary_flux = 0.0  # dtau * sum of |deviation|^2 dropped at tau_min
        self._dist = f.dist

    @property
    def f(self) -> FourierField:
        u = self.W.copy()
        if self.balanced:
            _rebase(u, self.R, 0j, self.phase, -1.0)  # u = W + p^l ref
        return FourierField(self.grid, u, self._dist)

    def _m(self) -> complex:
        return complex(self.W[0, self.j0]) + self.phase * self.m_ref

    def _coupling(self, h: float):
        if self.K == 0.0:
            return
        j = self.j0
        d_old = complex(self.W[0, j])
        col = np.ascontiguousarray(self.W[:, j:j + 1])
        Rc = np.ascontiguousarray(self.R[:, j:j + 1])
        bc = np.empty_like(col)
        base = self.phase * self.m_ref
        d_mid = d_old
        for _ in range(100):
            trial = col.copy()
            _midpoint_coupling(trial, Rc, self.phase, base + d_mid, d_mid, h, self.K, bc)
            d_next = 0.5 * (d_old + trial[0, 0])
            done = abs(d_next - d_mid) <= 1e-15 * max(1.0, abs(base + d_next))
            d_mid = d_next
            if done:
                break
        _midpoint_coupling(self.W, self.R, self.phase, base + d_mid, d_mid, h, self.K, self.buf)

    def _retrack(self):
        if not self.balanced:
            return
        m = self._m()
        if m == 0:
            return
        ratio = m / self.m_ref
        new = ratio / abs(ratio)
        _rebase(self.W, self.R, self.phase, new, 1.0)
        self.phase = new

    def step(self):
        self._retrack()
        self._coupling(0.5 * self.dt)
        self.boundary_flux += self.dt * _shift(self.W, self.tail)
        self._coupling(0.5 * self.dt)
        self.t += self.dt

    def _check_cutoff(self, f: FourierField):
        top = float(np.max(np.abs(f.values[-1])))
        if not self.warned and top > self.cfg.cutoff_tol:
            warnings.warn(f"highest mode reaches {top:.2e}", CutoffWarning)
            self.warned = True

    def run(self, t_end: float, record_every: float | None = None, callback=None) -> FourierField:
        n = int(round(t_end / self.dt))
        stride = max(1, int(round((record_every or t_end) / self.dt)))
        if callback is not None:
            callback(self.t, self.f)
        for i in range(1, n + 1):
            self.step()
            if i % stride == 0 or i == n:
                f = self.f
                self._check_cutoff(f)
                if callback is not None:
                    callback(self.t, f)
        return self.f


def step(f: FourierField, cfg: SimConfig, reference: FourierField | None = None) -> FourierField:
    """One split step from ``f``; the input is not modified."""
    sim = Simulator(cfg, f, reference)
    sim.step()
    out = sim.f
    out.tail = f.tail
    return out


# ---------------------------------------------------------------------------
# relaxation experiments


@dataclass(frozen=True)
class Rotate:
    theta: float


@dataclass(frozen=True)
class Dilate:
    eta: float


@dataclass(frozen=True)
class Bump:
    eps: float
    tau0: float = 0.0
    width: float = 1.0


def parse_perturbation(text: str):
    kind, _, body = text.partition(":")
    vals = [float(v) for v in body.split(",") if v.strip()]
    kind = kind.lower()
    if kind == "rotate" and len(vals) == 1:
        return Rotate(*vals)
    if kind == "dilate" and len(vals) == 1:
        return Dilate(*vals)
    if kind == "bump" and 1 <= len(vals) <= 3:
        return Bump(*vals)
    raise ValueError(f"cannot parse perturbation {text!r}")


class CircleDistance:
    """Distance from a field to the rotation orbit of a reference field.

    A 1e-3 grid over Theta locates the basin, Newton steps on the exact
    per-mode expansion refine it, and the distance is then evaluated
    directly from u - R_Theta(ref) so that it has no cancellation floor."""

    def __init__(self, ref: FourierField, a: float):
        self.ref = ref.values
        self.grid = ref.grid
        self.a = a
        self.ell = np.arange(1, ref.L + 1)
        self.ref_sq = mode_norms_sq(self.ref, self.grid, a)
        self.thetas = np.arange(-3142, 3142) * 1e-3
        self.phase = np.exp(-1j * np.outer(self.thetas, self.ell))

    def _rotated(self, theta):
        return self.ref * np.exp(1j * theta * self.ell)[:, None]

    def __call__(self, u: np.ndarray) -> tuple[float, float]:
        c = _gram(self.ref, u, self.grid, self.a)
        u_sq = _gram(u, u, self.grid, self.a).real
        coarse = u_sq.sum() + self.ref_sq.sum() - 2 * (self.phase @ c).real
        theta = float(self.thetas[int(np.argmin(coarse))])
        for _ in range(4):
            d = u - self._rotated(theta)
            X = _gram(d, self._rotated(theta), self.grid, self.a)  # sum conj(d) v per mode
            # d/dphi ||d - (e^{i phi l} - 1) v||^2 at phi = 0, and the second derivative
            g1 = float(np.sum(2 * self.ell * X.imag))
            g2 = float(np.sum(2 * self.ell**2 * (self.ref_sq + X.real)))
            if g2 <= 0:
                break
            step_ = -g1 / g2
            theta += step_
            if abs(step_) < 1e-15:
                break
        d = u - self._rotated(theta)
        return math.sqrt(max(float(mode_norms_sq(d, self.grid, self.a).sum()), 0.0)), theta


@dataclass
class RelaxationResult:
    t: np.ndarray
    distance: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    rate: float
    r_squared: float
    theta_inf: float
    reference_r: float


def stationary_reference(state: PlsState, grid: TauGrid, L: int) -> FourierField:
    """Sampled stationary field with one spare mode for the coupling closure."""
    return beta_field(state.dist, state.s, grid, L + 1)


def fit_rate(t: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log d over the second half; returns (b, R^2)."""
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    tt, y = t[half], np.log(np.maximum(d[half], 1e-300))
    if tt.size < 3 or np.max(d[half]) < 1e-13:
        return math.nan, math.nan
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else math.nan
    return float(-coef[0]), float(r2)


def initial_field(state: PlsState, perturbation, grid: TauGrid, L: int, reference: FourierField) -> FourierField:
    if isinstance(perturbation, Rotate):
        return rotate(reference, perturbation.theta)
    if isinstance(perturbation, Dilate):
        f = beta_field(state.dist, state.s * (1 + perturbation.eta), grid, L)
        f.tail = reference.tail
        return f
    if isinstance(perturbation, Bump):
        f = reference.copy()
        f.values[0] += perturbation.eps * np.exp(-(((grid.tau - perturbation.tau0) / perturbation.width) ** 2))
        return f
    raise TypeError(f"unknown perturbation {perturbation!r}")


def relaxation_grid(t_end: float, tau_max: float = 40.0, dtau: float = 0.02) -> TauGrid:
    """Mode-1 deviations leave through tau_min at unit speed; keep them on the
    grid for the whole run so the late distances are not truncation effects."""
    tau_min = -max(40.0, dtau * math.ceil((t_end + 20.0) / dtau))
    return TauGrid(tau_min, tau_max, dtau)


def relaxation_experiment(state: PlsState, perturbation, cfg: SimConfig | None = None, p: NormParams = NormParams(),
                          divergence_factor: float = 10.0) -> RelaxationResult:
    if cfg is None:
        cfg = SimConfig(state.K, state.dist, relaxation_grid(60.0))
    L = cfg.L or default_modes(state, p.a)
    ref_full = stationary_reference(state, cfg.grid, L)
    reference = FourierField(cfg.grid, ref_full.values[:L], state.dist, ref_full.tail[:L, :L])
    f = initial_field(state, perturbation, cfg.grid, L, reference)
    measure = CircleDistance(reference, p.a)
    ts, ds, rs, ths = [], [], [], []

    def record(t, field_):
        d, th = measure(field_.values)
        ts.append(t)
        ds.append(d)
        rs.append(order_parameter(field_))
        ths.append(th)
        floor = divergence_factor * max(ds[0], 1e-8 * math.sqrt(measure.ref_sq.sum()))
        if d > floor:
            raise DivergenceDetected(f"distance grew from {ds[0]:.3e} to {d:.3e} by t={t:.2f}")

    Simulator(cfg, f, ref_full).run(cfg.t_end, cfg.record_every, record)
    t = np.array(ts)
    d = np.array(ds)
    b, r2 = fit_rate(t, d)
    return RelaxationResult(t, d, np.array(rs), np.array(ths), b, r2, ths[-1], order_parameter(reference).real)
