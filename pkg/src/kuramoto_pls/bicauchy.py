"""Partially locked states for the symmetric bi-Cauchy law on the
Ott-Antonsen manifold.

Two complex amplitudes carry the whole order parameter:

    z1 <-> pole  w0 - i Delta,   z2 <-> pole -w0 - i Delta,   r = (z1 + z2)/2.

At a symmetric stationary point z1 = rho e^{-i psi/2}, z2 = rho e^{i psi/2},
so ``r = rho cos(psi/2)``. The branch amplitude solves K = Psi(rho^2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import distributions
from .errors import NoBranch, NotBimodal
from .pls import PlsState, beta, self_consistency_residual


def psi_map(delta, omega0, x):
    x = np.asarray(x, dtype=float)
    return 2 * delta * (1 / (1 - x) + (omega0 / delta) ** 2 * (1 - x) / (1 + x) ** 2)


def psi_prime(delta, omega0, x):
    x = np.asarray(x, dtype=float)
    return 2 * delta / (1 - x) ** 2 + 2 * omega0**2 / delta * (x - 3) / (1 + x) ** 3


def phi_map(delta, omega0, x):
    x = np.asarray(x, dtype=float)
    return 4 * delta * (1 / (1 - x) - (omega0 / delta) ** 2 * (1 - x) ** 2 / (1 + x) ** 3)


def _check_bimodal(delta, omega0):
    if delta <= 0:
        raise ValueError("delta must be positive")
    if omega0 <= delta / math.sqrt(3):
        raise NotBimodal(f"omega0={omega0} <= delta/sqrt(3); the density is unimodal")


def psi_minimum(delta, omega0) -> tuple[float, float]:
    """(x*, Psi(x*)) at the fold. Psi is convex with Psi'(0) < 0 here."""
    _check_bimodal(delta, omega0)
    hi = 0.5
    while psi_prime(delta, omega0, hi) <= 0:
        hi = 0.5 * (1 + hi)
    x = optimize.brentq(lambda t: psi_prime(delta, omega0, t), 0.0, hi, xtol=1e-15, rtol=1e-15)
    return float(x), float(psi_map(delta, omega0, x))


def F_rho(rho1, rho2, psi, delta, K):
    return -delta * rho1 + K / 4 * (1 - rho1**2) * (rho1 + rho2 * np.cos(psi))


def F_psi(rho1, rho2, psi, omega0, K):
    return 2 * omega0 - K / 4 * (rho1**2 + rho2**2 + 2 * rho1**2 * rho2**2) / (rho1 * rho2) * np.sin(psi)


def polar_rhs(y, delta, omega0, K):
    rho1, rho2, psi = y
    return np.array([F_rho(rho1, rho2, psi, delta, K), F_rho(rho2, rho1, psi, delta, K), F_psi(rho1, rho2, psi, omega0, K)])


@dataclass(frozen=True)
class BiCauchyBranch:
    delta: float
    omega0: float
    K: float
    rho: float
    psi: float
    r: float
    label: str
    eig_transverse: float
    eig_quadratic: tuple[float, float]  # (b, c) in lam^2 + 2 b lam + c

    @property
    def x(self) -> float:
        return self.rho**2


def _branch(delta, omega0, K, x, label) -> BiCauchyBranch:
    sin_psi = 4 * omega0 / (K * (1 + x))
    cos_psi = 4 * delta / (K * (1 - x)) - 1
    psi = math.atan2(sin_psi, cos_psi)
    rho = math.sqrt(x)
    r = rho * math.sqrt(max(0.0, 0.5 * (1 + cos_psi)))
    transverse = -delta + K / 4 * (1 - 3 * x - (1 + x) * cos_psi)
    b = delta * (1 + 2 * x) / (1 - x) - K / 4 * (1 + x)
    c = x * (4 * delta**2 * (1 + x) / (1 - x) ** 2 - 4 * omega0**2 * (1 - x) / (1 + x) ** 2 - K * delta * (1 + x) / (1 - x))
    return BiCauchyBranch(float(delta), float(omega0), float(K), rho, psi, r, label, transverse, (b, c))


def solve_branches(delta, omega0, K) -> list[BiCauchyBranch]:
    """Branches at coupling K, plus first."""
    x_star, k_fold = psi_minimum(delta, omega0)
    if K < k_fold * (1 - 1e-14):
        raise NoBranch(f"K={K} is below the fold at {k_fold}")
    f = lambda x: psi_map(delta, omega0, x) - K
    if abs(K - k_fold) <= 1e-14 * k_fold:
        return [_branch(delta, omega0, K, x_star, "plus")]
    hi = x_star
    while f(hi) < 0:
        hi = 1 - 0.5 * (1 - hi)
    out = [_branch(delta, omega0, K, optimize.brentq(f, x_star, hi, xtol=1e-16, rtol=1e-15), "plus")]
    if f(0.0) > 0:
        out.append(_branch(delta, omega0, K, optimize.brentq(f, 0.0, x_star, xtol=1e-16, rtol=1e-15), "minus"))
    return out


def branch_eigenvalues(branch: BiCauchyBranch) -> dict:
    b, c = branch.eig_quadratic
    disc = cmath.sqrt(b * b - c)
    return {"transverse": branch.eig_transverse, "pair": (-b + disc, -b - disc)}


def branch_verdict(branch: BiCauchyBranch) -> str:
    ev = branch_eigenvalues(branch)
    ok = ev["transverse"] < 0 and all(l.real < 0 for l in ev["pair"])
    return "Stable" if ok else "Unstable"


def branch_pls_state(branch: BiCauchyBranch) -> PlsState:
    d = distributions.bicauchy(branch.delta, branch.omega0)
    return PlsState(d, branch.K, branch.r, self_consistency_residual(d, branch.K, branch.r))


# ---------------------------------------------------------------------------
# four-dimensional amplitude dynamics


def oa_rhs(z, delta, omega0, K) -> np.ndarray:
    z1, z2 = complex(z[0]), complex(z[1])
    m = z1 + z2
    mc = m.conjugate()
    return np.array([
        -(delta + 1j * omega0) * z1 + K / 4 * (m - mc * z1 * z1),
        -(delta - 1j * omega0) * z2 + K / 4 * (m - mc * z2 * z2),
    ])


def oa_fixed_point(delta, omega0, K, r_s, theta: float = 0.0) -> np.ndarray:
    s = K * r_s
    rot = cmath.exp(1j * theta)
    return np.array([rot * complex(beta((omega0 - 1j * delta) / s)), rot * complex(beta((-omega0 - 1j * delta) / s))])


def circle_distance(z, z_star) -> tuple[float, float]:
    """min over theta of |z - e^{i theta} z_star|, and the minimiser."""
    z = np.asarray(z)
    z_star = np.asarray(z_star)
    ip = np.vdot(z_star, z)
    d2 = np.vdot(z, z).real + np.vdot(z_star, z_star).real - 2 * abs(ip)
    return math.sqrt(max(d2, 0.0)), float(np.angle(ip))


@dataclass
class OATrajectory:
    t: np.ndarray
    z: np.ndarray  # shape (n, 2)
    classification: str
    dist_plus: np.ndarray | None = None
    dist_minus: np.ndarray | None = None

    @property
    def order_parameter(self) -> np.ndarray:
        return 0.5 * (self.z[:, 0] + self.z[:, 1])


def oa_integrate(z0, delta, omega0, K, t_end, dt=None, record_every: float = 0.1, start_label: str | None = None) -> OATrajectory:
    """Classical RK4 on the two amplitudes.

    ``start_label`` names the circle the run starts near ('plus' or 'minus');
    it only affects the classification text."""
    dmax = 0.01 / max(1.0, K)
    dt = dmax if dt is None else dt
    if dt > dmax:
        raise ValueError(f"dt must not exceed {dmax}")
    n = int(math.ceil(t_end / dt - 1e-9))
    dt = t_end / n
    every = max(1, int(round(record_every / dt)))
    a1 = -(delta + 1j * omega0)
    a2 = -(delta - 1j * omega0)
    k4 = K / 4

    def f(z1, z2):
        m = z1 + z2
        mc = m.conjugate()
        return a1 * z1 + k4 * (m - mc * z1 * z1), a2 * z2 + k4 * (m - mc * z2 * z2)

    z1, z2 = complex(z0[0]), complex(z0[1])
    ts, zs = [0.0], [(z1, z2)]
    h2 = dt / 2
    for i in range(1, n + 1):
        p1, p2 = f(z1, z2)
        q1, q2 = f(z1 + h2 * p1, z2 + h2 * p2)
        r1, r2 = f(z1 + h2 * q1, z2 + h2 * q2)
        s1, s2 = f(z1 + dt * r1, z2 + dt * r2)
        z1 += dt / 6 * (p1 + 2 * q1 + 2 * r1 + s1)
        z2 += dt / 6 * (p2 + 2 * q2 + 2 * r2 + s2)
        if i % every == 0 or i == n:
            ts.append(i * dt)
            zs.append((z1, z2))
    t = np.array(ts)
    z = np.array(zs)

    dist_plus = dist_minus = None
    try:
        branches = {b.label: b for b in solve_branches(delta, omega0, K)}
    except (NoBranch, NotBimodal):
        branches = {}
    for label, b in branches.items():
        fp = oa_fixed_point(delta, omega0, K, b.r)
        d = np.array([circle_distance(row, fp)[0] for row in z])
        if label == "plus":
            dist_plus = d
        else:
            dist_minus = d

    if start_label == "minus" and dist_minus is not None and dist_minus[-1] > 1e-2:
        label = "diverged-from-minus-circle"
    elif dist_plus is not None and dist_plus[-1] < 1e-3:
        label = "converged-to-plus-circle"
    elif np.abs(z[-1]).max() < 1e-3:
        label = "converged-to-incoherent"
    elif np.abs(z[0]).max() < 1e-3 and np.abs(z[-1]).max() > 1e-2:
        label = "left-incoherent"
    else:
        label = "undetermined"
    return OATrajectory(t, z, label, dist_plus, dist_minus)


def bifurcation_diagram(delta, omega0, K_values) -> list[dict]:
    rows = []
    for K in sorted(K_values):
        row = {"K": float(K), "rho_minus": math.nan, "rho_plus": math.nan, "r_minus": math.nan,
               "r_plus": math.nan, "verdict_minus": "", "verdict_plus": ""}
        try:
            for b in solve_branches(delta, omega0, K):
                row[f"rho_{b.label}"] = b.rho
                row[f"r_{b.label}"] = b.r
                row[f"verdict_{b.label}"] = branch_verdict(b)
        except NoBranch:
            pass
        rows.append(row)
    return rows
