"""Classical centroid dynamics in scaled trap units.

Equations of motion for the scaled phase-space centroid (x, p) with time in
units of the inverse trap frequency,

    dx/dtau = (omega_t/omega) p,      dp/dtau = -(omega/omega_t) U'(x),

conserving E = (omega_t/omega) p^2/2 + (omega/omega_t) U(x).  Eliminating p
gives d^2x/dtau^2 = -U'(x), which for the double well is free of the
frequency ratio; trajectories at different ratios differ only in the
momentum scale.

For the double well U(x) = (-x^2 + x^4/(2 d^2))/2 started at rest from x_s
inside the left/right wall the trajectory has the closed form

    x(tau) = x_s / dn(Omega tau, m),
    m = (2 d^2 - 2 x_s^2) / (2 d^2 - x_s^2),
    Omega = sqrt(2 d^2 - x_s^2) / (sqrt(2) d),

with quarter period tau_max = K(m)/Omega, the time to reach the turning
point x_t = sqrt(2 d^2 - x_s^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrationAccuracy
from .potentials import DoubleWell, eval_derivative
from .special import elliptic_K, jacobi_elliptic

__all__ = [
    "ClassicalTrajectory", "Timescales", "integrate_classical",
    "double_well_trajectory", "double_well_timescales", "time_to_reach",
    "hamiltonian_energy",
]


def hamiltonian_energy(model, omega_ratio: float, x, p):
    """Conserved scaled energy E(x, p); omega_ratio = omega/omega_t."""
    return p * p / (2.0 * omega_ratio) + omega_ratio * model(x)


@dataclass(frozen=True)
class Timescales:
    """Landmark times of the double-well rolldown (closed form)."""
    tau_max: float          # quarter period: start to classical turning point
    tau_three: float        # x_c crosses d/sqrt(3), where U''(x_c) = 0
    parameter_m: float      # elliptic parameter of the trajectory
    big_omega: float        # elliptic frequency Omega
    x_turn: float           # turning point sqrt(2 d^2 - x_s^2)


@dataclass
class ClassicalTrajectory:
    """Fixed-grid classical solution with conserved-energy monitoring."""
    tau: np.ndarray
    x: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    turning_times: np.ndarray  # refined times of p = 0 crossings (excl. start)

    def interp(self, tau):
        """Cubic-accurate enough dense readout: linear on the stored grid."""
        return (np.interp(tau, self.tau, self.x),
                np.interp(tau, self.tau, self.p))


def _rk4_step(model, omega_ratio: float, x: float, p: float, h: float):
    inv = 1.0 / omega_ratio

    def f(xx, pp):
        return inv * pp, -omega_ratio * eval_derivative(model, 1, xx)

    k1x, k1p = f(x, p)
    k2x, k2p = f(x + 0.5 * h * k1x, p + 0.5 * h * k1p)
    k3x, k3p = f(x + 0.5 * h * k2x, p + 0.5 * h * k2p)
    k4x, k4p = f(x + h * k3x, p + h * k3p)
    return (x + h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0,
            p + h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0)


def _refine_turning(tau0, tau1, p0, p1, dp0, dp1):
    """Root of the cubic Hermite interpolant of p on [tau0, tau1]."""
    h = tau1 - tau0
    # Hermite cubic in s = (tau - tau0)/h: p(s) = a s^3 + b s^2 + c s + d
    d = p0
    c = dp0 * h
    b = 3 * (p1 - p0) - (2 * dp0 + dp1) * h
    a = 2 * (p0 - p1) + (dp0 + dp1) * h
    roots = np.roots([a, b, c, d])
    real = roots[np.abs(roots.imag) < 1e-9].real
    inside = real[(real >= -1e-9) & (real <= 1 + 1e-9)]
    if inside.size == 0:  # fall back to the secant estimate
        s = p0 / (p0 - p1)
    else:
        s = float(inside[np.argmin(np.abs(inside - 0.5))])
    return tau0 + s * h


def integrate_classical(model, omega_ratio: float, x0: float, p0: float,
                        tau_grid: np.ndarray, *,
                        energy_tol: float = 1e-8) -> ClassicalTrajectory:
    """RK4 integration of the centroid equations on the given time grid.

    The grid spacing is the step size.  Raises IntegrationAccuracy when the
    conserved energy drifts by more than energy_tol relative to its scale.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size < 2:
        raise ConfigError("tau_grid must be a 1-d array with at least 2 points")
    n = tau_grid.size
    x = np.empty(n)
    p = np.empty(n)
    x[0], p[0] = x0, p0
    for i in range(n - 1):
        x[i + 1], p[i + 1] = _rk4_step(model, omega_ratio, x[i], p[i],
                                       tau_grid[i + 1] - tau_grid[i])
    energy = hamiltonian_energy(model, omega_ratio, x, p)
    scale = max(abs(energy[0]), omega_ratio * abs(model(x0)) + abs(p0), 1e-30)
    drift = np.max(np.abs(energy - energy[0]))
    if drift > energy_tol * scale:
        raise IntegrationAccuracy(
            f"energy drift {drift:.3e} exceeds {energy_tol:.1e} x scale {scale:.3e}; "
            "refine the time grid")

    dp = -omega_ratio * eval_derivative(model, 1, x)
    sign_change = np.nonzero(np.sign(p[:-1]) * np.sign(p[1:]) < 0)[0]
    turns = [_refine_turning(tau_grid[i], tau_grid[i + 1], p[i], p[i + 1],
                             dp[i], dp[i + 1]) for i in sign_change]
    # a start at rest is not a turning event
    turns = [t for t in turns if t > tau_grid[0] + 1e-12 * (tau_grid[-1] - tau_grid[0])]
    return ClassicalTrajectory(tau=tau_grid, x=x, p=p, energy=energy,
                               turning_times=np.asarray(turns))


def double_well_trajectory(d: float, x_s: float, omega_ratio: float, tau):
    """Closed-form (x, p) of the double-well rolldown released at rest from x_s.

    Valid for 0 < x_s < sqrt(2) d (below the barrier top energy is always
    the case for 0 < x_s < d; shallow release x_s << d is the regime of
    interest).  Vectorized over tau; covers all times including repeated
    librations through the elliptic periodicity.
    """
    if not 0.0 < x_s < np.sqrt(2.0) * d:
        raise ConfigError(f"release point must satisfy 0 < x_s < sqrt(2) d, got {x_s}")
    m = (2.0 * d * d - 2.0 * x_s * x_s) / (2.0 * d * d - x_s * x_s)
    big_omega = np.sqrt(2.0 * d * d - x_s * x_s) / (np.sqrt(2.0) * d)
    u = big_omega * np.asarray(tau, dtype=float)
    sn, cn, dn = jacobi_elliptic(u, m)
    x = x_s / dn
    p = omega_ratio * x_s * big_omega * m * sn * cn / (dn * dn)
    return x, p


def double_well_timescales(d: float, x_s: float) -> Timescales:
    """Landmark times for the rolldown from x_s (frequency-ratio free)."""
    if not 0.0 < x_s < d / np.sqrt(3.0):
        raise ConfigError(
            f"release point must lie inside the curvature-flip radius d/sqrt(3), got {x_s}")
    m = (2.0 * d * d - 2.0 * x_s * x_s) / (2.0 * d * d - x_s * x_s)
    big_omega = np.sqrt(2.0 * d * d - x_s * x_s) / (np.sqrt(2.0) * d)
    tau_max = elliptic_K(m) / big_omega
    tau_three = time_to_reach(d, x_s, d / np.sqrt(3.0))
    return Timescales(tau_max=tau_max, tau_three=tau_three, parameter_m=m,
                      big_omega=big_omega, x_turn=np.sqrt(2.0 * d * d - x_s * x_s))


def time_to_reach(d: float, x_s: float, x_target: float) -> float:
    """First time the closed-form rolldown reaches x_target in [x_s, x_turn].

    Bisection on the monotone branch tau in [0, tau_max]; deterministic to
    machine precision.
    """
    m = (2.0 * d * d - 2.0 * x_s * x_s) / (2.0 * d * d - x_s * x_s)
    big_omega = np.sqrt(2.0 * d * d - x_s * x_s) / (np.sqrt(2.0) * d)
    x_turn = np.sqrt(2.0 * d * d - x_s * x_s)
    if not x_s <= x_target <= x_turn:
        raise ConfigError(
            f"target {x_target} outside the reachable range [{x_s}, {x_turn}]")
    K = elliptic_K(m)
    lo, hi = 0.0, K
    # dn decreases monotonically on [0, K]; solve dn(u) = x_s/x_target
    goal = x_s / x_target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, _, dn = jacobi_elliptic(mid, m)
        if dn > goal:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * K:
            break
    return 0.5 * (lo + hi) / big_omega
