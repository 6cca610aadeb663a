"""Gaussian-frame propagation along the classical centroid.

The frame matrix S(tau) solves the linearized flow around the centroid,

    dS/dtau = A(tau) S,   A = [[0, omega_t/omega],
                               [-(omega/omega_t) alpha(tau), 0]],

with alpha(tau) = U''(x_c(tau)) and S(0) = 1.  The generator is traceless,
so det S = 1 for all times.  The first row of S defines the coherent
expansion eta and quadrature angle phi through

    S_xx = eta cos(phi),  S_xp = eta sin(phi),

with phi unwrapped continuously from phi(0) = 0 and
d phi/dtau = (omega_t/omega) / eta^2.

The cubic and quartic frame couplings

    beta_n(tau) = (omega/omega_t) U^(n)(x_c) eta^n / (n-1)!

and their running integrals kappa_n(tau) feed the non-Gaussian corrections;
for the double well beta_3 = 3 (omega/omega_t) x_c eta^3 / d^2 and
beta_4 = (omega/omega_t) eta^4 / d^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationAccuracy, QuadratureAccuracy
from .potentials import eval_derivative

__all__ = [
    "FrameRecord", "propagate_frames", "propagate_S", "eta_phi",
    "beta_coefficients", "kappa_integrals", "kappa_between",
    "thawed_covariance", "eta_peaks", "graded_turning_grid",
]


def graded_turning_grid(tau_end: float, turn_times, *, coarse: float = 1e-4,
                        mid: float = 1e-6, core: float = 1e-7,
                        mid_halfwidth: float = 0.02,
                        core_halfwidth: float = 5e-4) -> np.ndarray:
    """Time grid on [0, tau_end] refined around the compression times.

    Around each turning time the expansion eta dips to ~(omega/omega_t) x
    its peak and the quadrature angle sweeps by ~pi over a Lorentzian window
    of width gamma = (omega/omega_t) eta_min^2 (~5e-5 for the reference
    double-well scenario), far below any uniform step worth paying for
    globally.  Three nested zones keep both the RK4 error and the
    finite-difference angle-identity error below 1e-4 everywhere.
    """
    pieces = [np.arange(0.0, tau_end, coarse)]
    for t0 in np.atleast_1d(turn_times):
        pieces.append(np.arange(max(t0 - mid_halfwidth, 0.0),
                                min(t0 + mid_halfwidth, tau_end), mid))
        pieces.append(np.arange(max(t0 - core_halfwidth, 0.0),
                                min(t0 + core_halfwidth, tau_end), core))
    grid = np.unique(np.concatenate(pieces + [np.array([tau_end])]))
    # drop near-coincident nodes from zone seams: a step far below the core
    # spacing only amplifies roundoff in finite differences downstream
    keep = np.concatenate([[True], np.diff(grid) > 0.25 * core])
    keep[-1] = True
    return grid[keep]


@dataclass
class FrameRecord:
    """Joint centroid + frame solution on a fixed time grid."""
    tau: np.ndarray            # (n,)
    x_c: np.ndarray            # centroid position
    p_c: np.ndarray            # centroid momentum
    S: np.ndarray              # (n, 2, 2) frame matrices
    alpha: np.ndarray          # U''(x_c)
    eta: np.ndarray            # coherent expansion
    phi: np.ndarray            # unwrapped quadrature angle, phi[0] = 0
    omega_ratio: float         # omega/omega_t
    tau_d: float = field(default=np.nan)   # refined time of largest expansion
    eta_d: float = field(default=np.nan)   # eta at tau_d
    phi_bar: float = field(default=np.nan)  # phi at tau_d

    def index_of(self, tau: float) -> int:
        return int(np.argmin(np.abs(self.tau - tau)))

    def S_at(self, tau: float) -> np.ndarray:
        return self.S[self.index_of(tau)]


def _flow(model, omega_ratio, x, p, S):
    inv = 1.0 / omega_ratio
    alpha = eval_derivative(model, 2, x)
    dS = np.empty_like(S)
    dS[0, 0] = inv * S[1, 0]
    dS[0, 1] = inv * S[1, 1]
    dS[1, 0] = -omega_ratio * alpha * S[0, 0]
    dS[1, 1] = -omega_ratio * alpha * S[0, 1]
    return inv * p, -omega_ratio * eval_derivative(model, 1, x), dS


def propagate_frames(model, omega_ratio: float, x0: float, p0: float,
                     tau_grid: np.ndarray, *,
                     energy_tol: float = 1e-8,
                     det_tol: float = 1e-9) -> FrameRecord:
    """RK4 on the joint (x, p, S) system with stage-exact alpha.

    Raises IntegrationAccuracy when energy drifts, det S leaves 1 by more
    than det_tol, or the angle advances by more than pi/2 in one step
    (the unwrap would be ambiguous; refine the grid).
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    n = tau_grid.size
    x = np.empty(n)
    p = np.empty(n)
    S = np.empty((n, 2, 2))
    x[0], p[0] = x0, p0
    S[0] = np.eye(2)
    for i in range(n - 1):
        h = tau_grid[i + 1] - tau_grid[i]
        xi, pi, Si = x[i], p[i], S[i]
        k1 = _flow(model, omega_ratio, xi, pi, Si)
        k2 = _flow(model, omega_ratio, xi + 0.5 * h * k1[0], pi + 0.5 * h * k1[1],
                   Si + 0.5 * h * k1[2])
        k3 = _flow(model, omega_ratio, xi + 0.5 * h * k2[0], pi + 0.5 * h * k2[1],
                   Si + 0.5 * h * k2[2])
        k4 = _flow(model, omega_ratio, xi + h * k3[0], pi + h * k3[1],
                   Si + h * k3[2])
        x[i + 1] = xi + h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        p[i + 1] = pi + h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
        S[i + 1] = Si + h * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) / 6.0

    energy = p * p / (2.0 * omega_ratio) + omega_ratio * np.asarray(model(x))
    scale = max(abs(energy[0]), 1e-30)
    if np.max(np.abs(energy - energy[0])) > energy_tol * scale:
        raise IntegrationAccuracy("energy drift exceeds tolerance; refine the grid")
    dets = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    if np.max(np.abs(dets - 1.0)) > det_tol:
        raise IntegrationAccuracy(
            f"det S deviates from 1 by {np.max(np.abs(dets - 1.0)):.3e}; refine the grid")

    alpha = np.asarray(eval_derivative(model, 2, x))
    eta, phi = eta_phi(S)
    rec = FrameRecord(tau=tau_grid, x_c=x, p_c=p, S=S, alpha=alpha,
                      eta=eta, phi=phi, omega_ratio=omega_ratio)
    _attach_expansion_peak(rec)
    return rec


def propagate_S(alpha, omega_ratio: float, tau_grid, alpha_mid=None) -> np.ndarray:
    """Frame propagation from precomputed alpha samples (for cross-checks).

    alpha_mid, when given, supplies alpha at the step midpoints for the
    interior RK4 stages; otherwise the midpoint is taken as the average of
    the endpoints (one order lower, still fourth-order for smooth alpha up
    to the interpolation error).
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n = tau_grid.size
    S = np.empty((n, 2, 2))
    S[0] = np.eye(2)
    inv = 1.0 / omega_ratio

    def deriv(a, M):
        out = np.empty_like(M)
        out[0] = inv * M[1]
        out[1] = -omega_ratio * a * M[0]
        return out

    for i in range(n - 1):
        h = tau_grid[i + 1] - tau_grid[i]
        a0, a1 = alpha[i], alpha[i + 1]
        am = 0.5 * (a0 + a1) if alpha_mid is None else alpha_mid[i]
        M = S[i]
        k1 = deriv(a0, M)
        k2 = deriv(am, M + 0.5 * h * k1)
        k3 = deriv(am, M + 0.5 * h * k2)
        k4 = deriv(a1, M + h * k3)
        S[i + 1] = M + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return S


def eta_phi(S: np.ndarray):
    """Expansion eta and unwrapped angle phi from the frame's first row.

    Raises IntegrationAccuracy if the angle moves by pi/2 or more between
    consecutive samples, which makes the unwrap ambiguous.
    """
    eta = np.hypot(S[:, 0, 0], S[:, 0, 1])
    raw = np.arctan2(S[:, 0, 1], S[:, 0, 0])
    steps = np.diff(raw)
    steps = (steps + np.pi) % (2.0 * np.pi) - np.pi
    if steps.size and np.max(np.abs(steps)) >= 0.5 * np.pi:
        raise IntegrationAccuracy(
            "quadrature angle advances by >= pi/2 per step; refine the grid")
    phi = np.concatenate([[raw[0]], raw[0] + np.cumsum(steps)])
    return eta, phi


def _attach_expansion_peak(rec: FrameRecord) -> None:
    """Refine the global eta maximum by parabolic interpolation on log eta."""
    i = int(np.argmax(rec.eta))
    if 0 < i < rec.eta.size - 1:
        y0, y1, y2 = np.log(rec.eta[i - 1:i + 2])
        denom = y0 - 2.0 * y1 + y2
        shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        shift = float(np.clip(shift, -1.0, 1.0))
        h = rec.tau[i + 1] - rec.tau[i] if shift >= 0 else rec.tau[i] - rec.tau[i - 1]
        rec.tau_d = rec.tau[i] + shift * abs(h)
        rec.eta_d = float(np.exp(y1 - 0.25 * (y0 - y2) * shift))
        rec.phi_bar = float(np.interp(rec.tau_d, rec.tau, rec.phi))
    else:
        rec.tau_d = float(rec.tau[i])
        rec.eta_d = float(rec.eta[i])
        rec.phi_bar = float(rec.phi[i])


def eta_peaks(rec: FrameRecord, tau_split: float):
    """Refined local eta maxima on either side of tau_split.

    Returns ((tau1, eta1, phi1), (tau2, eta2, phi2)) for the two segments;
    used to measure the angle jump across the classical turning point.
    """
    out = []
    for lo, hi in ((rec.tau[0], tau_split), (tau_split, rec.tau[-1])):
        sel = (rec.tau >= lo) & (rec.tau <= hi)
        idx = np.nonzero(sel)[0]
        j = idx[np.argmax(rec.eta[idx])]
        if idx[0] < j < idx[-1]:
            y0, y1, y2 = np.log(rec.eta[j - 1:j + 2])
            denom = y0 - 2.0 * y1 + y2
            shift = 0.0 if denom == 0 else float(np.clip(0.5 * (y0 - y2) / denom, -1, 1))
        else:
            shift = 0.0
        h = rec.tau[min(j + 1, rec.tau.size - 1)] - rec.tau[j]
        tau_pk = rec.tau[j] + shift * h
        out.append((float(tau_pk), float(np.interp(tau_pk, rec.tau, rec.eta)),
                    float(np.interp(tau_pk, rec.tau, rec.phi))))
    return tuple(out)


def beta_coefficients(model, rec: FrameRecord, orders=(3, 4)) -> dict:
    """Frame couplings beta_n(tau) = (omega/omega_t) U^(n)(x_c) eta^n/(n-1)!."""
    from math import factorial
    out = {}
    for n in orders:
        un = np.asarray(eval_derivative(model, n, rec.x_c))
        out[n] = rec.omega_ratio * un * rec.eta ** n / factorial(n - 1)
    return out


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x), out=out[1:])
    return out


def kappa_integrals(beta: dict, tau: np.ndarray, *, rel_tol: float = 1e-6) -> dict:
    """Running integrals kappa_n(tau) of the frame couplings.

    Cumulative trapezoid, cross-checked at the endpoint against composite
    Simpson on the same (possibly graded) grid; disagreement beyond rel_tol
    raises QuadratureAccuracy (the grid under-resolves a beta peak).  A
    half-resolution check is unusable here: decimating a graded grid mixes
    zone spacings and inflates the estimate by orders of magnitude.
    """
    from scipy.integrate import simpson

    out = {}
    for n, b in beta.items():
        k = _cumtrapz(b, tau)
        est = simpson(b, x=tau)
        scale = max(abs(est), np.max(np.abs(k)), 1e-30)
        if abs(k[-1] - est) > rel_tol * scale:
            raise QuadratureAccuracy(
                f"kappa_{n} trapezoid/Simpson quadrature mismatch "
                f"{abs(k[-1] - est) / scale:.2e} rel; refine the grid")
        out[n] = k
    return out


def kappa_between(model, rec: FrameRecord, tau_start: float, tau_end: float,
                  orders=(3, 4), *, rel_tol: float = 1e-6) -> dict:
    """kappa_n accumulated between two times on the record's grid."""
    sel = (rec.tau >= tau_start - 1e-12) & (rec.tau <= tau_end + 1e-12)
    if sel.sum() < 3:
        raise ValueError("time window contains too few grid points")
    sub = FrameRecord(tau=rec.tau[sel], x_c=rec.x_c[sel], p_c=rec.p_c[sel],
                      S=rec.S[sel], alpha=rec.alpha[sel], eta=rec.eta[sel],
                      phi=rec.phi[sel], omega_ratio=rec.omega_ratio)
    beta = beta_coefficients(model, sub, orders)
    kap = kappa_integrals(beta, sub.tau, rel_tol=rel_tol)
    return {n: k[-1] for n, k in kap.items()}


def thawed_covariance(rec: FrameRecord, nbar: float = 0.0) -> np.ndarray:
    """Gaussian covariance (2 nbar + 1) S S^T of the linearized evolution."""
    return (2.0 * nbar + 1.0) * np.einsum("nij,nkj->nik", rec.S, rec.S)
