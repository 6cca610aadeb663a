"""Decoherence model: rate tables, Wigner-space coefficients, blurring.

Position-localization noise (rate ``gamma_loc``) and white fluctuations of
the trap potential (dimensionless PSD amplitudes ``S1`` for shape noise,
``S2`` for force noise) drive the open-system dynamics.  Three layers:

* ``build_coefficients`` -- the full rate table Gamma_nm and the
  dimensionless Wigner-generator coefficients c_nmk of the expansion
  L = sum_nmk c_nmk x^(n+m-k) d^k/dp^k acting on W(x, p).
* ``gamma_fluc`` / ``gamma_flucu`` -- the linearized momentum-diffusion
  rate along the centroid, Gamma_fluc(tau)/omega_t
  = (pi/2) (omega/omega_t)^4 [S1 U''(x_c)^2 + S2 U'(x_c)^2],
  and its time-independent upper bound over the classically reached range.
* ``blurring`` / ``blurring_matrix`` -- the accumulated blurring variance
  sigma_b^2(tau) = 4 int_0^tau (Gamma_eff/omega) eta^2 dtau' and its
  rank-1 lab-frame covariance sigma_b^2 S R(phi)^T e2 e2^T R(phi) S^T.

All rates are stored in units of the trap frequency omega_t; the c_nmk are
dimensionless (rates divided by omega).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import QuadratureAccuracy
from .potentials import eval_derivative, taylor_coefficients

__all__ = [
    "DecoherenceSpec", "BlurringRecord", "build_coefficients",
    "gamma_fluc", "gamma_flucu", "blurring", "blurring_matrix",
    "rotation", "assemble_blurring",
]


def rotation(phi: float) -> np.ndarray:
    """Frame rotation by ``phi``: maps (x, p) to the rotated quadratures.

    Convention fixed by the constant-angle frame r_g = R(phi) S^-1 (r - r_c),
    so R(phi) = [[cos, sin], [-sin, cos]].
    """
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class DecoherenceSpec:
    """Immutable rate tables for one noise configuration.

    ``gamma_nm[n, m]`` holds Gamma_nm / omega_t for 1 <= n, m <= order_max
    (row/column 0 unused); ``c_nmk[n, m, k]`` the dimensionless generator
    coefficients, nonzero only for even k with 2 <= k <= n + m.
    """

    S1: float
    S2: float
    gamma_loc: float           # units of omega_t
    freq_ratio: float          # omega / omega_t
    order_max: int
    gamma_nm: np.ndarray       # (order_max+1, order_max+1)
    c_nmk: np.ndarray          # (order_max+1, order_max+1, 2*order_max+1)


def build_coefficients(model, *, S1: float, S2: float, gamma_loc: float = 0.0,
                       freq_ratio: float, order_max: int = 4) -> DecoherenceSpec:
    """Rate table and Wigner-generator coefficients for ``model``.

    With u_k = U^(k)(0),

        Gamma_nm / omega_t = (pi/2) (omega/omega_t)^4 / (n! m!)
                             * [S1 u_(n+1) u_(m+1) + S2 u_n u_m]
                             + delta_n1 delta_m1 gamma_loc,

        c_nmk = (-i)^k [1 + (-1)^k] (Gamma_nm / 2 omega)
                * [sum_q (-1)^q C(n, q) C(m, k - q) - C(n+m, k)].

    The bracket vanishes for odd k; for even k the phase (-i)^k = (-1)^(k/2)
    is real.  k = 2 collapses to c_nm2 = 2 n m Gamma_nm / omega, whose
    generating-function resummation over n, m reproduces Gamma_fluc(x)
    exactly for polynomial U (momentum-diffusion sum rule).  Pure
    localization keeps only c_112 = 2 gamma_loc / omega.

    Taylor derivatives of ``model`` must exist up to ``order_max + 1``
    (exact zeros count); a model that cannot supply them raises
    OrderUnavailable.
    """
    if order_max < 1:
        raise ValueError(f"order_max must be >= 1, got {order_max}")
    u = taylor_coefficients(model, order_max + 1)
    wr = float(freq_ratio)
    pref = 0.5 * math.pi * wr ** 4

    nmax = order_max
    gam = np.zeros((nmax + 1, nmax + 1))
    for n in range(1, nmax + 1):
        for m in range(1, nmax + 1):
            gam[n, m] = pref / (math.factorial(n) * math.factorial(m)) * (
                S1 * u[n + 1] * u[m + 1] + S2 * u[n] * u[m])
    gam[1, 1] += gamma_loc

    c = np.zeros((nmax + 1, nmax + 1, 2 * nmax + 1))
    for n in range(1, nmax + 1):
        for m in range(1, nmax + 1):
            if gam[n, m] == 0.0:
                continue
            for k in range(2, n + m + 1, 2):
                brack = sum((-1) ** q * math.comb(n, q) * math.comb(m, k - q)
                            for q in range(k + 1)) - math.comb(n + m, k)
                c[n, m, k] = (-1) ** (k // 2) * gam[n, m] / wr * brack
    return DecoherenceSpec(S1=float(S1), S2=float(S2), gamma_loc=float(gamma_loc),
                           freq_ratio=wr, order_max=nmax, gamma_nm=gam, c_nmk=c)


def gamma_fluc(model, x_c, freq_ratio: float, S1: float, S2: float):
    """Linearized fluctuation rate along the centroid, in omega_t units.

    Gamma_fluc / omega_t = (pi/2) (omega/omega_t)^4
                           * [S1 U''(x_c)^2 + S2 U'(x_c)^2].

    Each channel is a separate additive term, so S1 = 0 or S2 = 0 simply
    drops it.
    """
    x_c = np.asarray(x_c, dtype=float)
    pref = 0.5 * math.pi * freq_ratio ** 4
    out = np.zeros_like(x_c)
    if S1 != 0.0:
        out = out + S1 * eval_derivative(model, 2, x_c) ** 2
    if S2 != 0.0:
        out = out + S2 * eval_derivative(model, 1, x_c) ** 2
    return pref * out


def gamma_flucu(model, freq_ratio: float, S1: float, S2: float,
                x_reach: float, *, n_scan: int = 8193) -> float:
    """Time-independent upper bound on ``gamma_fluc`` over |x| <= x_reach.

    Bounds each channel by its own maximum, so the result dominates the sum
    pointwise.  For the double well with x_reach = sqrt(2) d the maxima sit
    at the endpoints and the bound is exactly
    (pi/2) (omega/omega_t)^4 (25 S1 + 2 S2 d^2).
    """
    xg = np.linspace(-x_reach, x_reach, n_scan)
    pref = 0.5 * math.pi * freq_ratio ** 4
    out = 0.0
    if S1 != 0.0:
        out += S1 * float(np.max(eval_derivative(model, 2, xg) ** 2))
    if S2 != 0.0:
        out += S2 * float(np.max(eval_derivative(model, 1, xg) ** 2))
    return pref * out


def blurring(eta: np.ndarray, gamma_eff, tau_grid: np.ndarray,
             freq_ratio: float, *, rel_tol: float = 1e-6) -> np.ndarray:
    """Accumulated blurring variance sigma_b^2 on ``tau_grid``.

        sigma_b^2(tau) = 4 int_0^tau (Gamma_eff / omega) eta^2 dtau'

    with ``gamma_eff`` in omega_t units (scalar or array; a scalar gives the
    constant-rate variant, e.g. the upper bound from ``gamma_flucu``).
    The endpoint is cross-checked against the half-resolution grid; a
    relative mismatch beyond ``rel_tol`` raises QuadratureAccuracy (the
    grid does not resolve the integrand).
    """
    tau = np.asarray(tau_grid, dtype=float)
    w = 4.0 / freq_ratio * np.broadcast_to(
        np.asarray(gamma_eff, dtype=float), tau.shape) * np.asarray(eta) ** 2
    sig = cumulative_trapezoid(w, tau, initial=0.0)
    if tau.size >= 5:
        coarse = np.trapezoid(w[::2], tau[::2])
        scale = max(abs(sig[-1]), abs(coarse), 1e-300)
        if abs(sig[-1] - coarse) > rel_tol * scale:
            raise QuadratureAccuracy(
                "blurring quadrature not converged: full vs half grid "
                f"{sig[-1]:.6e} vs {coarse:.6e}")
    return sig


def blurring_matrix(sigma_b_sq, S: np.ndarray, phi_bar: float) -> np.ndarray:
    """Lab-frame blurring covariance for a fixed frame angle.

        Sigma_b(tau) = sigma_b^2(tau) * w w^T,   w = S(tau) R(phi_bar)^T e2,

    one symmetric PSD rank-1 matrix per sample.  ``S`` may be a single 2x2
    or an (n, 2, 2) stack aligned with ``sigma_b_sq``.
    """
    S = np.asarray(S, dtype=float)
    sig = np.atleast_1d(np.asarray(sigma_b_sq, dtype=float))
    scalar_in = S.ndim == 2 and np.ndim(sigma_b_sq) == 0
    Ss = np.broadcast_to(S, (sig.size, 2, 2)) if S.ndim == 2 else S
    e = rotation(phi_bar).T @ np.array([0.0, 1.0])
    w = Ss @ e                                   # (n, 2)
    # outer product before the scalar factor keeps the result exactly symmetric
    out = sig[:, None, None] * (w[:, :, None] * w[:, None, :])
    return out[0] if scalar_in else out


@dataclass(frozen=True)
class BlurringRecord:
    """Blurring diagnostics along one frame solution (rates in omega_t units)."""

    tau: np.ndarray
    gamma_fluc: np.ndarray
    gamma_eff: np.ndarray          # gamma_loc + gamma_fluc
    sigma_b_sq: np.ndarray
    sigma_b_sq_upper: np.ndarray   # constant-rate bound variant
    Sigma_b: np.ndarray            # (n, 2, 2)


def assemble_blurring(model, rec, *, S1: float, S2: float,
                      gamma_loc: float = 0.0, phi_bar: float | None = None,
                      x_reach: float | None = None,
                      rel_tol: float = 1e-6) -> BlurringRecord:
    """Full blurring pipeline along a FrameRecord.

    ``phi_bar`` defaults to the record's refined peak-expansion angle;
    ``x_reach`` to the largest |x_c| on the grid (the classically reached
    range, which is what the bound is quoted over).
    """
    if phi_bar is None:
        phi_bar = rec.phi_bar
    if x_reach is None:
        x_reach = float(np.max(np.abs(rec.x_c)))
    gf = gamma_fluc(model, rec.x_c, rec.omega_ratio, S1, S2)
    ge = gf + gamma_loc
    gbar = gamma_flucu(model, rec.omega_ratio, S1, S2, x_reach) + gamma_loc
    sig = blurring(rec.eta, ge, rec.tau, rec.omega_ratio, rel_tol=rel_tol)
    sigu = blurring(rec.eta, gbar, rec.tau, rec.omega_ratio, rel_tol=rel_tol)
    Sb = blurring_matrix(sig, rec.S, phi_bar)
    return BlurringRecord(tau=rec.tau, gamma_fluc=gf, gamma_eff=ge,
                          sigma_b_sq=sig, sigma_b_sq_upper=sigu, Sigma_b=Sb)
