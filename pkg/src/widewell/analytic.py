"""Constant-angle approximation: angle schedules, moments, validity metrics.

The nonlinear residual of the dynamics acts in the co-moving Gaussian frame
through the angle-dependent generator sum_n beta_n(tau) terms.  Freezing the
quadrature angle phi(tau) at a constant phi_bar per segment makes the
accumulated action integrable: everything depends on the running integrals
kappa_n(tau) = int beta_n dtau' only.  The angle is chosen at the time of
largest expansion eta, where the residual accumulates fastest; across a
turning point the angle sweeps by ~pi and a second segment at
phi_bar_2 = phi_bar_1 + pi - delta takes over.

Moments of the approximate state follow from the shear map
v -> v - sum_n kappa_n u^(n-1) applied to the initial Gaussian in the
rotated frame (u, v) = R(phi_bar) r_g, composed across segments; the
closed forms below match the polynomial pushforward exactly (unit tested).
Decoherence enters only through the additive blurring matrix Sigma_b,
leaving first moments untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .decoherence import blurring_matrix, rotation
from .errors import ConfigError
from .frames import beta_coefficients, kappa_integrals
from .special import double_factorial

__all__ = [
    "AngleChoice", "AngleSchedule", "MomentTrack", "DeltaScan",
    "choose_angle", "two_segment_schedule", "gaussian_moment",
    "approx_first_moments", "approx_covariance", "schedule_blurring_matrix",
    "approx_moment_track", "chi_metric", "epsilon_metrics", "calibrate_delta",
]

_E2 = np.array([0.0, 1.0])


def gaussian_moment(k: int, sigma_sq: float) -> float:
    """Central moment <x^k> of a 1D Gaussian with variance ``sigma_sq``."""
    if k % 2:
        return 0.0
    return float(double_factorial(k - 1)) * sigma_sq ** (k // 2)


@dataclass(frozen=True)
class AngleChoice:
    """Angle selected for one segment; ``fallback`` marks a monotone-eta
    segment where the midpoint angle was used instead of an interior peak."""

    phi_bar: float
    tau_star: float
    fallback: bool


def choose_angle(rec, tau_start: float, tau_end: float) -> AngleChoice:
    """Angle at the time of largest expansion within [tau_start, tau_end].

    The grid argmax of eta is refined by a parabola through the three
    neighbouring samples (the graded grids are non-uniform, so the fit is
    done in shifted tau).  When eta is monotone on the segment -- no
    interior maximum -- the midpoint angle is returned with the fallback
    flag set.
    """
    sel = np.nonzero((rec.tau >= tau_start) & (rec.tau <= tau_end))[0]
    if sel.size < 3:
        raise ConfigError(
            f"angle segment [{tau_start}, {tau_end}] holds fewer than 3 samples")
    j = sel[np.argmax(rec.eta[sel])]
    if j == sel[0] or j == sel[-1]:
        mid = 0.5 * (tau_start + tau_end)
        return AngleChoice(phi_bar=float(np.interp(mid, rec.tau, rec.phi)),
                           tau_star=mid, fallback=True)
    t0, t1, t2 = rec.tau[j - 1: j + 2]
    e0, e1, e2 = rec.eta[j - 1: j + 2]
    coef = np.polyfit([t0 - t1, 0.0, t2 - t1], [e0, e1, e2], 2)
    tau_star = t1 - coef[1] / (2.0 * coef[0]) if coef[0] < 0.0 else t1
    tau_star = float(np.clip(tau_star, t0, t2))
    return AngleChoice(phi_bar=float(np.interp(tau_star, rec.tau, rec.phi)),
                       tau_star=tau_star, fallback=False)


@dataclass(frozen=True)
class AngleSchedule:
    """Piecewise-constant angle plan: segments of (tau_start, tau_end, phi_bar).

    ``delta`` is the second-segment tuning offset, phi_bar_2 = phi_bar_1 +
    pi - delta; zero for single-segment schedules.  Fine tuning only makes
    sense for |delta| << 1, so construction rejects |delta| >= 0.1.
    """

    segments: tuple[tuple[float, float, float], ...]
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.segments:
            raise ConfigError("schedule needs at least one segment")
        if not np.isclose(self.segments[0][0], 0.0, rtol=0, atol=1e-9):
            raise ConfigError(
                f"schedule must cover from tau=0, starts at {self.segments[0][0]}")
        for (a0, b0, _), (a1, _, _) in zip(self.segments, self.segments[1:]):
            if not np.isclose(b0, a1, rtol=0, atol=1e-9):
                raise ConfigError(
                    f"segments not contiguous: {b0} then {a1}")
        for a, b, _ in self.segments:
            if not b > a:
                raise ConfigError(f"empty segment [{a}, {b}]")
        if not abs(self.delta) < 0.1:
            raise ConfigError(
                f"second-segment offset delta={self.delta} outside |delta| < 0.1")

    @property
    def tau_end(self) -> float:
        return self.segments[-1][1]

    def segment_index(self, tau) -> np.ndarray:
        """Index of the segment containing each tau (boundaries go left)."""
        edges = np.array([s[1] for s in self.segments[:-1]])
        return np.searchsorted(edges, np.asarray(tau, dtype=float), side="left")

    def phi_bar_at(self, tau) -> np.ndarray:
        phis = np.array([s[2] for s in self.segments])
        return phis[self.segment_index(tau)]


def two_segment_schedule(rec, tau_switch: float, *, tau_end: float | None = None,
                         delta: float | None = None) -> AngleSchedule:
    """Schedule for one turning-point passage at ``tau_switch``.

    ``delta=None`` takes the second angle from the expansion peak of the
    second segment (the natural choice); an explicit delta pins
    phi_bar_2 = phi_bar_1 + pi - delta instead (the tuned variant).
    """
    if tau_end is None:
        tau_end = float(rec.tau[-1])
    first = choose_angle(rec, 0.0, tau_switch)
    if delta is None:
        second = choose_angle(rec, tau_switch, tau_end)
        delta = first.phi_bar + np.pi - second.phi_bar
        phi2 = second.phi_bar
    else:
        phi2 = first.phi_bar + np.pi - delta
    return AngleSchedule(segments=((0.0, tau_switch, first.phi_bar),
                                   (tau_switch, tau_end, phi2)),
                         delta=float(delta))


# ---------------------------------------------------------------------------
# moments


def _kappa_items(kappa: dict) -> list[tuple[int, np.ndarray]]:
    return sorted((int(n), np.asarray(k)) for n, k in kappa.items())


def approx_first_moments(r_cl: np.ndarray, S: np.ndarray, kappa: dict,
                         phi_bar: float, *, nbar: float = 0.0) -> np.ndarray:
    """Single-segment approximate means.

        mu_a = r_cl - [sum_n kappa_n <x^(n-1)>_0] S R(phi_bar)^T e2,

    with the Gaussian-frame initial moments of variance 2 nbar + 1.
    Decoherence does not enter.  ``r_cl`` is (n, 2), ``S`` (n, 2, 2);
    kappa values are scalars or arrays aligned with the samples.
    """
    sig = 2.0 * nbar + 1.0
    shift = np.asarray(sum(k * gaussian_moment(n - 1, sig)
                           for n, k in _kappa_items(kappa)), dtype=float)
    if shift.ndim:
        shift = shift[..., None]
    w = np.asarray(S) @ (rotation(phi_bar).T @ _E2)
    return np.asarray(r_cl) - shift * w


def _shear_bracket(kappa_at, sig: float) -> np.ndarray:
    """Central covariance of (u, v - sum_n kappa_n u^(n-1)) for the
    isotropic Gaussian of variance ``sig``; broadcasts kappa arrays."""
    items = [(n, np.asarray(k, dtype=float)) for n, k in kappa_at]
    shape = np.broadcast_shapes(*(k.shape for _, k in items)) if items else ()
    C = np.zeros(shape + (2, 2))
    C[..., 0, 0] = sig
    C[..., 1, 1] = sig
    for n, k in items:
        m1 = gaussian_moment(n, sig)            # <u^n>
        C[..., 0, 1] -= k * m1
        C[..., 1, 0] -= k * m1
    for n, kn in items:
        for m, km in items:
            mm = (gaussian_moment(n + m - 2, sig)
                  - gaussian_moment(n - 1, sig) * gaussian_moment(m - 1, sig))
            C[..., 1, 1] += kn * km * mm
    return C


def approx_covariance(S: np.ndarray, kappa: dict, phi_bar: float, *,
                      nbar: float = 0.0,
                      Sigma_b: np.ndarray | None = None) -> np.ndarray:
    """Single-segment approximate covariance.

        C_a = S R^T [ C(0) - sum_n kappa_n M1(n)
                      + sum_nm kappa_n kappa_m M2(n, m) ] R S^T + Sigma_b,

    where the bracket is the central covariance of the sheared Gaussian
    (M1 carries <x^n> off-diagonally, M2 the <x^(n+m-2)> - <x^(n-1)><x^(m-1)>
    excess in the vv slot).  Blurring is purely additive.
    """
    sig = 2.0 * nbar + 1.0
    R = rotation(phi_bar)
    C = _shear_bracket(_kappa_items(kappa), sig)
    out = np.asarray(S) @ (R.T @ C @ R) @ np.swapaxes(np.asarray(S), -1, -2)
    if Sigma_b is not None:
        out = out + Sigma_b
    return out


def schedule_blurring_matrix(schedule: AngleSchedule, sigma_b_sq: np.ndarray,
                             tau: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Blurring covariance under a piecewise-constant angle schedule.

    Noise injected while segment k is active stays pinned to that segment's
    angle; the frame matrix transports the whole sum.  Monotonicity of
    sigma_b^2 turns the per-segment split into clipped differences.
    """
    tau = np.asarray(tau, dtype=float)
    sig = np.asarray(sigma_b_sq, dtype=float)
    edges = [s[1] for s in schedule.segments]
    out = np.zeros(sig.shape + (2, 2))
    lo = 0.0
    for (a, b, phi), edge in zip(schedule.segments, edges):
        hi = float(np.interp(edge, tau, sig)) if edge < tau[-1] else float(sig[-1])
        part = np.clip(sig, lo, hi) - lo
        out = out + blurring_matrix(part, S, phi)
        lo = hi
    return out


# --- polynomial pushforward for the composed (two-segment) map -------------

def _pmul(p: dict, q: dict) -> dict:
    out: dict = {}
    for (a1, b1), c1 in p.items():
        for (a2, b2), c2 in q.items():
            key = (a1 + a2, b1 + b2)
            prod = c1 * c2
            out[key] = out[key] + prod if key in out else prod
    return out


def _padd(p: dict, q: dict, s=1.0) -> dict:
    out = dict(p)
    for key, c in q.items():
        out[key] = out[key] + s * c if key in out else s * c
    return out


def _pscale(p: dict, s) -> dict:
    return {key: s * c for key, c in p.items()}


def _pexpect(p: dict, sig: float):
    tot = 0.0
    for (a, b), c in p.items():
        g = gaussian_moment(a, sig) * gaussian_moment(b, sig)
        if g:
            tot = tot + c * g
    return tot


def composed_moments(kappa1: dict, kappa2: dict, delta: float, *,
                     nbar: float = 0.0):
    """Gaussian-frame moments after shear / rotate-by-(pi - delta) / shear.

    ``kappa1`` holds the segment-1 totals (scalars), ``kappa2`` the running
    segment-2 integrals (scalars or arrays over the evaluation times).  The
    map is polynomial in the initial (u, v), so means and covariances are
    exact Gaussian expectations; the odd-derivative quantum corrections of
    the generator do not move moments of order <= 2.  Returns (mean, cov)
    in the phi_bar_2 frame, shapes (..., 2) and (..., 2, 2).
    """
    sig = 2.0 * nbar + 1.0
    u = {(1, 0): 1.0}
    v = {(0, 1): 1.0}
    v1 = dict(v)
    for n, k in _kappa_items(kappa1):
        v1 = _padd(v1, {(n - 1, 0): 1.0}, -np.asarray(k))
    cd, sd = np.cos(delta), np.sin(delta)
    x2 = _padd(_pscale(u, -cd), v1, sd)
    p2 = _padd(_pscale(u, -sd), v1, -cd)
    items2 = _kappa_items(kappa2)
    powers = {1: x2}
    for j in range(2, max((n - 1 for n, _ in items2), default=1) + 1):
        powers[j] = _pmul(powers[j - 1], x2)
    for n, k in items2:
        p2 = _padd(p2, powers[n - 1], -np.asarray(k))
    mx, mp = _pexpect(x2, sig), _pexpect(p2, sig)
    cxx = _pexpect(_pmul(x2, x2), sig) - mx * mx
    cxp = _pexpect(_pmul(x2, p2), sig) - mx * mp
    cpp = _pexpect(_pmul(p2, p2), sig) - mp * mp
    mean = np.stack(np.broadcast_arrays(np.asarray(mx, float), np.asarray(mp, float)),
                    axis=-1)
    cov = np.stack([np.stack(np.broadcast_arrays(np.asarray(cxx, float),
                                                 np.asarray(cxp, float)), axis=-1),
                    np.stack(np.broadcast_arrays(np.asarray(cxp, float),
                                                 np.asarray(cpp, float)), axis=-1)],
                   axis=-2)
    return mean, cov


@dataclass(frozen=True)
class MomentTrack:
    """Approximate mean/covariance along the frame grid."""

    tau: np.ndarray
    mean: np.ndarray            # (n, 2)
    cov: np.ndarray             # (n, 2, 2)
    psd_ok: np.ndarray          # per-sample PSD flag (advisory)


def approx_moment_track(model, rec, schedule: AngleSchedule, *,
                        nbar: float = 0.0,
                        sigma_b_sq: np.ndarray | None = None,
                        orders=(3, 4)) -> MomentTrack:
    """Approximate moments on the full frame grid under ``schedule``.

    Segment 1 uses the closed forms; later segments the composed polynomial
    map with the segment-boundary kappa split.  ``sigma_b_sq`` (aligned with
    ``rec.tau``) adds the blurring matrix; means never see it.
    """
    beta = beta_coefficients(model, rec, orders=orders)
    kap = kappa_integrals(beta, rec.tau)
    r_cl = np.stack([rec.x_c, rec.p_c], axis=-1)
    n = rec.tau.size
    mean = np.empty((n, 2))
    cov = np.empty((n, 2, 2))

    (a0, b0, phi1) = schedule.segments[0]
    seg = schedule.segment_index(rec.tau)
    m0 = seg == 0
    k0 = {nn: kk[m0] for nn, kk in kap.items()}
    mean[m0] = approx_first_moments(r_cl[m0], rec.S[m0], k0, phi1, nbar=nbar)
    cov[m0] = approx_covariance(rec.S[m0], k0, phi1, nbar=nbar)

    if len(schedule.segments) > 1:
        if len(schedule.segments) > 2:
            raise ConfigError("moment track supports at most two segments")
        (a1, b1, phi2) = schedule.segments[1]
        m1 = ~m0
        ksw = {nn: float(np.interp(a1, rec.tau, kk)) for nn, kk in kap.items()}
        k2 = {nn: kk[m1] - ksw[nn] for nn, kk in kap.items()}
        mg, cg = composed_moments(ksw, k2, schedule.delta, nbar=nbar)
        R2T = rotation(phi2).T
        mean[m1] = r_cl[m1] + (rec.S[m1] @ R2T @ mg[..., None])[..., 0]
        cov[m1] = rec.S[m1] @ R2T @ cg @ R2T.T @ np.swapaxes(rec.S[m1], -1, -2)

    if sigma_b_sq is not None:
        cov = cov + schedule_blurring_matrix(schedule, sigma_b_sq, rec.tau, rec.S)

    eig = np.linalg.eigvalsh(cov)
    scale = np.maximum(np.trace(cov, axis1=-2, axis2=-1), 1e-30)
    psd_ok = eig[:, 0] >= -1e-9 * scale
    if not psd_ok.all():
        warnings.warn(f"approximate covariance not PSD at "
                      f"{int((~psd_ok).sum())} of {n} samples", stacklevel=2)
    return MomentTrack(tau=rec.tau, mean=mean, cov=cov, psd_ok=psd_ok)


# ---------------------------------------------------------------------------
# validity metrics


def chi_metric(beta: dict, phi: np.ndarray, phi_bar: float,
               tau_grid: np.ndarray) -> np.ndarray:
    """Accumulated angle-freeze error bound

        chi(tau) = sum_n int_0^tau |beta_n| |phi - phi_bar| dtau'.

    Monotone nondecreasing from zero; drives segment placement.
    """
    dev = np.abs(np.asarray(phi) - phi_bar)
    total = sum(np.abs(np.asarray(b)) for b in beta.values()) * dev
    return cumulative_trapezoid(total, np.asarray(tau_grid), initial=0.0)


def epsilon_metrics(mean_ref: np.ndarray, mean_approx: np.ndarray,
                    cov_ref: np.ndarray, cov_approx: np.ndarray):
    """Symmetric relative errors of first and second moments.

        eps1 = 2 |mu - mu_a| / (|mu| + |mu_a|),
        eps2 = the same with the Hilbert-Schmidt norm on covariances;

    0/0 counts as zero error.
    """
    def rel(diff, na, nb):
        den = na + nb
        out = np.zeros_like(den)
        np.divide(2.0 * diff, den, out=out, where=den > 0.0)
        return out

    mu, mua = np.asarray(mean_ref), np.asarray(mean_approx)
    C, Ca = np.asarray(cov_ref), np.asarray(cov_approx)
    eps1 = rel(np.linalg.norm(mu - mua, axis=-1),
               np.linalg.norm(mu, axis=-1), np.linalg.norm(mua, axis=-1))
    hs = lambda M: np.linalg.norm(M, axis=(-2, -1))
    eps2 = rel(hs(C - Ca), hs(C), hs(Ca))
    return eps1, eps2


@dataclass(frozen=True)
class DeltaScan:
    """Result of the second-angle tuning scan."""

    delta: float
    deltas: np.ndarray
    l1: np.ndarray


def calibrate_delta(deltas, marginal_fn: Callable[[float], np.ndarray],
                    x_axis: np.ndarray, reference_density: np.ndarray) -> DeltaScan:
    """Pick delta minimizing the L1 distance to a reference marginal.

    ``marginal_fn(delta)`` must return the analytic position density on
    ``x_axis``.  Both densities are renormalized on the window before
    comparison so that truncation does not bias the scan.
    """
    x = np.asarray(x_axis, dtype=float)
    ref = np.asarray(reference_density, dtype=float)
    ref = ref / np.trapezoid(ref, x)
    deltas = np.asarray(deltas, dtype=float)
    l1 = np.empty(deltas.shape)
    for i, d in enumerate(deltas):
        cand = np.asarray(marginal_fn(float(d)), dtype=float)
        cand = cand / np.trapezoid(cand, x)
        l1[i] = 0.5 * np.trapezoid(np.abs(cand - ref), x)
    best = int(np.argmin(l1))
    return DeltaScan(delta=float(deltas[best]), deltas=deltas, l1=l1)
