"""Closed-form Wigner functions of the constant-angle solution.

The coherent non-Gaussian map acts in the rotated Gaussian-frame coordinates
(x, p) = R(phi_bar) r_g as a commuting family of generators, so the state at
any time inside one angle segment is a pointwise closed form: a Gaussian in x
times a Gauss-Airy profile in p whose coefficients depend on x,

    W(x, p) = g(x) * GA(kappa3 + 3 kappa4 x,  2 nbar + 1 + sigma_b_sq,
                        p + kappa3 x^2 + kappa4 x^3),

with GA the Gauss-Airy integral of :mod:`.special` and g the initial position
marginal (variance 2 nbar + 1).  Equivalently, in the characteristic
representation W(x, p) = (1/2pi) Int dk Ghat(x, k) exp(i p k) with

    Ghat(x, k) = g(x) exp[i c3(x) k^3/3 - c2 k^2/2 + i K(x) k],

c3(x) = kappa3 + 3 kappa4 x, K(x) = kappa3 x^2 + kappa4 x^3.  The second
angle segment multiplies Ghat by the same kind of factor in its own rotated
coordinates; composing the two across the near-pi frame rotation is done
per point by a one-dimensional k-quadrature (the slanted-line characteristic
function collapses onto a stationary wavenumber, exact at delta = 0).

Marginals: the position distribution of the cubic-phase state has an
|Ai(complex)|^2 closed form; decoherence acts on it as a Gaussian
convolution of variance Sigma_b[0, 0].

Grid conventions: values arrays are indexed [ix, ip]; frame tags are
"gaussian" (rotated Gaussian-frame coordinates of the active segment),
"centroid" (coordinates relative to the classical trajectory) and "lab".
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .decoherence import blurring_matrix, rotation
from .errors import ConfigError, QuadratureAccuracy, WindowError
from .special import airy_ai_parts, gauss_airy_log

__all__ = [
    "WignerGrid",
    "CubicPhaseState",
    "ComposedState",
    "airy_pure_wigner",
    "analytic_wigner_segment1",
    "compose_segments",
    "to_lab_frame",
    "auto_window",
    "position_marginal_coherent",
    "position_marginal_decohered",
    "fringe_maxima",
    "analytic_wigner",
]

FRAME_TAGS = ("lab", "centroid", "gaussian")

_TWO_PI = 2.0 * np.pi


def _uniform_axis(axis: np.ndarray, name: str) -> np.ndarray:
    axis = np.asarray(axis, float)
    if axis.ndim != 1 or axis.size < 2:
        raise ConfigError(f"{name} must be a 1-d axis with at least 2 points")
    steps = np.diff(axis)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ConfigError(f"{name} must be uniformly spaced")
    return axis


@dataclass
class WignerGrid:
    """Wigner function sampled on a uniform rectangular phase-space grid."""

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # [ix, ip]
    tau: float = 0.0
    frame_tag: str = "gaussian"
    flags: tuple = ()

    def __post_init__(self):
        self.x_axis = _uniform_axis(self.x_axis, "x_axis")
        self.p_axis = _uniform_axis(self.p_axis, "p_axis")
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.x_axis.size, self.p_axis.size):
            raise ConfigError(
                f"values shape {self.values.shape} does not match axes "
                f"({self.x_axis.size}, {self.p_axis.size})")
        if self.frame_tag not in FRAME_TAGS:
            raise ConfigError(f"frame_tag must be one of {FRAME_TAGS}")

    def norm(self) -> float:
        inner = np.trapezoid(self.values, self.p_axis, axis=1)
        return float(np.trapezoid(inner, self.x_axis))

    def position_marginal(self) -> np.ndarray:
        return np.trapezoid(self.values, self.p_axis, axis=1)

    def check_norm(self, lo: float = 0.99, hi: float = 1.01) -> float:
        """Window-capture check: trapezoid norm must sit in [lo, hi]."""
        n = self.norm()
        if not lo <= n <= hi:
            raise WindowError(
                f"grid norm {n:.6f} outside [{lo}, {hi}]: window does not "
                "capture the state (or clips its tails)")
        return n


def _log_gaussian(x: np.ndarray, var: float) -> np.ndarray:
    return -x * x / (2.0 * var) - 0.5 * np.log(_TWO_PI * var)


@dataclass(frozen=True)
class CubicPhaseState:
    """Segment-1 closed form in rotated Gaussian-frame coordinates."""

    kappa3: float
    kappa4: float = 0.0
    sigma_b_sq: float = 0.0
    nbar: float = 0.0

    @property
    def c2(self) -> float:
        return 2.0 * self.nbar + 1.0 + self.sigma_b_sq

    @property
    def x_var(self) -> float:
        return 2.0 * self.nbar + 1.0

    def shear(self, x):
        x = np.asarray(x, float)
        return self.kappa3 * x * x + self.kappa4 * x ** 3

    def cubic_coeff(self, x):
        return self.kappa3 + 3.0 * self.kappa4 * np.asarray(x, float)

    def values(self, x, p) -> np.ndarray:
        """Pointwise Wigner values; x and p broadcast against each other."""
        x, p = np.broadcast_arrays(np.asarray(x, float), np.asarray(p, float))
        mant, logv = gauss_airy_log(self.cubic_coeff(x), self.c2,
                                    p + self.shear(x))
        out = mant * np.exp(logv + _log_gaussian(x, self.x_var))
        return out

    def characteristic(self, x, k) -> np.ndarray:
        """Ghat(x, k): Fourier transform of the p-profile at fixed x."""
        x, k = np.broadcast_arrays(np.asarray(x, float), np.asarray(k, float))
        phase = (self.cubic_coeff(x) * k ** 3 / 3.0 + self.shear(x) * k)
        return np.exp(_log_gaussian(x, self.x_var) - 0.5 * self.c2 * k * k
                      + 1j * phase)


def airy_pure_wigner(x, p, kappa3: float) -> np.ndarray:
    """Reduced cubic-phase Wigner form (kappa4 = sigma_b = nbar = 0).

    For kappa3 > 0:
        W = (2 pi)^(-1/2) |k3|^(-1/3) exp[(6 k3 p + 1)/(12 k3^2)]
            * Ai[x^2 |k3|^(2/3) + p/|k3|^(1/3) + 1/(4 |k3|^(4/3))]
    and kappa3 < 0 follows by the reflection W_{-k3}(x, p) = W_{k3}(x, -p).
    Evaluated in log space so the huge envelope/Airy cancellation at small
    |kappa3| stays finite.
    """
    if kappa3 == 0.0:
        raise ConfigError("airy_pure_wigner needs kappa3 != 0; use the "
                          "Gaussian directly")
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    a3 = abs(kappa3)
    ps = np.sign(kappa3) * p
    arg = (x * x * a3 ** (2.0 / 3.0) + ps / a3 ** (1.0 / 3.0)
           + 0.25 / a3 ** (4.0 / 3.0))
    mant, scale = airy_ai_parts(arg)
    logw = ((6.0 * a3 * ps + 1.0) / (12.0 * a3 * a3) + scale.real
            - 0.5 * np.log(_TWO_PI) - np.log(a3) / 3.0)
    return mant.real * np.exp(logw)


def analytic_wigner_segment1(x_phi, p_phi, *, kappa3: float,
                             kappa4: float = 0.0, sigma_b_sq: float = 0.0,
                             nbar: float = 0.0, tau: float = 0.0) -> WignerGrid:
    """Gaussian-frame Wigner grid for a single angle segment.

    Axes are the rotated coordinates (x_phi, p_phi); the closed form handles
    kappa3 -> 0 (Gaussian limit) pointwise.
    """
    state = CubicPhaseState(kappa3, kappa4, sigma_b_sq, nbar)
    vals = state.values(np.asarray(x_phi, float)[:, None],
                        np.asarray(p_phi, float)[None, :])
    return WignerGrid(x_phi, p_phi, vals, tau=tau, frame_tag="gaussian")


# ---------------------------------------------------------------------------
# two-segment composition


def _kappa_map(kappa2) -> tuple:
    """Normalize a {order: kappa} mapping to (k3, k4)."""
    if kappa2 is None:
        return 0.0, 0.0
    if isinstance(kappa2, dict):
        extra = set(kappa2) - {3, 4}
        if extra:
            raise ConfigError(f"segment-2 generator supports orders 3 and 4, "
                              f"got {sorted(extra)}")
        return float(kappa2.get(3, 0.0)), float(kappa2.get(4, 0.0))
    k = tuple(float(v) for v in kappa2)
    if len(k) != 2:
        raise ConfigError("kappa2 must be a {3: k3, 4: k4} mapping or a "
                          "(k3, k4) pair")
    return k


@dataclass
class ComposedState:
    """Segment-1 state pushed through the second-segment map.

    Coordinates are the *second* segment's rotated Gaussian-frame pair
    (x2, p2) = R(phi_bar_2) r_g.  The frames differ by Delta = pi - delta.
    The classical shear is exact; quantum terms and the frame slant are
    evaluated by a nodes-doubling trapezoid over the characteristic variable
    (spec'd oscillatory quadrature; exact collapse at delta = 0).
    """

    seg1: CubicPhaseState
    kappa3p: float
    kappa4p: float = 0.0
    # validity: the characteristic-function collapse across the slanted
    # frame line is exact at delta = 0 and accurate to O((K1'' sigma^2
    # delta)^2) otherwise; past ~0.5 the chirp flag fires and the quantum
    # terms are qualitative (classical shear stays exact via quantum=False).
    # At delta = 0 the whole composition is again a cubic-phase state
    # (cubic coefficients difference, quartic and blur add) and is
    # evaluated in closed form -- the only feasible route once the
    # second-segment kappa reaches the thousands and the k-integrand
    # carries ~kappa' k_max^3 radians of phase.
    delta: float = 0.0
    sigma2_sq: float = 0.0
    quantum: bool = True
    rel_tol: float = 1e-6
    max_nodes: int = 2 ** 15
    k_sigmas: float = 8.0
    fold_flagged: bool = field(default=False, init=False)
    chirp_flagged: bool = field(default=False, init=False)

    def shear2(self, x):
        x = np.asarray(x, float)
        return self.kappa3p * x * x + self.kappa4p * x ** 3

    def cubic2(self, x):
        return self.kappa3p + 3.0 * self.kappa4p * np.asarray(x, float)

    def _pullback(self, x2, p2) -> np.ndarray:
        # exact path: rotate, then shear (no p-diffusion, no odd-derivative terms)
        dlt = self.delta
        ps = np.asarray(p2, float) + self.shear2(x2)
        x1 = -np.cos(dlt) * np.asarray(x2, float) - np.sin(dlt) * ps
        p1 = np.sin(dlt) * np.asarray(x2, float) - np.cos(dlt) * ps
        return self.seg1.values(x1, p1)

    def _chi(self, x2, k) -> np.ndarray:
        """Characteristic function of the rotated segment-1 state.

        chi(x2, k) = Int ds exp(-i k s) W1(x1(s), p1(s)) along the frame-2
        column x1 = -cos(d) x2 - sin(d) s, p1 = sin(d) x2 - cos(d) s.  In the
        segment-1 characteristic representation the s-integral is a Gaussian
        centered on the stationary wavenumber Lambda(q) = 0 and is collapsed
        analytically; exact at delta = 0, with the leading slant corrections
        carried by the complex root-slope weight.
        """
        s1 = self.seg1
        dlt = self.delta
        cd, sd = np.cos(dlt), np.sin(dlt)
        x2a = np.asarray(x2, float)
        A = -cd * x2a
        k = np.asarray(k, float)
        K1 = s1.shear(A)
        c3A = s1.cubic_coeff(A)
        var = s1.x_var
        sig = np.sqrt(var)

        if sd == 0.0:
            q = -k / cd
            phase = c3A * q ** 3 / 3.0 + K1 * q
            logamp = _log_gaussian(A, var) - 0.5 * s1.c2 * q * q
            return np.exp(logamp + 1j * phase) / abs(cd)

        # collapse error grows ~ (K1'' sigma^2 delta)^2: flag when the slant
        # samples the chirped profile beyond the Gaussian-collapse regime
        K1pp_max = float(np.max(np.abs(2.0 * s1.kappa3 + 6.0 * s1.kappa4 * A)))
        if K1pp_max * var * abs(sd) > 0.5:
            self.chirp_flagged = True

        K1p = 2.0 * s1.kappa3 * A + 3.0 * s1.kappa4 * A * A
        q = -k / cd
        for _ in range(4):
            lam = -k - cd * q - sd * (K1p * q + s1.kappa4 * q ** 3)
            dlam = -cd - sd * (K1p + 3.0 * s1.kappa4 * q * q)
            q = q - lam / dlam
        dlam = -cd - sd * (K1p + 3.0 * s1.kappa4 * q * q)

        K1pp = 2.0 * s1.kappa3 + 6.0 * s1.kappa4 * A
        floor = np.abs(sd) * np.sqrt(0.5 * np.abs(K1pp * q)
                                     + 3.0 * np.abs(s1.kappa4) * q * q) + 1e-300
        jac = np.abs(dlam)
        folded = jac < floor
        if np.any(folded):
            if np.any(np.exp(-0.5 * s1.c2 * q[folded] ** 2) > 1e-10):
                self.fold_flagged = True
            jac = np.maximum(jac, floor)

        # Phi0(q) embeds the c2 damping as an imaginary quadratic; the
        # Gaussian collapse weight exp(-(w T)^2/2) carries the residual
        # amplitude (A/sigma at delta->0) plus the leading slant corrections.
        # w T = A/sigma + w * Phi0'(q*) stays finite as sd -> 0.
        phase0 = c3A * q ** 3 / 3.0 + (K1 + sd * x2a) * q
        dphase0 = c3A * q * q + (K1 + sd * x2a) + 1j * s1.c2 * q
        wq = sd / (sig * dlam)  # signed; only even powers used
        wT = A / sig + wq * dphase0
        log_c = -0.5 * s1.c2 * q * q - 0.5 * wT * wT
        amp = 1.0 / (sig * np.sqrt(_TWO_PI) * jac)
        return amp * np.exp(log_c + 1j * phase0)

    def _delta0_equivalent(self) -> CubicPhaseState:
        """Closed form at delta = 0: the composition is again a cubic-phase
        state.

        With the frames anti-aligned the segment-1 characteristic enters the
        k-integral mirrored (q = -k at A = -x2), so the cubic coefficients
        difference while the quartic ones and the Gaussian blurs add:

            kappa3_eff = kappa3' - kappa3,   kappa4_eff = kappa4' + kappa4,
            sigma_eff^2 = sigma_b^2 + sigma2^2.

        This bypasses the oscillatory quadrature entirely, which matters when
        kappa3' is large enough that the integrand winds ~kappa3' kmax^3
        radians per column.
        """
        s1 = self.seg1
        return CubicPhaseState(self.kappa3p - s1.kappa3,
                               self.kappa4p + s1.kappa4,
                               s1.sigma_b_sq + self.sigma2_sq, s1.nbar)

    def _column(self, x2: float, p2: np.ndarray, n_nodes: int) -> np.ndarray:
        kmax = self.k_sigmas / np.sqrt(self.seg1.c2)
        k = np.linspace(-kmax, kmax, n_nodes)
        chi = self._chi(x2, k)
        mult = np.exp(1j * (self.cubic2(x2) * k ** 3 / 3.0
                            + self.shear2(x2) * k)
                      - 0.5 * self.sigma2_sq * k * k)
        integ = chi * mult
        ph = np.exp(1j * np.outer(np.asarray(p2, float), k))
        dk = k[1] - k[0]
        # trapezoid: endpoints are Gaussian-damped to ~1e-14, plain sum is fine
        out = (ph @ integ).real * dk / _TWO_PI
        return out

    def values_grid(self, x_axis, p_axis) -> np.ndarray:
        """Values on an outer-product grid, sharing k-quadrature per column."""
        x_axis = np.asarray(x_axis, float)
        p_axis = np.asarray(p_axis, float)
        if not self.quantum or (self.kappa3p == 0.0 and self.kappa4p == 0.0
                                and self.sigma2_sq == 0.0):
            if not self.quantum and self.sigma2_sq != 0.0:
                raise ConfigError("sigma2_sq needs the quantum/diffusive path; "
                                  "quantum=False composes shear only")
            return self._pullback(x_axis[:, None], p_axis[None, :])
        if self.delta == 0.0:
            eq = self._delta0_equivalent()
            return eq.values(x_axis[:, None], p_axis[None, :])
        out = np.empty((x_axis.size, p_axis.size))
        for i, x2 in enumerate(x_axis):
            out[i] = self._refine(lambda n, xv=x2: self._column(xv, p_axis, n))
        return out

    def values(self, x2, p2) -> np.ndarray:
        """Pointwise values for arbitrary broadcastable coordinate arrays."""
        x2, p2 = np.broadcast_arrays(np.asarray(x2, float),
                                     np.asarray(p2, float))
        if not self.quantum or (self.kappa3p == 0.0 and self.kappa4p == 0.0
                                and self.sigma2_sq == 0.0):
            return self._pullback(x2, p2)
        if self.delta == 0.0:
            return self._delta0_equivalent().values(x2, p2)
        flat_x = x2.ravel()
        flat_p = p2.ravel()
        out = np.empty(flat_x.shape)
        # chunked flat evaluation; chi is per (point, k) here, so bound the
        # worst-case (chunk x max_nodes) temporaries
        chunk = max(64, int(8e6) // self.max_nodes)
        for lo in range(0, flat_x.size, chunk):
            hi = min(lo + chunk, flat_x.size)
            out[lo:hi] = self._refine(
                lambda n, a=flat_x[lo:hi], b=flat_p[lo:hi]:
                self._points(a, b, n))
        return out.reshape(x2.shape)

    def _points(self, x2: np.ndarray, p2: np.ndarray, n_nodes: int) -> np.ndarray:
        kmax = self.k_sigmas / np.sqrt(self.seg1.c2)
        k = np.linspace(-kmax, kmax, n_nodes)
        chi = self._chi(x2[:, None], k[None, :])
        mult = np.exp(1j * (self.cubic2(x2)[:, None] * k[None, :] ** 3 / 3.0
                            + self.shear2(x2)[:, None] * k[None, :])
                      - 0.5 * self.sigma2_sq * k[None, :] ** 2)
        ph = np.exp(1j * p2[:, None] * k[None, :])
        dk = k[1] - k[0]
        return (chi * mult * ph).sum(axis=1).real * dk / _TWO_PI

    def _refine(self, evaluate) -> np.ndarray:
        n = 257
        err = np.inf
        prev = evaluate(n)
        while n < self.max_nodes:
            n = 2 * n - 1
            cur = evaluate(n)
            scale = max(float(np.max(np.abs(cur))), 1e-300)
            err = float(np.max(np.abs(cur - prev))) / scale
            if err < self.rel_tol:
                return cur
            prev = cur
        context = (" (slant fold inside the window: the collapse form "
                   "breaks down here)" if self.fold_flagged else "")
        raise QuadratureAccuracy(
            f"segment-2 quadrature did not stabilize to {self.rel_tol:g} "
            f"within {self.max_nodes} nodes (last change {err:.2e})"
            + context)


def compose_segments(state1: CubicPhaseState, schedule, kappa2, *,
                     x_axis, p_axis, tau: float, sigma2_sq: float = 0.0,
                     quantum: bool = True, rel_tol: float = 1e-6,
                     max_nodes: int = 2 ** 15) -> WignerGrid:
    """Apply the second-segment map and sample on a frame-2 grid.

    `schedule` must hold exactly two segments; its delta fixes the frame
    rotation pi - delta.  `kappa2` is the accumulated second-segment
    generator {3: kappa'_3, 4: kappa'_4} at time tau.
    """
    if len(schedule.segments) != 2:
        raise ConfigError("compose_segments needs a two-segment AngleSchedule")
    k3p, k4p = _kappa_map(kappa2)
    comp = ComposedState(state1, k3p, k4p, delta=schedule.delta,
                         sigma2_sq=sigma2_sq, quantum=quantum,
                         rel_tol=rel_tol, max_nodes=max_nodes)
    vals = comp.values_grid(x_axis, p_axis)
    flags = _composition_flags(comp)
    return WignerGrid(x_axis, p_axis, vals, tau=tau, frame_tag="gaussian",
                      flags=flags)


def _composition_flags(comp: ComposedState) -> tuple:
    flags = []
    if comp.fold_flagged:
        flags.append("slant-fold-regularized")
        warnings.warn("second-segment slant develops a fold inside the "
                      "damped k-window; collapse Jacobian was regularized",
                      stacklevel=3)
    if comp.chirp_flagged:
        flags.append("slant-chirp-beyond-collapse")
        warnings.warn("slant-chirp parameter |K1''| sigma^2 |delta| exceeds "
                      "0.5; composed quantum terms are qualitative here",
                      stacklevel=3)
    return tuple(flags)


def _inv_sl2(S: np.ndarray) -> np.ndarray:
    return np.array([[S[1, 1], -S[0, 1]], [-S[1, 0], S[0, 0]]], float)


def to_lab_frame(state, S: np.ndarray, *, phi_bar: float, x_axis, p_axis,
                 tau: float, r_cl=None) -> WignerGrid:
    """Evaluate a Gaussian-frame closed form on a centroid- or lab-frame grid.

    Pure pullback: W(r) = W_g(R(phi_bar) S^-1 (r - r_cl)); no resampling.
    With r_cl omitted the grid is in centroid coordinates (relative to the
    classical trajectory), otherwise in absolute (lab) ones.
    """
    S = np.asarray(S, float)
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if abs(det - 1.0) > 1e-6:
        raise ConfigError(f"det S = {det} is not 1: not a symplectic frame")
    x_axis = np.asarray(x_axis, float)
    p_axis = np.asarray(p_axis, float)
    tag = "centroid" if r_cl is None else "lab"
    shift = np.zeros(2) if r_cl is None else np.asarray(r_cl, float)
    m = rotation(phi_bar) @ _inv_sl2(S)
    dx = x_axis[:, None] - shift[0]
    dp = p_axis[None, :] - shift[1]
    xg = m[0, 0] * dx + m[0, 1] * dp
    pg = m[1, 0] * dx + m[1, 1] * dp
    vals = state.values(xg, pg)
    flags = (_composition_flags(state) if isinstance(state, ComposedState)
             else ())
    return WignerGrid(x_axis, p_axis, vals, tau=tau, frame_tag=tag, flags=flags)


def auto_window(eta: float, cov: np.ndarray, *, nx: int = 513,
                np_: int = 513, center=(0.0, 0.0)):
    """Centroid-frame axes sized to capture the stretched state.

    x half-width max(10 eta, 50); p half-width from the covariance estimate
    (10 sigma_p with a floor of 10).
    """
    cov = np.asarray(cov, float)
    xh = max(10.0 * float(eta), 50.0)
    ph = max(10.0 * float(np.sqrt(max(cov[1, 1], 0.0))), 10.0)
    x_axis = center[0] + np.linspace(-xh, xh, nx)
    p_axis = center[1] + np.linspace(-ph, ph, np_)
    return x_axis, p_axis


# ---------------------------------------------------------------------------
# position marginals


def position_marginal_coherent(x_axis, *, S: np.ndarray, phi_bar: float,
                               kappa3: float, x_cl: float = 0.0,
                               normalize: bool = True) -> np.ndarray:
    """Closed-form position density of the coherent cubic-phase state.

    Marginalizes W(r) = W_g(R(phi_bar) S^-1 r) over momentum analytically
    (Airy product identity); valid for the n_bar = 0 initial state with the
    kappa4 term dropped, the regime of the fringe analysis.  `x_axis` is in
    lab coordinates when x_cl is given, else centroid ones.  With
    normalize=False returns the raw closed form (used by the quadrature
    cross-check); otherwise the density is renormalized on the window.
    """
    if kappa3 == 0.0:
        raise ConfigError("kappa3 = 0 has no fringe structure; marginalize "
                          "the thawed Gaussian directly")
    S = np.asarray(S, float)
    m = rotation(phi_bar) @ _inv_sl2(S)
    m_xp = m[0, 1]
    m_pp = m[1, 1]
    if abs(m_xp) < 1e-300:
        raise ConfigError("m_xp = 0: marginal direction is fringe-free "
                          "(state aligned with the grid)")
    a3 = abs(kappa3)
    xt = np.asarray(x_axis, float) - x_cl
    if kappa3 < 0.0:
        # GA(-|k3|, c2, c1) = GA(|k3|, c2, -c1): in the marginal's reduced
        # slots this is m_pp -> -m_pp together with x -> -x
        m_pp = -m_pp
        xt = -xt

    e0 = (m_xp ** 2 - 3.0 * m_pp ** 2 - 6.0 * m_xp * a3 * xt) / (
        12.0 * m_xp ** 2 * a3 * a3)
    y0 = (m_xp ** 2 - m_pp ** 2 - 4.0 * m_xp * a3 * xt) / (
        4.0 * m_xp ** 2 * a3 ** (4.0 / 3.0))
    mu = m_pp / (2.0 * a3 ** (4.0 / 3.0) * abs(m_xp))
    z = 2.0 ** (-2.0 / 3.0) * (y0 + 1j * mu)
    mant, scale = airy_ai_parts(z)
    log_density = (e0 + 2.0 * scale.real
                   + np.log(np.maximum(np.abs(mant) ** 2, 1e-300))
                   + np.log(2.0 ** (1.0 / 6.0) * np.sqrt(np.pi)
                            / (abs(m_xp) * a3 ** (2.0 / 3.0))))
    if not normalize:
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(log_density)
    log_density -= log_density.max()
    dens = np.exp(log_density)
    mass = np.trapezoid(dens, np.asarray(x_axis, float))
    if mass <= 0.0:
        raise WindowError("marginal window has no support")
    return dens / mass


def position_marginal_decohered(x_axis, density, C_b_xx: float) -> np.ndarray:
    """Gaussian blur of a position density by the xx blurring variance.

    Unit-mass discrete kernel on the grid step, so normalization is
    preserved to rounding; sub-step blur returns the input unchanged.
    """
    if C_b_xx < 0.0:
        raise ConfigError(f"C_b_xx = {C_b_xx} must be >= 0")
    x_axis = np.asarray(x_axis, float)
    density = np.asarray(density, float)
    dx = x_axis[1] - x_axis[0]
    sigma = np.sqrt(C_b_xx)
    if sigma < 0.05 * dx:
        return density.copy()
    half = int(np.ceil(6.0 * sigma / dx))
    s = np.arange(-half, half + 1) * dx
    kern = np.exp(-s * s / (2.0 * C_b_xx))
    kern /= kern.sum()
    return np.convolve(density, kern, mode="same")


def analytic_wigner(model, rec, schedule, tau: float, *, nbar: float = 0.0,
                    sigma_b_sq: float = 0.0, sigma2_sq: float = 0.0,
                    include_kappa4: bool = True, quantum: bool = True,
                    lab: bool = False, x_axis=None, p_axis=None,
                    nx: int = 513, np_: int = 513, rel_tol: float = 1e-6,
                    max_nodes: int = 2 ** 15) -> WignerGrid:
    """Assemble the closed-form state at time tau and sample it on a grid.

    Builds the accumulated generators from the frame record, forms the
    segment-1 closed form (composing the second segment past the angle
    switch), and pulls it back to centroid coordinates (``lab=True`` shifts
    by the classical trajectory instead).  ``sigma_b_sq`` / ``sigma2_sq``
    are the blur variances accumulated during segments 1 and 2.  With no
    axes given the window is sized from the expansion and the approximate
    covariance at tau.
    """
    from .analytic import approx_covariance, composed_moments
    from .frames import kappa_between

    orders = (3, 4) if include_kappa4 else (3,)
    seg = int(schedule.segment_index(tau))
    phi_bar = float(schedule.phi_bar_at(tau))
    idx = rec.index_of(tau)
    S = rec.S[idx]
    eta = float(rec.eta[idx])

    if seg == 0:
        kap = kappa_between(model, rec, 0.0, tau, orders=orders)
        state = CubicPhaseState(float(kap[3]), float(kap.get(4, 0.0)),
                                sigma_b_sq, nbar)
        if x_axis is None or p_axis is None:
            cov = approx_covariance(
                S, kap, phi_bar, nbar=nbar,
                Sigma_b=blurring_matrix(sigma_b_sq, S, phi_bar))
    else:
        switch = schedule.segments[0][1]
        k1 = kappa_between(model, rec, 0.0, switch, orders=orders)
        k2 = kappa_between(model, rec, switch, tau, orders=orders)
        state = ComposedState(
            CubicPhaseState(float(k1[3]), float(k1.get(4, 0.0)),
                            sigma_b_sq, nbar),
            float(k2[3]), float(k2.get(4, 0.0)), delta=schedule.delta,
            sigma2_sq=sigma2_sq, quantum=quantum, rel_tol=rel_tol,
            max_nodes=max_nodes)
        if x_axis is None or p_axis is None:
            _, cg = composed_moments(k1, k2, schedule.delta, nbar=nbar)
            tr = S @ rotation(phi_bar).T
            cov = (tr @ cg @ tr.T
                   + blurring_matrix(sigma_b_sq + sigma2_sq, S, phi_bar))

    if x_axis is None or p_axis is None:
        x_axis, p_axis = auto_window(eta, cov, nx=nx, np_=np_)
    r_cl = (float(rec.x_c[idx]), float(rec.p_c[idx])) if lab else None
    return to_lab_frame(state, S, phi_bar=phi_bar, x_axis=x_axis,
                        p_axis=p_axis, tau=tau, r_cl=r_cl)


def fringe_maxima(x_axis, density, n: int = 2) -> np.ndarray:
    """Positions of the first n interference maxima, outermost first.

    "Outermost" is the end holding the tallest (principal Airy) peak; the
    returned positions walk inward from it.
    """
    x_axis = np.asarray(x_axis, float)
    density = np.asarray(density, float)
    inner = (density[1:-1] > density[:-2]) & (density[1:-1] >= density[2:])
    idx = np.nonzero(inner)[0] + 1
    if idx.size == 0:
        raise WindowError("no interior maxima on the window")
    principal = idx[np.argmax(density[idx])]
    outward = x_axis[principal] >= np.median(x_axis[idx])
    order = np.argsort(x_axis[idx])
    if outward:
        order = order[::-1]
    return x_axis[idx[order][:n]]
