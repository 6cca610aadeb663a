"""Split-operator oracle: grid Schrodinger evolution and Wigner extraction.

Numerically exact companion to the analytic layer.  The wavefunction
lives on a uniform x grid and evolves under

    i hbar_eff dpsi/dtau = [ (omega_t/omega) p^2/2 + (omega/omega_t) U(x) ] psi,

with hbar_eff = 2 ([x, p] = 2i), so p acts as -2i d/dx and a plane wave
exp(i k x) carries momentum p = 2k.  Time stepping is Strang splitting
(half kinetic, full potential, half kinetic); adjacent half kinetic
factors are merged, so each step costs one FFT round trip.

Open-system dynamics are realized by stochastic unraveling: every step
draws a frozen potential-noise sample and the ensemble average over
trajectories reproduces the master-equation channels.  The per-step
phase applied in the potential factor is

    exp[-i (a2 U(x) + a1 U'(x) + g x)],

with independent zero-mean Gaussians of variance

    Var(a1) = (pi/2) wr^3 S1 dtau      (trap-shape noise),
    Var(a2) = (pi/2) wr^3 S2 dtau      (trap-force noise),
    Var(g)  = gamma_loc dtau / wr      (position localization),

where wr = omega/omega_t.  A phase exp[-i theta(x)] kicks the momentum
by -2 theta'(x) under hbar_eff = 2, so the localization channel yields
momentum diffusion d C_pp/dtau = 4 gamma_loc / wr, matching the
dissipator coefficient c_112 = 2 gamma_loc/wr of the rate-table module
(the harmonic-case growth test fixes this normalization end to end).

The Wigner transform is evaluated per position as an FFT over the
separation variable y sampled at multiples of 2 dx.  With hbar_eff = 2
the kernel consistent with unit coherent-state covariance (Gaussian
peak 1/(2 pi)) is

    W(x, p) = (1/4pi) int dy e^{-i p y / 2} psi(x + y/2) psi*(x - y/2),

so the returned momentum axis lives on transform-native bins with
spacing 2 pi/(N dx) and extent +-pi/dx.  Summed over all native bins
the transform reproduces |psi(x)|^2 exactly; that identity is checked
at every evaluated position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import fft as sfft

from .errors import ConfigError, GridOverflow, StepAccuracy, WindowError, QuadratureAccuracy
from .potentials import eval_derivative
from .wigner import WignerGrid

__all__ = [
    "WaveFunction", "NoiseSpec", "EnsembleResult", "coherent_state",
    "grid_for_support", "split_operator_evolve", "moments",
    "wigner_transform", "ensemble_average",
]

NORM_DRIFT_TOL = 1e-8        # per step, Riemann norm
EDGE_TAIL_TOL = 1e-10        # probability mass allowed in the outer 5%
EDGE_FRACTION = 0.05
ALIAS_MASS_TOL = 1e-10       # mass defining the observed momentum support


def _check_axis(x_axis) -> tuple[np.ndarray, float]:
    x = np.asarray(x_axis, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise ConfigError("x_axis must be 1-d with at least 8 points")
    steps = np.diff(x)
    dx = steps[0]
    if dx <= 0 or not np.allclose(steps, dx, rtol=1e-9, atol=0.0):
        raise ConfigError("x_axis must be uniformly increasing")
    return x, float(dx)


@dataclass
class WaveFunction:
    """State on a uniform position grid; norm is the Riemann sum of |psi|^2."""

    x_axis: np.ndarray
    psi: np.ndarray
    tau: float = 0.0

    def __post_init__(self) -> None:
        self.x_axis, self._dx = _check_axis(self.x_axis)
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != self.x_axis.shape:
            raise ConfigError("psi and x_axis must have matching shapes")

    @property
    def dx(self) -> float:
        return self._dx

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self._dx)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2


def coherent_state(x_axis, x0: float = 0.0, p0: float = 0.0) -> WaveFunction:
    """Minimum-uncertainty Gaussian with unit x and p variance at (x0, p0)."""
    x, dx = _check_axis(x_axis)
    psi = np.exp(-0.25 * (x - x0) ** 2 + 0.5j * p0 * (x - x0))
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    return WaveFunction(x, psi)


def grid_for_support(x_lo: float, x_hi: float, dx_max: float,
                     pad: float = 1.3) -> tuple[float, float, int]:
    """Grid covering pad * [x_lo, x_hi] with the next power-of-two count."""
    if not x_hi > x_lo:
        raise ConfigError("empty support interval")
    if not dx_max > 0:
        raise ConfigError("dx_max must be positive")
    mid = 0.5 * (x_lo + x_hi)
    half = 0.5 * pad * (x_hi - x_lo)
    n = 1 << max(3, math.ceil(math.log2(2.0 * half / dx_max)))
    return mid - half, mid + half, n


@dataclass(frozen=True)
class NoiseSpec:
    """Stochastic-channel amplitudes; all rates in trap-frequency units."""

    S1: float = 0.0
    S2: float = 0.0
    gamma_loc: float = 0.0
    seed: object = None        # int, SeedSequence, or Generator

    def active(self) -> bool:
        return self.S1 != 0.0 or self.S2 != 0.0 or self.gamma_loc != 0.0


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _edge_mass(density: np.ndarray, dx: float) -> float:
    n_edge = max(1, int(EDGE_FRACTION * density.size))
    return float((np.sum(density[:n_edge]) + np.sum(density[-n_edge:])) * dx)


def _momentum_support(psi_k: np.ndarray, p_grid: np.ndarray) -> float:
    """Largest |p| that still carries more than ALIAS_MASS_TOL of the mass."""
    w = np.abs(psi_k) ** 2
    total = float(np.sum(w))
    if total <= 0.0:
        return 0.0
    order = np.argsort(np.abs(p_grid))
    cum = np.cumsum(w[order])
    keep = cum <= (1.0 - ALIAS_MASS_TOL) * total
    if not np.any(keep):
        return 0.0
    return float(np.abs(p_grid)[order][keep][-1])


def split_operator_evolve(model, freq_ratio: float, psi0: WaveFunction,
                          dtau: float, n_steps: int,
                          noise: NoiseSpec | None = None, *,
                          snapshot_steps: Sequence[int] | None = None,
                          guard_every: int = 16) -> list[WaveFunction]:
    """Propagate psi0 for n_steps of size dtau; return requested snapshots.

    Guards: the Riemann norm is monitored every step (drift beyond
    NORM_DRIFT_TOL per step raises StepAccuracy); every ``guard_every``
    steps the outer-5% tail mass (GridOverflow beyond EDGE_TAIL_TOL) and
    the momentum support (GridOverflow once 2 x support exceeds pi/dx)
    are checked.  Callers size the grid for the classical excursion plus
    the quantum spread; the guards only make violations loud.
    """
    if not freq_ratio > 0.0:
        raise ConfigError(f"freq_ratio must be positive, got {freq_ratio}")
    if not dtau > 0.0:
        raise ConfigError(f"dtau must be positive, got {dtau}")
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if abs(psi0.norm() - 1.0) > 1e-6:
        raise ConfigError("psi0 must be normalized (Riemann norm within 1e-6)")

    if snapshot_steps is None:
        snapshot_steps = (n_steps,)
    wanted = sorted(set(int(s) for s in snapshot_steps))
    if wanted and (wanted[0] < 0 or wanted[-1] > n_steps):
        raise ConfigError("snapshot_steps must lie in [0, n_steps]")

    x = psi0.x_axis
    n = x.size
    dx = psi0.dx
    wr = float(freq_ratio)
    k_grid = 2.0 * math.pi * sfft.fftfreq(n, d=dx)
    p_grid = 2.0 * k_grid
    p_alias_limit = math.pi / dx

    u0 = eval_derivative(model, 0, x)
    u1 = eval_derivative(model, 1, x)
    kin_half = np.exp(-0.5j * (1.0 / wr) * k_grid ** 2 * dtau)
    pot_base = np.exp(-0.5j * wr * u0 * dtau)

    rng = None
    sig_a1 = sig_a2 = sig_g = 0.0
    if noise is not None and noise.active():
        rng = _as_generator(noise.seed)
        sig_a1 = math.sqrt(0.5 * math.pi * wr ** 3 * noise.S1 * dtau)
        sig_a2 = math.sqrt(0.5 * math.pi * wr ** 3 * noise.S2 * dtau)
        sig_g = math.sqrt(noise.gamma_loc * dtau / wr)

    snaps: list[WaveFunction] = []
    tau0 = psi0.tau

    def record(step: int, psi_x: np.ndarray) -> None:
        snaps.append(WaveFunction(x, psi_x.copy(), tau=tau0 + step * dtau))

    def run_guards(step: int, psi_x: np.ndarray, psi_k: np.ndarray) -> None:
        mass = _edge_mass(np.abs(psi_x) ** 2, dx)
        if mass > EDGE_TAIL_TOL:
            raise GridOverflow(
                f"tail mass {mass:.3e} in the outer {EDGE_FRACTION:.0%} of the"
                f" grid at step {step} (tau={tau0 + step * dtau:.6g})")
        support = _momentum_support(psi_k, p_grid)
        if 2.0 * support > p_alias_limit:
            raise GridOverflow(
                f"momentum support {support:.3g} exceeds half the grid limit"
                f" pi/dx = {p_alias_limit:.3g} at step {step}")

    if 0 in wanted:
        record(0, psi0.psi)

    norm_ref = psi0.norm()
    # merged scheme: keep the state in k space between potential kicks
    psi_k = sfft.fft(psi0.psi) * kin_half
    for step in range(1, n_steps + 1):
        psi_x = sfft.ifft(psi_k)
        if rng is None:
            psi_x *= pot_base
        else:
            a1 = rng.normal(0.0, sig_a1) if sig_a1 else 0.0
            a2 = rng.normal(0.0, sig_a2) if sig_a2 else 0.0
            g = rng.normal(0.0, sig_g) if sig_g else 0.0
            psi_x *= pot_base * np.exp(-1j * (a2 * u0 + a1 * u1 + g * x))
        psi_k = sfft.fft(psi_x) * kin_half
        # now exactly at tau0 + step*dtau, represented in k space

        norm_now = float(np.vdot(psi_k, psi_k).real) * dx / n
        if abs(norm_now - norm_ref) > NORM_DRIFT_TOL:
            raise StepAccuracy(
                f"norm drifted by {abs(norm_now - norm_ref):.3e} at step"
                f" {step} (tolerance {NORM_DRIFT_TOL:g} per step)")
        norm_ref = norm_now

        need_x = (step in wanted) or (step % guard_every == 0) or step == n_steps
        if need_x:
            psi_now = sfft.ifft(psi_k)
            run_guards(step, psi_now, psi_k)
            if step in wanted:
                record(step, psi_now)
        if step < n_steps:
            # opening half-kinetic of the next step
            psi_k *= kin_half

    return snaps


def moments(wf: WaveFunction) -> tuple[np.ndarray, np.ndarray]:
    """First moments and symmetrized covariance of (x, p) for one state."""
    x = wf.x_axis
    dx = wf.dx
    dens = wf.density()
    w = float(np.sum(dens) * dx)
    mx = float(np.sum(x * dens) * dx) / w
    mxx = float(np.sum(x * x * dens) * dx) / w

    phi = sfft.fft(wf.psi)
    # p = 2k with k = 2*pi*f the plane-wave wavenumber
    p_grid = 2.0 * 2.0 * math.pi * sfft.fftfreq(x.size, d=dx)
    wk = np.abs(phi) ** 2
    wk_sum = float(np.sum(wk))
    mp = float(np.sum(p_grid * wk)) / wk_sum
    mpp = float(np.sum(p_grid ** 2 * wk)) / wk_sum

    p_psi = sfft.ifft(p_grid * phi)
    mxp = float(np.sum((np.conj(wf.psi) * x * p_psi).real) * dx) / w

    mean = np.array([mx, mp])
    cov = np.array([[mxx - mx * mx, mxp - mx * mp],
                    [mxp - mx * mp, mpp - mp * mp]])
    return mean, cov


def wigner_transform(psi: WaveFunction, window, np_: int, *,
                     nx: int = 257, center: tuple[float, float] | None = None
                     ) -> WignerGrid:
    """Windowed Wigner function of a grid state.

    ``window`` is (x_lo, x_hi, p_lo, p_hi); with ``center`` given the
    extents are relative to it and the returned axes are centered on it
    (frame tag "centroid"), otherwise absolute ("lab").  Axes snap to
    grid-native positions and transform-native momentum bins, so the
    realized extents can differ from the request by one stride.
    """
    x_lo, x_hi, p_lo, p_hi = (float(v) for v in window)
    if not (x_hi > x_lo and p_hi > p_lo):
        raise WindowError("window extents must be increasing")
    x0, p0 = (0.0, 0.0) if center is None else (float(center[0]), float(center[1]))
    x_lo += x0
    x_hi += x0
    p_lo += p0
    p_hi += p0

    x = psi.x_axis
    dx = psi.dx
    n = x.size
    if x_lo < x[0] or x_hi > x[-1]:
        raise WindowError(
            f"x window [{x_lo:.6g}, {x_hi:.6g}] exceeds the grid"
            f" [{x[0]:.6g}, {x[-1]:.6g}]")
    dp = 2.0 * math.pi / (n * dx)
    p_native = math.pi / dx
    if p_lo < -p_native or p_hi > p_native:
        raise WindowError(
            f"p window [{p_lo:.6g}, {p_hi:.6g}] exceeds the transform range"
            f" +-{p_native:.6g}")

    ii = np.nonzero((x >= x_lo) & (x <= x_hi))[0]
    if ii.size < 2:
        raise WindowError("x window covers fewer than two grid points")
    sx = max(1, -(-ii.size // max(nx, 2)))
    ix_sel = ii[::sx]

    j_lo = math.ceil(p_lo / dp)
    j_hi = math.floor(p_hi / dp)
    count = min(int(np_), j_hi - j_lo + 1)
    if count < 2:
        raise WindowError("p window covers fewer than two transform bins")
    sp = max(1, (j_hi - j_lo) // max(count - 1, 1))
    j_sel = j_lo + sp * np.arange(count)
    if j_sel[-1] >= n // 2 or j_sel[0] < -(n // 2):
        raise WindowError("p window exceeds the transform bin range")

    half = n // 2
    pad = np.concatenate([np.zeros(half, complex), psi.psi,
                          np.zeros(half, complex)])
    dens = psi.density()
    values = np.empty((ix_sel.size, j_sel.size))
    # bin j of the shifted FFT corresponds to p = j*dp
    pick = j_sel + half
    for row, ix in enumerate(ix_sel):
        ic = ix + half
        plus = pad[ic - half:ic + half]
        minus = pad[ic + half:ic - half:-1]
        corr = plus * np.conj(minus)
        spec = sfft.fftshift(sfft.fft(sfft.ifftshift(corr)))
        w_full = spec.real * (dx / (2.0 * math.pi))
        marg = float(np.sum(w_full)) * dp
        if abs(marg - dens[ix]) > 1e-8 * max(1.0, float(dens.max())):
            raise QuadratureAccuracy(
                f"Wigner marginal identity violated at x={x[ix]:.6g}:"
                f" {marg:.3e} vs |psi|^2 = {dens[ix]:.3e}")
        values[row] = w_full[pick]

    return WignerGrid(x_axis=x[ix_sel] - x0, p_axis=j_sel * dp - p0,
                      values=values, tau=psi.tau,
                      frame_tag="lab" if center is None else "centroid")


@dataclass
class EnsembleResult:
    """Trajectory-averaged moments and densities with sub-batch errors."""

    n_traj: int
    tau: np.ndarray                 # (n_snap,)
    x_axis: np.ndarray              # (nx,)
    mean: np.ndarray                # (n_snap, 2)
    cov: np.ndarray                 # (n_snap, 2, 2)
    stderr: np.ndarray              # (n_snap, 5): mean_x, mean_p, cxx, cxp, cpp
    mean_density: np.ndarray        # (n_snap, nx)
    n_batches: int = 0


_REQUIRED_KEYS = ("x_s", "freq_ratio", "x_min", "x_max", "n_points",
                  "dtau", "n_steps")


def _get_float(config: Mapping, key: str) -> float:
    try:
        return float(config[key])
    except KeyError:
        raise ConfigError(f"config['{key}'] is required") from None
    except (TypeError, ValueError):
        raise ConfigError(f"config['{key}'] must be a number") from None


def ensemble_average(config: Mapping, n_traj: int, seed) -> EnsembleResult:
    """Average ``n_traj`` stochastic trajectories of a double-well scenario.

    ``config`` supplies the potential (``potential`` of "double_well"
    with separation ``d``, or "harmonic"), the launch point ``x_s``
    (optional ``p0``), ``freq_ratio`` = omega/omega_t, the grid
    (``x_min``, ``x_max``, ``n_points``), stepping (``dtau``,
    ``n_steps``, optional ``snapshot_steps``), noise amplitudes
    (``S1``, ``S2``, ``gamma_loc``) and an optional thermal occupation
    ``nbar`` realized as Gaussian displacement sampling.  Trajectory
    seeds are spawned from the master seed, and reductions run in fixed
    trajectory order, so results are reproducible bit for bit.
    """
    from .potentials import DoubleWell, PolynomialPotential

    if n_traj < 2:
        raise ConfigError(f"n_traj must be >= 2, got {n_traj}")
    for key in _REQUIRED_KEYS:
        if key not in config:
            raise ConfigError(f"config['{key}'] is required")
    kind = str(config.get("potential", "double_well"))
    if kind == "double_well":
        model = DoubleWell(_get_float(config, "d"))
    elif kind == "harmonic":
        model = PolynomialPotential((0.0, 0.0, 0.5))
    else:
        raise ConfigError(
            f"config['potential'] must be 'double_well' or 'harmonic',"
            f" got {kind!r}")
    x_s = _get_float(config, "x_s")
    p0 = float(config.get("p0", 0.0))
    wr = _get_float(config, "freq_ratio")
    x_min = _get_float(config, "x_min")
    x_max = _get_float(config, "x_max")
    n_points = int(config["n_points"])
    dtau = _get_float(config, "dtau")
    n_steps = int(config["n_steps"])
    nbar = float(config.get("nbar", 0.0))
    if nbar < 0.0:
        raise ConfigError(f"config['nbar'] must be >= 0, got {nbar}")
    if not x_max > x_min:
        raise ConfigError("config['x_max'] must exceed config['x_min']")
    if n_points < 8:
        raise ConfigError("config['n_points'] must be at least 8")
    snap_steps = tuple(int(s) for s in config.get("snapshot_steps", (n_steps,)))

    x_axis = x_min + (x_max - x_min) / n_points * np.arange(n_points)
    base = NoiseSpec(S1=float(config.get("S1", 0.0)),
                     S2=float(config.get("S2", 0.0)),
                     gamma_loc=float(config.get("gamma_loc", 0.0)))

    seq = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    children = seq.spawn(n_traj)

    n_snap = len(snap_steps)
    nb = min(8, n_traj)
    batch_of = [i * nb // n_traj for i in range(n_traj)]
    counts = np.zeros(nb, dtype=int)
    raw_sum = np.zeros((nb, n_snap, 5))
    dens_sum = np.zeros((nb, n_snap, n_points))

    for i in range(n_traj):
        rng = np.random.default_rng(children[i])
        dx0 = dp0 = 0.0
        if nbar > 0.0:
            dx0, dp0 = rng.normal(0.0, math.sqrt(2.0 * nbar), size=2)
        psi0 = coherent_state(x_axis, x_s + dx0, p0 + dp0)
        spec = NoiseSpec(base.S1, base.S2, base.gamma_loc, seed=rng)
        snaps = split_operator_evolve(model, wr, psi0, dtau, n_steps,
                                      spec if spec.active() else None,
                                      snapshot_steps=snap_steps)
        b = batch_of[i]
        counts[b] += 1
        for s, wf in enumerate(snaps):
            mean, cov = moments(wf)
            raw_sum[b, s] += (mean[0], mean[1],
                              cov[0, 0] + mean[0] ** 2,
                              cov[0, 1] + mean[0] * mean[1],
                              cov[1, 1] + mean[1] ** 2)
            dens_sum[b, s] += wf.density()

    raw_tot = raw_sum.sum(axis=0) / n_traj
    mean = raw_tot[:, :2].copy()
    cxx = raw_tot[:, 2] - mean[:, 0] ** 2
    cxp = raw_tot[:, 3] - mean[:, 0] * mean[:, 1]
    cpp = raw_tot[:, 4] - mean[:, 1] ** 2
    cov = np.empty((n_snap, 2, 2))
    cov[:, 0, 0] = cxx
    cov[:, 0, 1] = cov[:, 1, 0] = cxp
    cov[:, 1, 1] = cpp

    batch_stats = np.empty((nb, n_snap, 5))
    for b in range(nb):
        rb = raw_sum[b] / counts[b]
        batch_stats[b, :, 0] = rb[:, 0]
        batch_stats[b, :, 1] = rb[:, 1]
        batch_stats[b, :, 2] = rb[:, 2] - rb[:, 0] ** 2
        batch_stats[b, :, 3] = rb[:, 3] - rb[:, 0] * rb[:, 1]
        batch_stats[b, :, 4] = rb[:, 4] - rb[:, 1] ** 2
    stderr = np.std(batch_stats, axis=0, ddof=1) / math.sqrt(nb)

    tau = np.array([s * dtau for s in snap_steps])
    mean_density = dens_sum.sum(axis=0) / n_traj
    return EnsembleResult(n_traj=n_traj, tau=tau, x_axis=x_axis, mean=mean,
                          cov=cov, stderr=stderr, mean_density=mean_density,
                          n_batches=nb)
