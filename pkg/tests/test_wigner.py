"""Closed-form Wigner machinery: limits, cross-checks, composition, marginals."""
import numpy as np
import pytest

from widewell.decoherence import rotation
from widewell.errors import ConfigError, QuadratureAccuracy, WindowError
from widewell.special import gauss_airy_integral
from widewell.wigner import (
    ComposedState,
    CubicPhaseState,
    WignerGrid,
    airy_pure_wigner,
    analytic_wigner_segment1,
    auto_window,
    compose_segments,
    fringe_maxima,
    position_marginal_coherent,
    position_marginal_decohered,
    to_lab_frame,
)
from widewell.analytic import AngleSchedule


def _sl2(a, b, c):
    """2x2 with det exactly 1 via the last entry."""
    S = np.array([[a, b], [c, (1.0 + b * c) / a]])
    return S


def _marginal_by_quadrature(xs, S, phi_bar, kappa3, p_half=60.0, n=4001):
    m = rotation(phi_bar) @ np.array([[S[1, 1], -S[0, 1]],
                                      [-S[1, 0], S[0, 0]]])
    pq = np.linspace(-p_half, p_half, n)
    st = CubicPhaseState(kappa3)
    out = np.empty(len(xs))
    for i, xv in enumerate(xs):
        out[i] = np.trapezoid(
            st.values(m[0, 0] * xv + m[0, 1] * pq,
                      m[1, 0] * xv + m[1, 1] * pq), pq)
    return out


class TestWignerGrid:
    def test_norm_of_unit_gaussian(self):
        x = np.linspace(-8, 8, 161)
        g = analytic_wigner_segment1(x, x, kappa3=0.0)
        assert g.frame_tag == "gaussian"
        assert abs(g.norm() - 1.0) < 1e-9
        g.check_norm()

    def test_marginal_of_gaussian(self):
        x = np.linspace(-8, 8, 201)
        p = np.linspace(-14, 14, 351)
        g = analytic_wigner_segment1(x, p, kappa3=0.0, nbar=1.0)
        marg = g.position_marginal()
        ref = np.exp(-x * x / 6.0) / np.sqrt(6.0 * np.pi)
        assert np.max(np.abs(marg - ref)) < 1e-10

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            WignerGrid(np.linspace(0, 1, 5), np.linspace(0, 1, 4),
                       np.zeros((4, 5)))

    def test_nonuniform_axis_rejected(self):
        bad = np.array([0.0, 0.1, 0.3, 0.35])
        with pytest.raises(ConfigError):
            WignerGrid(bad, np.linspace(0, 1, 4), np.zeros((4, 4)))

    def test_unknown_frame_tag_rejected(self):
        x = np.linspace(0, 1, 4)
        with pytest.raises(ConfigError):
            WignerGrid(x, x, np.zeros((4, 4)), frame_tag="rotating")

    def test_clipped_window_fails_norm_check(self):
        x = np.linspace(-1, 1, 41)  # far too tight for a unit Gaussian
        g = analytic_wigner_segment1(x, x, kappa3=0.0)
        with pytest.raises(WindowError):
            g.check_norm()


class TestCubicPhaseState:
    def test_gaussian_limit_matches_thermal_wigner(self):
        st = CubicPhaseState(0.0, nbar=0.5)
        x = np.linspace(-4, 4, 17)
        W = st.values(x[:, None], x[None, :])
        s2 = 2.0
        ref = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * s2)) / (
            2 * np.pi * s2)
        assert np.max(np.abs(W - ref)) < 1e-14

    @pytest.mark.parametrize("k3", [0.7, -0.7, 2.5])
    def test_airy_pure_reduction(self, k3):
        st = CubicPhaseState(k3)
        x = np.linspace(-2.5, 2.5, 11)[:, None]
        p = np.linspace(-4, 4, 13)[None, :]
        a = st.values(x, p)
        b = airy_pure_wigner(x, p, k3)
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))

    def test_kappa3_sign_reflection(self):
        # W_{-k3,-k4}(x, -p) = W_{k3,k4}(x, p)
        x = np.linspace(-2, 2, 9)[:, None]
        p = np.linspace(-3, 3, 11)[None, :]
        a = CubicPhaseState(0.9, 0.15).values(x, p)
        b = CubicPhaseState(-0.9, -0.15).values(x, -p)
        assert np.max(np.abs(a - b)) < 1e-14

    def test_blur_is_momentum_convolution(self):
        # sigma_b^2 in the c2 slot == Gaussian convolution along p
        st0 = CubicPhaseState(0.6)
        stb = CubicPhaseState(0.6, sigma_b_sq=0.8)
        x = 0.4
        p = np.linspace(-30, 30, 2401)
        w0 = st0.values(np.full_like(p, x), p)
        dp = p[1] - p[0]
        kern = np.exp(-np.arange(-900, 901) ** 2 * dp * dp / 1.6)
        kern /= kern.sum()
        conv = np.convolve(w0, kern, mode="same")
        wb = stb.values(np.full_like(p, x), p)
        sel = np.abs(p) < 8
        assert np.max(np.abs(conv - wb)[sel]) < 2e-6 * np.max(wb)

    def test_airy_pure_norm_small_kappa(self):
        # adaptive window: unit norm within 1e-3 for |kappa3| <= 1
        for k3 in (0.25, 1.0, -1.0):
            st = CubicPhaseState(k3)
            pvar = 1.0 + 3.0 * k3 * k3 + 2.0 * k3 * k3  # <p^2> of the sheared state
            x = np.linspace(-8, 8, 321)
            p_half = max(10.0 * np.sqrt(pvar), 25.0)
            p = np.linspace(-p_half, p_half, 1601)
            grid = WignerGrid(x, p, st.values(x[:, None], p[None, :]))
            assert abs(grid.norm() - 1.0) < 1e-3


class TestSegmentOne:
    def test_pointwise_gaussian_dispatch_mid_grid(self):
        # c3(x) crosses zero inside the window; values stay finite and the
        # zero-crossing column equals the pure-Gaussian profile
        k3, k4 = 0.5, 0.25
        x0 = -k3 / (3 * k4)  # c3(x0) = 0
        x = np.linspace(x0 - 2, x0 + 2, 41)
        p = np.linspace(-6, 6, 81)
        g = analytic_wigner_segment1(x, p, kappa3=k3, kappa4=k4)
        assert np.all(np.isfinite(g.values))
        st = CubicPhaseState(k3, k4)
        col = st.values(np.full_like(p, x0), p)
        shift = k3 * x0 ** 2 + k4 * x0 ** 3
        ref = (np.exp(-x0 ** 2 / 2) / np.sqrt(2 * np.pi)
               * np.exp(-(p + shift) ** 2 / 2) / np.sqrt(2 * np.pi))
        assert np.max(np.abs(col - ref)) < 1e-12

    def test_norm_with_kappa4_and_blur(self):
        x = np.linspace(-9, 9, 241)
        p = np.linspace(-45, 45, 901)
        g = analytic_wigner_segment1(x, p, kappa3=0.8, kappa4=0.1,
                                     sigma_b_sq=1.2, nbar=0.3)
        assert abs(g.norm() - 1.0) < 2e-3


class TestComposition:
    def _schedule(self, delta):
        return AngleSchedule(segments=((0.0, 4.0, 1.55),
                                       (4.0, 8.0, 1.55 + np.pi - delta)),
                             delta=delta)

    def test_zero_generator_is_identity_rotation(self):
        seg1 = CubicPhaseState(0.7, 0.1, sigma_b_sq=0.4)
        comp = ComposedState(seg1, 0.0, 0.0, delta=0.0)
        x = np.linspace(-3, 3, 21)
        p = np.linspace(-5, 5, 23)
        got = comp.values_grid(x, p)
        want = seg1.values(-x[:, None], -p[None, :])
        assert np.max(np.abs(got - want)) < 1e-15

    def test_delta_zero_cancellation_closed_form(self):
        # cubic shears cancel, quartic ones add, blur accumulates
        k3, k4, k3p, k4p = 0.8, 0.12, 0.5, 0.21
        seg1 = CubicPhaseState(k3, k4, sigma_b_sq=0.3)
        sched = self._schedule(0.0)
        x = np.linspace(-3, 3, 19)
        p = np.linspace(-4, 4, 17)
        grid = compose_segments(seg1, sched, {3: k3p, 4: k4p},
                                x_axis=x, p_axis=p, tau=5.0, sigma2_sq=0.2)
        c3e = (k3p - k3) + 3.0 * (k4p + k4) * x[:, None]
        Ke = (k3p - k3) * x[:, None] ** 2 + (k4p + k4) * x[:, None] ** 3
        g = np.exp(-x[:, None] ** 2 / 2) / np.sqrt(2 * np.pi)
        ref = g * gauss_airy_integral(c3e, 1.5, p[None, :] + Ke)
        assert np.max(np.abs(grid.values - ref)) < 1e-10
        assert grid.flags == ()

    def test_pure_cubic_cancellation_gives_blurred_gaussian(self):
        # same kappa3 on both segments at delta = 0: coherent shear undone,
        # only the accumulated blur survives
        seg1 = CubicPhaseState(0.9)
        sched = self._schedule(0.0)
        x = np.linspace(-4, 4, 25)
        p = np.linspace(-5, 5, 27)
        grid = compose_segments(seg1, sched, {3: 0.9}, x_axis=x, p_axis=p,
                                tau=5.0, sigma2_sq=0.6)
        ref = (np.exp(-x[:, None] ** 2 / 2) / np.sqrt(2 * np.pi)
               * np.exp(-p[None, :] ** 2 / 3.2) / np.sqrt(3.2 * np.pi))
        assert np.max(np.abs(grid.values - ref)) < 1e-10

    def test_shear_only_preserves_position_marginal(self):
        seg1 = CubicPhaseState(0.45, 0.05, sigma_b_sq=0.25)
        sched = self._schedule(0.02)
        x = np.linspace(-4, 4, 41)
        p = np.linspace(-12, 12, 401)
        base = compose_segments(seg1, sched, {3: 0.0, 4: 0.0},
                                x_axis=x, p_axis=p, tau=5.0)
        sheared = compose_segments(seg1, sched, {3: 0.7, 4: 0.08},
                                   x_axis=x, p_axis=p, tau=5.0,
                                   quantum=False)
        m0 = base.position_marginal()
        m1 = sheared.position_marginal()
        # shear moves mass along p only; compare where the window holds both
        sel = np.abs(x) < 2.5
        assert np.max(np.abs(m0 - m1)[sel]) < 2e-4 * m0.max()

    def test_general_delta_against_line_quadrature(self):
        # brute-force chi by s-quadrature of the closed-form profile along
        # the slanted line; collapse error ~ (K1'' sigma^2 delta)^2
        k3, k4, k3p, k4p, dlt = 0.3, 0.0, 0.2, 0.0, 0.05
        seg1 = CubicPhaseState(k3, k4, sigma_b_sq=0.2)
        comp = ComposedState(seg1, k3p, k4p, delta=dlt, sigma2_sq=0.1)
        x2 = 0.7
        p2 = np.linspace(-6, 6, 25)
        got = comp.values(np.full_like(p2, x2), p2)
        ref = self._brute_column(seg1, k3p, k4p, dlt, 0.1, x2, p2)
        assert np.max(np.abs(got - ref)) < 5e-3 * np.max(np.abs(ref))
        assert not comp.chirp_flagged

    def test_small_delta_continuity(self):
        k3, k3p = 0.3, 0.2
        seg1 = CubicPhaseState(k3, sigma_b_sq=0.2)
        x = np.linspace(-2, 2, 9)
        p = np.linspace(-4, 4, 11)
        a = ComposedState(seg1, k3p, delta=0.0).values_grid(x, p)
        b = ComposedState(seg1, k3p, delta=1e-4).values_grid(x, p)
        assert np.max(np.abs(a - b)) < 1e-4 * np.max(np.abs(a))

    def test_chirp_flag_fires_out_of_regime(self):
        # strong chirp but no fold in the window: converges, warns, flags
        seg1 = CubicPhaseState(5.0)
        sched = self._schedule(0.06)
        x = np.linspace(-1, 1, 9)
        p = np.linspace(-4, 4, 9)
        with pytest.warns(UserWarning):
            grid = compose_segments(seg1, sched, {3: 3.0}, x_axis=x,
                                    p_axis=p, tau=5.0)
        assert "slant-chirp-beyond-collapse" in grid.flags

    def test_fold_inside_window_refuses_honestly(self):
        # the slant fold makes the collapse spike genuinely non-convergent
        seg1 = CubicPhaseState(5.0)
        sched = self._schedule(0.09)
        x = np.linspace(-2, 2, 9)
        p = np.linspace(-4, 4, 9)
        with pytest.raises(QuadratureAccuracy):
            compose_segments(seg1, sched, {3: 3.0}, x_axis=x, p_axis=p,
                             tau=5.0)

    def test_needs_two_segments(self):
        one = AngleSchedule(segments=((0.0, 4.0, 1.55),))
        with pytest.raises(ConfigError):
            compose_segments(CubicPhaseState(0.5), one, {3: 0.1},
                             x_axis=np.linspace(-1, 1, 5),
                             p_axis=np.linspace(-1, 1, 5), tau=5.0)

    def test_rejects_unknown_orders(self):
        sched = self._schedule(0.0)
        with pytest.raises(ConfigError):
            compose_segments(CubicPhaseState(0.5), sched, {3: 0.1, 5: 0.2},
                             x_axis=np.linspace(-1, 1, 5),
                             p_axis=np.linspace(-1, 1, 5), tau=5.0)

    @staticmethod
    def _brute_column(seg1, k3p, k4p, delta, sig2sq, x2, p2,
                      s_pad=40.0, nk=4097):
        cd, sd = np.cos(delta), np.sin(delta)
        kmax = 8.0 / np.sqrt(seg1.c2)
        k = np.linspace(-kmax, kmax, nk)
        s0 = (sd * x2 + seg1.shear(-cd * x2)) / cd
        s_half = abs(seg1.shear(-cd * x2)) + s_pad
        ns = int(max(8192, 16 * s_half * kmax / np.pi))
        s = np.linspace(s0 - s_half, s0 + s_half, ns)
        w1 = seg1.values(-cd * x2 - sd * s, sd * x2 - cd * s)
        chi = np.exp(-1j * np.outer(k, s)) @ w1 * (s[1] - s[0])
        mult = np.exp(1j * ((k3p + 3 * k4p * x2) * k ** 3 / 3.0
                            + (k3p * x2 ** 2 + k4p * x2 ** 3) * k)
                      - 0.5 * sig2sq * k * k)
        return (np.exp(1j * np.outer(p2, k)) @ (chi * mult)).real \
            * (k[1] - k[0]) / (2 * np.pi)


class TestLabFrame:
    def test_identity_transform_is_identity(self):
        st = CubicPhaseState(0.6, 0.1)
        x = np.linspace(-3, 3, 21)
        p = np.linspace(-4, 4, 19)
        g = to_lab_frame(st, np.eye(2), phi_bar=0.0, x_axis=x, p_axis=p,
                         tau=1.0)
        assert g.frame_tag == "centroid"
        assert np.max(np.abs(g.values
                             - st.values(x[:, None], p[None, :]))) < 1e-15

    def test_rotation_only_pullback(self):
        st = CubicPhaseState(0.6)
        phi = 0.8
        x = np.linspace(-3, 3, 15)
        p = np.linspace(-3, 3, 17)
        g = to_lab_frame(st, np.eye(2), phi_bar=phi, x_axis=x, p_axis=p,
                         tau=1.0)
        R = rotation(phi)
        xg = R[0, 0] * x[:, None] + R[0, 1] * p[None, :]
        pg = R[1, 0] * x[:, None] + R[1, 1] * p[None, :]
        assert np.max(np.abs(g.values - st.values(xg, pg))) < 1e-15

    def test_norm_preserved_under_sl2_pullback(self):
        st = CubicPhaseState(0.5, sigma_b_sq=0.3)
        S = _sl2(1.4, 0.9, 0.35)
        x = np.linspace(-25, 25, 401)
        p = np.linspace(-25, 25, 401)
        g = to_lab_frame(st, S, phi_bar=0.7, x_axis=x, p_axis=p, tau=1.0)
        assert abs(g.norm() - 1.0) < 2e-3

    def test_lab_shift_tags_and_moves(self):
        st = CubicPhaseState(0.0)
        x = np.linspace(2, 8, 61)
        p = np.linspace(-4, 4, 41)
        g = to_lab_frame(st, np.eye(2), phi_bar=0.0, x_axis=x, p_axis=p,
                         tau=1.0, r_cl=(5.0, 0.0))
        assert g.frame_tag == "lab"
        i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
        assert abs(x[i] - 5.0) < 0.15 and abs(p[j]) < 0.25

    def test_non_symplectic_rejected(self):
        with pytest.raises(ConfigError):
            to_lab_frame(CubicPhaseState(0.1), 2.0 * np.eye(2), phi_bar=0.0,
                         x_axis=np.linspace(-1, 1, 5),
                         p_axis=np.linspace(-1, 1, 5), tau=0.0)


class TestAutoWindow:
    def test_floors_and_scaling(self):
        x, p = auto_window(3.0, np.diag([1.0, 0.5]), nx=11, np_=13)
        assert x[-1] == pytest.approx(50.0)   # floor dominates small eta
        assert p[-1] == pytest.approx(10.0)
        x, p = auto_window(700.0, np.diag([1.0, 25.0]), nx=11, np_=13)
        assert x[-1] == pytest.approx(7000.0)
        assert p[-1] == pytest.approx(50.0)
        assert x.size == 11 and p.size == 13


class TestPositionMarginals:
    @pytest.mark.parametrize("k3", [0.6, -0.6])
    def test_closed_form_vs_2d_quadrature(self, k3):
        S = _sl2(1.3, 0.8, 0.45)
        phi = 0.9
        xs = np.linspace(-6, 6, 41)
        P = position_marginal_coherent(xs, S=S, phi_bar=phi, kappa3=k3,
                                       normalize=False)
        Pq = _marginal_by_quadrature(xs, S, phi, k3)
        assert np.max(np.abs(P - Pq)) < 1e-6 * np.max(Pq)

    def test_normalized_on_window(self):
        S = _sl2(1.1, 0.6, 0.3)
        xs = np.linspace(-20, 20, 801)
        P = position_marginal_coherent(xs, S=S, phi_bar=0.8, kappa3=0.5)
        assert abs(np.trapezoid(P, xs) - 1.0) < 1e-12
        assert np.all(P >= 0.0)

    def test_raw_form_is_normalized_analytically(self):
        S = _sl2(1.2, 0.7, 0.2)
        xs = np.linspace(-40, 40, 4001)
        P = position_marginal_coherent(xs, S=S, phi_bar=0.9, kappa3=0.8,
                                       normalize=False)
        assert abs(np.trapezoid(P, xs) - 1.0) < 1e-6

    def test_centroid_shift(self):
        S = _sl2(1.2, 0.7, 0.2)
        xs = np.linspace(-10, 10, 501)
        P0 = position_marginal_coherent(xs, S=S, phi_bar=0.9, kappa3=0.8)
        P1 = position_marginal_coherent(xs + 3.0, S=S, phi_bar=0.9,
                                        kappa3=0.8, x_cl=3.0)
        assert np.max(np.abs(P0 - P1)) < 1e-12

    def test_fringe_scale_doubles_with_kappa3(self):
        # doubling kappa3 stretches the fringe spacing by 2^(1/3) +- 2%.
        # Full-contrast frame (m_pp = 0); kappa3 large enough that the
        # exponential envelope (peak shift ~ kappa3^(-2/3)) is negligible.
        S = np.eye(2)
        phi = np.pi / 2
        xs = np.linspace(-30, 30, 24001)
        d = []
        for k3 in (32.0, 64.0):
            P = position_marginal_coherent(xs, S=S, phi_bar=phi, kappa3=k3)
            m = fringe_maxima(xs, P, n=2)
            d.append(abs(m[0] - m[1]))
        assert d[1] / d[0] == pytest.approx(2.0 ** (1.0 / 3.0), rel=0.02)

    def test_blur_identity_below_grid_scale(self):
        xs = np.linspace(-5, 5, 201)
        dens = np.exp(-xs * xs)
        out = position_marginal_decohered(xs, dens, 1e-8)
        assert np.array_equal(out, dens)

    def test_blur_washes_out_fringes(self):
        S = np.eye(2)
        xs = np.linspace(-30, 30, 6001)
        P = position_marginal_coherent(xs, S=S, phi_bar=np.pi / 2,
                                       kappa3=0.7)
        peaks = fringe_maxima(xs, P, n=2)
        spacing = abs(peaks[0] - peaks[1])
        blurred = position_marginal_decohered(xs, P, (2.0 * spacing) ** 2)
        # the oscillatory structure collapses: only one significant
        # interior maximum survives the convolution
        inner = (blurred[1:-1] > blurred[:-2]) & (blurred[1:-1] >= blurred[2:])
        idx = np.nonzero(inner)[0] + 1
        significant = idx[blurred[idx] > 0.01 * blurred.max()]
        assert len(significant) == 1

    def test_blur_preserves_mass(self):
        xs = np.linspace(-30, 30, 3001)
        P = position_marginal_coherent(xs, S=_sl2(1.0, 0.9, 0.1),
                                       phi_bar=1.2, kappa3=0.7)
        blurred = position_marginal_decohered(xs, P, 4.0)
        assert abs(np.trapezoid(blurred, xs)
                   - np.trapezoid(P, xs)) < 1e-10

    def test_blur_equals_wigner_level_blur(self):
        # blurring the Wigner function by Sigma_b and marginalizing equals
        # convolving the coherent marginal with variance sigma_b^2 m_xp^2
        S = _sl2(1.15, 0.75, 0.25)
        phi = 1.0
        k3 = 0.6
        sb2 = 2.5
        m = rotation(phi) @ np.array([[S[1, 1], -S[0, 1]],
                                      [-S[1, 0], S[0, 0]]])
        xs = np.linspace(-24, 24, 2401)
        pq = np.linspace(-70, 70, 4001)
        st = CubicPhaseState(k3, sigma_b_sq=sb2)
        Pw = np.empty_like(xs)
        for i, xv in enumerate(xs):
            Pw[i] = np.trapezoid(
                st.values(m[0, 0] * xv + m[0, 1] * pq,
                          m[1, 0] * xv + m[1, 1] * pq), pq)
        Pc = position_marginal_coherent(xs, S=S, phi_bar=phi, kappa3=k3,
                                        normalize=False)
        Pb = position_marginal_decohered(xs, Pc, sb2 * m[0, 1] ** 2)
        l1 = np.trapezoid(np.abs(Pw - Pb), xs)
        assert l1 < 1e-6

    def test_negative_blur_rejected(self):
        with pytest.raises(ConfigError):
            position_marginal_decohered(np.linspace(-1, 1, 11),
                                        np.ones(11), -0.1)


class TestFringeMaxima:
    def test_orders_from_tallest_end(self):
        xs = np.linspace(0, 10, 2001)
        dens = (1.5 * np.exp(-(xs - 8.0) ** 2 / 0.05)
                + 1.0 * np.exp(-(xs - 6.5) ** 2 / 0.05)
                + 0.6 * np.exp(-(xs - 5.0) ** 2 / 0.05))
        m = fringe_maxima(xs, dens, n=2)
        assert m[0] == pytest.approx(8.0, abs=0.01)
        assert m[1] == pytest.approx(6.5, abs=0.01)

    def test_flat_density_raises(self):
        with pytest.raises(WindowError):
            fringe_maxima(np.linspace(0, 1, 11), np.ones(11))
