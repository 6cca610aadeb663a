import numpy as np
import pytest

from widewell.errors import IntegrationAccuracy
from widewell.frames import (
    beta_coefficients,
    eta_peaks,
    graded_turning_grid,
    kappa_between,
    kappa_integrals,
    propagate_S,
    propagate_frames,
    thawed_covariance,
)
from widewell.potentials import DoubleWell

WR = 1.0e-2

# Frozen landmarks of the desk frame run (d=1e3, x_s=1e2, ratio 1e-2).
TAU_MAX = 4.046897142366763
TAU_D = 3.1639804684359234        # first eta maximum
ETA_D = 707.140322274751
PHI_BAR_OVER_PI = 0.49689970786287196
ETA_MIN = 0.07088478131066657     # compression at the turning point
JUMP_OVER_PI = 1.0000194963545284


class TestGradedGrid:
    def test_structure(self):
        g = graded_turning_grid(2.0 * TAU_MAX, [TAU_MAX])
        d = np.diff(g)
        assert g[0] == 0.0
        assert g[-1] == pytest.approx(2.0 * TAU_MAX, abs=1e-12)
        assert np.all(d > 0)
        assert d.max() <= 1e-4 * (1 + 1e-6)
        # seam dedup keeps steps a usable fraction of the core resolution
        assert d.min() > 0.25e-7

    def test_core_refinement_brackets_turn(self):
        g = graded_turning_grid(2.0 * TAU_MAX, [TAU_MAX])
        near = np.abs(g - TAU_MAX) < 4e-4
        assert np.max(np.diff(g[near])) <= 1e-7 * (1 + 1e-6)


class TestDeskRun:
    def test_det_S_unimodular(self, desk_frames):
        _, rec = desk_frames
        det = np.abs(rec.S[:, 0, 0] * rec.S[:, 1, 1]
                     - rec.S[:, 0, 1] * rec.S[:, 1, 0] - 1.0)
        assert det.max() < 1e-9

    def test_angle_rate_identity(self, desk_frames):
        # dphi/dtau = (omega_t/omega)/eta^2, checked by central differences
        # away from the grid endpoints.
        _, rec = desk_frames
        dphi = np.gradient(rec.phi, rec.tau)
        pred = (1.0 / rec.omega_ratio) / rec.eta**2
        inner = slice(5, -5)
        rel = np.abs(dphi[inner] - pred[inner]) / pred[inner]
        assert rel.max() < 1e-4

    def test_landmarks(self, desk_frames):
        _, rec = desk_frames
        assert rec.tau_d == pytest.approx(TAU_D, abs=2e-6)
        assert rec.eta_d == pytest.approx(ETA_D, rel=1e-6)
        assert rec.phi_bar / np.pi == pytest.approx(PHI_BAR_OVER_PI, abs=1e-6)
        i = np.argmin(rec.eta)
        assert rec.eta[i] == pytest.approx(ETA_MIN, rel=1e-4)
        assert rec.tau[i] == pytest.approx(TAU_MAX, abs=1e-5)

    def test_expansion_peaks_and_jump(self, desk_frames):
        ts, rec = desk_frames
        pk1, pk2 = eta_peaks(rec, ts.tau_max)
        assert pk1[0] == pytest.approx(TAU_D, abs=2e-6)
        assert pk1[1] == pytest.approx(ETA_D, rel=1e-5)
        # mirror peak of the second half-orbit
        assert pk2[0] == pytest.approx(2.0 * ts.tau_max - TAU_D, abs=1e-4)
        assert pk2[1] == pytest.approx(pk1[1], rel=1e-3)
        jump = (pk2[2] - pk1[2]) / np.pi
        assert jump == pytest.approx(JUMP_OVER_PI, abs=1e-6)
        assert 0.9 < jump < 1.1

    def test_recurrence_after_full_orbit(self, desk_frames):
        # eta returns to 1 and phi to 2*pi at 2*tau_max (S itself retains a
        # residual lower-triangular shear, which eta/phi do not see).
        _, rec = desk_frames
        assert rec.eta[-1] == pytest.approx(1.0, abs=1e-8)
        assert rec.phi[-1] == pytest.approx(2.0 * np.pi, abs=1e-8)

    def test_compression_dip_width(self, desk_frames):
        # Lorentzian dip: gamma = (omega/omega_t) * eta_min^2 sets the
        # half-width of the eta minimum at the turning point.
        _, rec = desk_frames
        i = np.argmin(rec.eta)
        gamma = rec.omega_ratio * rec.eta[i] ** 2
        j = np.searchsorted(rec.tau, rec.tau[i] + gamma)
        assert rec.eta[j] == pytest.approx(np.sqrt(2.0) * rec.eta[i], rel=0.05)

    def test_eta_phi_from_S_row(self, desk_frames):
        _, rec = desk_frames
        k = rec.index_of(2.0)
        assert rec.eta[k] == pytest.approx(np.hypot(rec.S[k, 0, 0],
                                                    rec.S[k, 0, 1]), rel=1e-12)
        raw = np.arctan2(rec.S[k, 0, 1], rec.S[k, 0, 0])
        assert (rec.phi[k] - raw) % (2.0 * np.pi) == pytest.approx(0.0, abs=1e-9)


class TestExpansionCoefficients:
    def test_beta_formula_spot_check(self, desk_frames):
        _, rec = desk_frames
        model = DoubleWell(1.0e3)
        betas = beta_coefficients(model, rec, orders=(3, 4))
        k = rec.index_of(2.5)
        b3 = WR * model.derivative(3, rec.x_c[k]) * rec.eta[k] ** 3 / 2.0
        b4 = WR * model.derivative(4, rec.x_c[k]) * rec.eta[k] ** 4 / 6.0
        assert betas[3][k] == pytest.approx(b3, rel=1e-12)
        assert betas[4][k] == pytest.approx(b4, rel=1e-12)

    def test_kappa_monotone_on_first_segment(self, desk_frames):
        ts, rec = desk_frames
        model = DoubleWell(1.0e3)
        beta = beta_coefficients(model, rec, orders=(3, 4))
        kap = kappa_integrals(beta, rec.tau)
        seg = rec.tau <= ts.tau_max
        assert np.all(np.diff(kap[3][seg]) >= 0)  # U''' > 0 while x_c > 0
        assert kap[3][0] == 0.0

    def test_kappa_segment_additivity(self, desk_frames):
        ts, rec = desk_frames
        model = DoubleWell(1.0e3)
        beta = beta_coefficients(model, rec, orders=(3,))
        full = kappa_integrals(beta, rec.tau)[3][-1]
        first = kappa_between(model, rec, 0.0, ts.tau_max, orders=(3,))[3]
        second = kappa_between(model, rec, ts.tau_max, rec.tau[-1],
                               orders=(3,))[3]
        assert first + second == pytest.approx(full, rel=1e-7)


class TestCovariance:
    def test_thawed_covariance_properties(self, desk_frames):
        _, rec = desk_frames
        C = thawed_covariance(rec, nbar=0.5)
        assert np.allclose(C, np.swapaxes(C, 1, 2))
        det = C[:, 0, 0] * C[:, 1, 1] - C[:, 0, 1] ** 2
        # cancellation in the large entries bounds det accuracy absolutely
        assert np.allclose(det, 4.0, atol=1e-3)  # (2*nbar+1)^2
        k = rec.index_of(TAU_D)
        assert C[k, 0, 0] == pytest.approx(2.0 * rec.eta[k] ** 2, rel=1e-10)

    def test_initial_state(self, desk_frames):
        _, rec = desk_frames
        C0 = thawed_covariance(rec, nbar=0.0)[0]
        assert np.allclose(C0, np.eye(2), atol=1e-12)


class TestGuards:
    def test_uniform_grid_through_compression_rejected(self):
        # A flat 1e-3 grid cannot follow the angle through the eta dip.
        grid = np.arange(0.0, 1.05 * TAU_MAX, 1e-3)
        with pytest.raises(IntegrationAccuracy):
            propagate_frames(DoubleWell(1.0e3), WR, 1.0e2, 0.0, grid)

    def test_propagate_S_matches_joint_run(self, desk_frames):
        _, rec = desk_frames
        stop = rec.index_of(2.0) + 1
        tau = rec.tau[:stop]
        S = propagate_S(rec.alpha[:stop], WR, tau)
        assert np.max(np.abs(S - rec.S[:stop])) < 1e-6


class TestHarmonicLimit:
    def test_pure_trap_rotation(self):
        # U = (omega_t/omega)^2 x^2 / 2 makes the frame rotate rigidly at
        # rate omega_t/omega with eta = 1 throughout.
        from widewell.potentials import PolynomialPotential
        wr = 0.5
        model = PolynomialPotential((0.0, 0.0, 0.5 / wr**2))
        grid = np.arange(0.0, 2.0, 1e-4)
        rec = propagate_frames(model, wr, 0.3, 0.0, grid)
        assert np.max(np.abs(rec.eta - 1.0)) < 1e-8
        assert np.allclose(rec.phi, grid / wr, atol=1e-7)
