import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgtlab import modal
from jmgtlab.core import ModelParams, RegimeError

P = ModelParams(0.5, 1.0)

params_st = st.tuples(st.floats(0.05, 3.0), st.floats(0.1, 3.0))
xi2_st = st.floats(1e-6, 1e6)


class TestSymbolMatrix:
    @pytest.mark.parametrize("xi2,tau,beta,last_row", [
        (0.0, 0.5, 1.0, (0.0, 0.0, -2.0)),
        (1.0, 0.5, 1.0, (-2.0, -2.0, -2.0)),
        (4.0, 0.25, 1.0, (-16.0, -16.0, -4.0)),
    ])
    def test_entries(self, xi2, tau, beta, last_row):
        m = modal.symbol_matrix(xi2, ModelParams(tau, beta))
        assert np.array_equal(m.entries[0], [0.0, 1.0, 0.0])
        assert np.array_equal(m.entries[1], [0.0, 0.0, 1.0])
        assert np.array_equal(m.entries[2], last_row)
        assert np.isclose(np.trace(m.entries), -1.0 / tau)

    def test_negative_xi2_rejected(self):
        with pytest.raises(ValueError):
            modal.symbol_matrix(-1.0, P)


class TestSpectrum:
    def test_zero_mode_roots(self):
        sp = modal.mode_spectrum(modal.symbol_matrix(0.0, P))
        assert sp.degenerate  # double zero root
        assert np.allclose(sorted(sp.roots.real), [-2.0, 0.0, 0.0], atol=1e-12)

    def test_sorted_by_real_part(self):
        sp = modal.mode_spectrum(modal.symbol_matrix(3.0, P))
        assert sp.roots[0].real >= sp.roots[1].real >= sp.roots[2].real
        assert sp.abscissa == sp.roots[0].real

    @given(params_st, xi2_st)
    @settings(max_examples=200, deadline=None)
    def test_vieta_and_residual(self, tb, xi2):
        tau, beta = tb
        p = ModelParams(tau, beta)
        sp = modal.mode_spectrum(modal.symbol_matrix(xi2, p))
        scale = np.abs(sp.roots).max()
        assert abs(sp.roots.sum() - (-1.0 / tau)) <= 1e-9 * max(scale, 1.0 / tau)
        assert abs(np.prod(sp.roots) - (-xi2 / tau)) <= 1e-9 * max(scale**3, xi2 / tau)
        # characteristic cubic residual, relative to its largest term
        for lam in sp.roots:
            res = tau * lam**3 + lam**2 + beta * xi2 * lam + xi2
            ref = max(abs(tau * lam**3), abs(lam**2), abs(beta * xi2 * lam), xi2)
            assert abs(res) <= 1e-9 * ref

    def test_dissipative_all_left_half_plane(self):
        _, absc, _ = modal.spectrum_batch(np.geomspace(1e-4, 1e4, 200) ** 2, P)
        assert (absc < 0).all()

    def test_unstable_regime_has_growth(self):
        _, absc, _ = modal.spectrum_batch(np.geomspace(1e-2, 1e2, 100) ** 2,
                                          ModelParams(2.0, 1.0))
        assert (absc >= 0).any()


class TestPropagator:
    def test_identity_at_zero(self):
        p = modal.propagator(modal.symbol_matrix(2.0, P), 0.0)
        assert np.abs(p.matrix - np.eye(3)).max() < 1e-13

    @given(params_st, st.floats(1e-3, 1e2), st.floats(0.05, 0.95), st.floats(0.1, 3.0))
    @settings(max_examples=60, deadline=None)
    def test_semigroup(self, tb, xi2, frac, t_total):
        m = modal.symbol_matrix(xi2, ModelParams(*tb))
        p1 = modal.propagator(m, frac * t_total).matrix
        p2 = modal.propagator(m, (1 - frac) * t_total).matrix
        pt = modal.propagator(m, t_total).matrix
        assert np.abs(p1 @ p2 - pt).max() <= 1e-9 * max(np.abs(pt).max(), 1.0)

    def test_zero_mode_closed_form(self):
        # at xi2=0: w=e^{-t/tau} w0, v=v0+tau(1-e^{-t/tau})w0, u integrates v
        tau, t = 0.5, 1.3
        p = modal.propagator(modal.symbol_matrix(0.0, ModelParams(tau, 1.0)), t)
        got = p.matrix @ np.array([0.0, 0.0, 1.0])
        decay = np.exp(-t / tau)
        expected = np.array([tau * t - tau**2 * (1 - decay),
                             tau * (1 - decay), decay])
        assert np.allclose(got, expected, atol=1e-12)
        assert p.method == "squaring"

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            modal.propagator(modal.symbol_matrix(1.0, P), -0.1)

    def test_eigen_and_squaring_agree(self):
        import scipy.linalg
        for xi2 in (0.3, 1.0, 17.0, 400.0):
            m = modal.symbol_matrix(xi2, P)
            p = modal.propagator(m, 0.7)
            assert p.method == "eigen"
            ref = scipy.linalg.expm(m.entries * 0.7)
            assert np.abs(p.matrix - ref).max() <= 1e-8 * np.abs(ref).max()

    def test_defective_point_uses_squaring(self):
        # tau=0.4, beta=4, xi2=0.2 has a genuine double root at -1
        m = modal.symbol_matrix(0.2, ModelParams(0.4, 4.0))
        p = modal.propagator(m, 1.0)
        assert p.method == "squaring"
        sp = modal.mode_spectrum(m)
        assert np.allclose(sorted(sp.roots.real), [-1.0, -1.0, -0.5], atol=1e-6)


class TestAbscissaProfile:
    def test_envelope_constant_positive(self):
        prof = modal.spectral_abscissa_profile(P)
        assert prof.lambda_max > 0
        assert prof.lambda_envelope == prof.lambda_max / 2.0

    def test_small_xi_quadratic_departure(self):
        # abscissa ~ -(beta-tau)/2 * xi^2 as xi -> 0
        prof = modal.spectral_abscissa_profile(P, np.geomspace(1e-4, 1e-2, 50))
        slope = prof.abscissa / prof.xi**2
        assert np.allclose(slope, -(P.beta - P.tau) / 2.0, rtol=1e-3)

    def test_large_xi_uniformly_negative(self):
        prof = modal.spectral_abscissa_profile(P, np.geomspace(1e2, 1e4, 50))
        assert prof.abscissa.max() < -0.4  # bounded away from zero

    def test_regime_and_grid_errors(self):
        with pytest.raises(RegimeError):
            modal.spectral_abscissa_profile(ModelParams(2.0, 1.0))
        with pytest.raises(ValueError):
            modal.spectral_abscissa_profile(P, np.array([]))


class TestStabilityRegion:
    def test_examples(self):
        xis = np.geomspace(1e-2, 1e2, 30)
        region = modal.stability_region([0.3, 0.9], [0.3, 0.9], xis)
        assert region.stable[0, 1]       # (0.3, 0.9)
        assert not region.stable[1, 0]   # (0.9, 0.3)

    def test_boundary_scan(self):
        eps = 0.01
        xis = np.geomspace(1e-2, 1e2, 50)
        region = modal.stability_region([1.0 - eps, 1.0 + eps], [1.0], xis)
        assert region.stable[0, 0] and not region.stable[1, 0]


class TestModeEnergy:
    def test_zero_state(self):
        assert modal.mode_energy_e1((0, 0, 0), 1.0, P) == 0.0

    def test_direct_substitution(self):
        # (u,v,w)=(0,1,0), xi2=1: 0.5*(1 + 0.25 + 0.25) = 0.75
        assert np.isclose(modal.mode_energy_e1((0, 1, 0), 1.0, P), 0.75)

    def test_regime_error(self):
        with pytest.raises(RegimeError):
            modal.mode_energy_e1((0, 1, 0), 1.0, ModelParams(1.5, 1.0))

    def test_equivalent_to_vnorm_squared(self):
        rng = np.random.default_rng(0)
        ratios = []
        for xi2 in np.geomspace(1e-3, 1e3, 40):
            mode = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            e1 = modal.mode_energy_e1(mode, xi2, P)
            vn2 = modal.mode_vnorm2(mode, xi2, P.tau)
            ratios.append(e1 / vn2)
        ratios = np.array(ratios)
        assert ratios.max() / ratios.min() < 20.0  # uniformly comparable


class TestEnvelope:
    def setup_method(self):
        self.profile = modal.spectral_abscissa_profile(P)

    def test_t_zero_ratio_is_one(self):
        rep = modal.envelope_check((0.2, 1.0, -0.3), P, 1.0,
                                   np.linspace(0.0, 40.0, 200), self.profile)
        assert rep.c_fit >= 1.0 - 1e-12
        assert rep.ok

    def test_late_slope_below_bound(self):
        rep = modal.envelope_check((0.1 + 0.2j, 1.0, 0.5j), P, 1.0,
                                   np.linspace(0.0, 60.0, 300), self.profile)
        assert rep.slope <= rep.slope_bound + 0.05 * abs(rep.slope_bound)

    def test_low_mode_rate_matches_abscissa(self):
        # observed exponential rate within 2% of the eigenvalue prediction
        xi = 1e-2
        _, absc, _ = modal.spectrum_batch(np.array([xi**2]), P)
        rep = modal.envelope_check((0.4, 1.0, 0.1), P, xi**2,
                                   np.linspace(0.0, 1.2e6, 2400), self.profile)
        assert abs(rep.slope - absc[0]) <= 0.02 * abs(absc[0])


class TestWEnvelope:
    def test_zero_mode_zero_data(self):
        rep = modal.w_envelope_check((0.3, -0.2, 0.0), P, 0.0,
                                     np.linspace(0.0, 20.0, 100))
        assert rep.c_fit == 0.0 and rep.ok

    def test_zero_mode_scalar_decay(self):
        # |w(t)| = e^{-t/tau}|w0| exactly, no second term needed
        rep = modal.w_envelope_check((0.0, 0.0, 1.0), P, 0.0,
                                     np.linspace(0.0, 20.0, 100))
        assert rep.c_fit == 0.0 and rep.ok

    def test_generic_mode_finite_constant(self):
        p = ModelParams(0.1, 1.0)
        rep = modal.w_envelope_check((0.3, 1.0, 0.5), p, 1.0,
                                     np.linspace(0.0, 100.0, 1000))
        assert np.isfinite(rep.c_fit) and rep.tau_ok and rep.ok

    def test_large_tau_flagged_not_crashed(self):
        p = ModelParams(0.9, 1.0)  # tau above 1/lambda for this pair
        prof = modal.spectral_abscissa_profile(p)
        assert p.tau >= 1.0 / prof.lambda_envelope
        rep = modal.w_envelope_check((0.3, 1.0, 0.5), p, 1.0,
                                     np.linspace(0.0, 50.0, 500), prof)
        assert not rep.tau_ok
        assert np.isfinite(rep.c_fit)
