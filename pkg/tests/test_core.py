import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgtlab.core import (Grid, InvalidParameterError, ModelParams, State,
                          assemble_v, imag_fraction, nonlinear_forcing,
                          quadratic_product, read_snapshot, v_norm_l2_spectral,
                          validate_params, write_snapshot)

P = ModelParams(tau=0.5, beta=1.0, nl_ratio=3.0)


class TestParams:
    def test_regimes(self):
        assert validate_params(ModelParams(0.5, 1.0)).regime == "dissipative"
        assert validate_params(ModelParams(1.0, 1.0)).regime == "critical"
        assert validate_params(ModelParams(2.0, 1.0)).regime == "unstable"

    def test_unstable_accepted_not_rejected(self):
        # sweeps need tau >= beta; it is labelled, never refused
        p = validate_params(ModelParams(2.0, 1.0))
        assert not p.dissipative_regime()

    @pytest.mark.parametrize("tau,beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0),
                                          (np.nan, 1.0), (1.0, np.inf)])
    def test_bad_params_rejected(self, tau, beta):
        with pytest.raises(InvalidParameterError):
            validate_params(ModelParams(tau, beta))

    def test_general_c_rejected(self):
        with pytest.raises(InvalidParameterError):
            validate_params(ModelParams(0.5, 1.0, c=2.0))


class TestGrid:
    def test_power_of_two_required(self):
        with pytest.raises(InvalidParameterError):
            Grid(1, 48, 1.0)
        with pytest.raises(InvalidParameterError):
            Grid(1, 4, 1.0)

    def test_nyquist_zeroed(self):
        g = Grid(1, 16, 2 * np.pi)
        assert g.kvec[0].ravel()[8] == 0.0  # mode n/2

    def test_dealias_mask(self):
        g = Grid(1, 64, 2 * np.pi)
        m = g.mode_index[0].ravel()
        keep = g.dealias_mask.ravel()
        assert keep[np.abs(m) <= 21].all()
        assert not keep[np.abs(m) > 21.4].any()

    def test_plancherel_matches_quadrature(self):
        g = Grid(2, 32, 5.0)
        rng = np.random.default_rng(0)
        f = rng.standard_normal(g.shape)
        assert np.isclose(g.spectral_l2sq(g.rfft(f)), g.l2_norm(f) ** 2, rtol=1e-12)


class TestVVector:
    def test_zero_state(self):
        g = Grid(2, 16, 3.0)
        v = assemble_v(State.zeros(g), P)
        assert v.norm_l2() == 0.0
        assert v.component_count == 1 + 2 * g.dim

    def test_single_mode_analytic(self):
        # u=0, v=sin(2 pi x / L), w=0: a=v, b=tau*v', c=v'
        g = Grid(1, 64, 7.0)
        x = g.coords()[0]
        k = 2 * np.pi / g.box_len
        st_ = State(g, np.zeros(g.shape), np.sin(k * x), np.zeros(g.shape))
        v = assemble_v(st_, P)
        assert np.allclose(v.a, np.sin(k * x), atol=1e-13)
        assert np.allclose(v.b[0], 0.5 * k * np.cos(k * x), atol=1e-12)
        assert np.allclose(v.c[0], k * np.cos(k * x), atol=1e-12)

    def test_plancherel_identity(self):
        # quadrature norm of V == spectral norm of the same combination
        g = Grid(3, 16, 4.0)
        rng = np.random.default_rng(1)
        st_ = State(g, *[_smooth(g, rng) for _ in range(3)])
        v = assemble_v(st_, P)
        assert np.isclose(v.norm_l2(), v_norm_l2_spectral(st_, P), rtol=1e-10)

    def test_norm_is_sum_of_component_norms(self):
        g = Grid(2, 32, 4.0)
        rng = np.random.default_rng(2)
        st_ = State(g, *[_smooth(g, rng) for _ in range(3)])
        v = assemble_v(st_, P)
        direct = np.sqrt(sum(g.l2_norm(c) ** 2 for c in (v.a,) + v.b + v.c))
        assert np.isclose(v.norm_l2(), direct, rtol=1e-12)

    @given(alpha=st.floats(-3.0, 3.0))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, alpha):
        g = Grid(1, 32, 2.0)
        rng = np.random.default_rng(3)
        s1 = State(g, *[_smooth(g, rng) for _ in range(3)])
        s2 = State(g, *[_smooth(g, rng) for _ in range(3)])
        s3 = State(g, alpha * s1.u + s2.u, alpha * s1.v + s2.v, alpha * s1.w + s2.w)
        v1, v2, v3 = (assemble_v(s, P) for s in (s1, s2, s3))
        for combo, a, b in zip(("a",), (v1.a,), (v2.a,)):
            assert np.allclose(getattr(v3, combo), alpha * a + b, atol=1e-12)
        for i in range(g.dim):
            assert np.allclose(v3.b[i], alpha * v1.b[i] + v2.b[i], atol=1e-12)


class TestForcing:
    def test_vanishes_when_v_zero(self):
        g = Grid(1, 64, 2 * np.pi)
        rng = np.random.default_rng(4)
        st_ = State(g, _smooth(g, rng), np.zeros(g.shape), _smooth(g, rng))
        assert np.allclose(nonlinear_forcing(st_, P), 0.0, atol=1e-14)

    def test_constant_fields(self):
        # u=0, v=1, w=2, B/A=3: gradients vanish, f = 3*1*2 = 6
        g = Grid(1, 32, 1.0)
        st_ = State(g, np.zeros(g.shape), np.ones(g.shape), 2 * np.ones(g.shape))
        assert np.allclose(nonlinear_forcing(st_, P), 6.0, atol=1e-12)

    def test_single_mode_produces_modes_0_and_2k(self):
        g = Grid(1, 64, 2 * np.pi)
        x = g.coords()[0]
        m0 = 3
        st_ = State(g, np.sin(m0 * x), np.sin(m0 * x), np.zeros(g.shape))
        raw = quadratic_product(st_, P)
        spec = g.rfft(raw)
        mags = np.abs(spec.ravel())
        occupied = np.nonzero(mags > 1e-10 * mags.max())[0]
        assert set(occupied) <= {0, 2 * m0}

    @given(alpha=st.floats(0.1, 4.0))
    @settings(max_examples=20, deadline=None)
    def test_quadratic_scaling(self, alpha):
        g = Grid(1, 64, 2 * np.pi)
        rng = np.random.default_rng(5)
        fields = [_smooth(g, rng, zero_mean=True) for _ in range(3)]
        f1 = nonlinear_forcing(State(g, *fields), P)
        f2 = nonlinear_forcing(State(g, *[alpha * f for f in fields]), P)
        assert np.allclose(f2, alpha**2 * f1, atol=1e-10 * max(1.0, alpha**2))

    def test_hermitian_symmetry(self):
        import scipy.fft as sfft
        g = Grid(2, 32, 3.0)
        rng = np.random.default_rng(6)
        st_ = State(g, *[_smooth(g, rng) for _ in range(3)])
        f = nonlinear_forcing(st_, P)
        assert imag_fraction(g, sfft.fftn(f)) < 1e-12


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        g = Grid(2, 16, 2.5)
        rng = np.random.default_rng(7)
        f = rng.standard_normal(g.shape)
        path = tmp_path / "field.snap"
        write_snapshot(path, f, g, t=1.25, field_name="u")
        back, header, g2 = read_snapshot(path)
        assert np.array_equal(back, f)
        assert header == {"dim": 2, "n": 16, "box_len": 2.5, "t": 1.25,
                          "field_name": "u"}
        assert g2 == g


def _smooth(g, rng, zero_mean=False):
    """Band-limited random field, well inside the dealias cutoff."""
    spec = g.rfft(rng.standard_normal(g.shape))
    keep = np.ones(g.rshape, dtype=bool)
    for m in g.mode_index:
        keep &= np.abs(m) <= g.n // 5
    spec *= keep
    if zero_mean:
        spec.ravel()[0] = 0.0
    out = g.irfft(spec)
    return out / max(np.max(np.abs(out)), 1e-300)
