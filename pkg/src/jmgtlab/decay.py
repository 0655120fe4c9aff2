"""Whole-space decay experiments on exact radial-frequency trajectories.

Algebraic decay is a low-frequency-continuum effect that a periodic box cannot
express, so the linear system is evolved exactly in |xi| (nodewise matrix
exponential on a log-spaced radial grid) and Besov norms are 1D quadratures.
Fitted log-log slopes are compared against the expected exponents:
-(sigma+s)/2 for the V-vector, -(sigma+s+1)/2 for the acceleration w, and
-min(a, b) for the convolution-integral probe.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.integrate
import scipy.stats

from .core import ModelParams, RegimeError
from .lp import BesovSpec, NormSeries, RadialField, besov_norm, field_partition
from .modal import PropagatorFactory, mode_vnorm2, spectral_abscissa_profile

DEFAULT_K_RANGE = (1e-4, 1e2)
DEFAULT_K_NODES = 4096
DEFAULT_WINDOW = (1e2, 1e4)


# ---------------------------------------------------------------------------
# radial profiles and their evolution


@dataclass
class RadialProfile:
    """(u, v, w) Fourier samples on a radial |xi| grid in R^3."""

    k: np.ndarray
    modes: np.ndarray  # shape (len(k), 3), complex
    t: float = 0.0

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.modes = np.asarray(self.modes, dtype=complex)
        if self.k.ndim != 1 or np.any(self.k <= 0) or np.any(np.diff(self.k) <= 0):
            raise ValueError("k nodes must be positive and strictly increasing")
        if self.modes.shape != (self.k.size, 3) or not np.all(np.isfinite(self.modes)):
            raise ValueError("modes must be finite with shape (len(k), 3)")


def default_k_nodes(count: int = DEFAULT_K_NODES, k_range=DEFAULT_K_RANGE):
    return np.geomspace(k_range[0], k_range[1], count)


def gaussian_profile(k=None, width: float = 1.0, amps=(1.0, 1.0, 1.0)) -> RadialProfile:
    """Fourier transform of Gaussian data: flat near k = 0, so the V-vector sits
    exactly at low-frequency regularity index s = 3/2 (the L1-type class)."""
    if k is None:
        k = default_k_nodes()
    env = np.exp(-((k * width) ** 2) / 2.0)
    modes = np.stack([a * env for a in amps], axis=1)
    return RadialProfile(k, modes)


def power_band_profile(k=None, alpha: float = 0.0, width: float = 1.0,
                       amps=(1.0, 1.0, 1.0)) -> RadialProfile:
    """Profile with |modes| ~ k^alpha at low k: realizes index s = alpha + 3/2."""
    if k is None:
        k = default_k_nodes()
    env = (k**alpha) * np.exp(-((k * width) ** 2) / 2.0)
    modes = np.stack([a * env for a in amps], axis=1)
    return RadialProfile(k, modes)


def w_only_profile(k=None, width: float = 1.0) -> RadialProfile:
    if k is None:
        k = default_k_nodes()
    env = np.exp(-((k * width) ** 2) / 2.0)
    modes = np.stack([np.zeros_like(k), np.zeros_like(k), env], axis=1)
    return RadialProfile(k, modes)


FAMILIES = {
    "gaussian": gaussian_profile,
    "power-band": power_band_profile,
    "w-only": w_only_profile,
}


class RadialEvolver:
    """Nodewise exact evolution of a radial profile (shared propagator path)."""

    def __init__(self, profile: RadialProfile, params: ModelParams):
        if not params.dissipative_regime():
            raise RegimeError("radial decay runs require the dissipative regime tau < beta")
        self.params = params
        self.profile0 = profile
        self._factory = PropagatorFactory(profile.k**2, params)

    def at(self, t: float) -> RadialProfile:
        modes = self._factory.apply(t, self.profile0.modes)
        return RadialProfile(self.profile0.k, modes, t=self.profile0.t + t)


def evolve_radial(profile: RadialProfile, params: ModelParams, t: float) -> RadialProfile:
    return RadialEvolver(profile, params).at(t)


def v_magnitude_field(profile: RadialProfile, params: ModelParams) -> RadialField:
    """|V-hat|(k) of the profile as a radial field (for V-vector norms)."""
    vn2 = mode_vnorm2(profile.modes.T, profile.k**2, params.tau)
    return RadialField(profile.k, np.sqrt(vn2))


def w_magnitude_field(profile: RadialProfile) -> RadialField:
    return RadialField(profile.k, np.abs(profile.modes[:, 2]))


def radial_besov_norm(profile: RadialProfile, params: ModelParams, s: float,
                      r: float = 1.0, ell: float = 0.0, homogeneous: bool = True,
                      which: str = "V"):
    """||Lambda^ell (.)||_{B^s_{2,r}} of the V-vector (or of w) by radial quadrature."""
    if which == "V":
        fld = v_magnitude_field(profile, params)
    elif which == "w":
        fld = w_magnitude_field(profile)
    else:
        raise ValueError(f"unknown target {which!r}")
    return besov_norm(fld, BesovSpec(s=s, r=r, homogeneous=homogeneous), lam=ell)


# ---------------------------------------------------------------------------
# power-law fitting


@dataclass(frozen=True)
class DecayFit:
    """Log-log slope of a norm series against log(1+t) on a late-time window."""

    window: tuple
    slope: float
    ci: float            # 95% half-width
    theory: float
    tolerance: float
    curvature: float     # |quadratic| / |linear| contribution across the window
    verdict: str         # "pass" | "fail" | "inapplicable"

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"


def fit_decay(series: NormSeries, theory_exponent: float, window=DEFAULT_WINDOW,
              tolerance: float = 0.05, curvature_tol: float = 0.05) -> DecayFit:
    """OLS fit of log(value) vs log(1+t); curvature rejects pre-asymptotic windows."""
    t_lo, t_hi = window
    if t_lo < 10.0 * series.times[0]:
        raise ValueError("fit window must start at >= 10x the first time sample")
    if np.log10(t_hi / t_lo) < 1.5:
        raise ValueError("fit window must span at least 1.5 decades")
    sel = (series.times >= t_lo) & (series.times <= t_hi)
    if sel.sum() < 5:
        raise ValueError("fewer than 5 samples in the fit window")
    t = series.times[sel]
    val = series.values[sel]
    if np.any(val <= 0):
        raise ValueError("non-positive norm values in the fit window")
    x = np.log(1.0 + t)
    y = np.log(val)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = x.size - 2
    se = np.sqrt(resid @ resid / dof / np.sum((x - x.mean()) ** 2))
    ci = float(scipy.stats.t.ppf(0.975, dof) * se)
    c2, c1, _ = np.polyfit(x, y, 2)
    curvature = float(abs(c2) * (x.max() - x.min()) / max(abs(c1), 1e-300))
    if curvature > curvature_tol:
        verdict = "inapplicable"
    else:
        verdict = "pass" if abs(slope - theory_exponent) <= tolerance else "fail"
    return DecayFit((t_lo, t_hi), float(slope), ci, float(theory_exponent),
                    tolerance, curvature, verdict)


# ---------------------------------------------------------------------------
# decay experiments


@dataclass
class DecayConfig:
    tau: float = 0.5
    beta: float = 1.0
    family: str = "gaussian"
    width: float = 1.0
    alpha: float = 0.0           # power-band low-k exponent (s = alpha + 3/2)
    s_index: float = 1.5         # low-frequency regularity index of the data
    ell_list: tuple = (0.0, 1.0, 1.5)
    sigma_list: tuple = (1.5, 0.0)
    k_nodes: int = DEFAULT_K_NODES
    k_range: tuple = DEFAULT_K_RANGE
    t_decades: float = 4.0
    t_count: int = 61
    window: tuple = DEFAULT_WINDOW
    tolerance: float = 0.05

    def params(self) -> ModelParams:
        return ModelParams(tau=self.tau, beta=self.beta)

    def make_profile(self) -> RadialProfile:
        k = default_k_nodes(self.k_nodes, self.k_range)
        if self.family == "gaussian":
            return gaussian_profile(k, self.width)
        if self.family == "power-band":
            return power_band_profile(k, self.alpha, self.width)
        if self.family == "w-only":
            return w_only_profile(k, self.width)
        raise ValueError(f"unknown data family {self.family!r}")

    def times(self):
        return np.geomspace(1.0, 10.0**self.t_decades, self.t_count)


@dataclass(frozen=True)
class ExperimentRow:
    label: str
    ell: float
    sigma: float
    fitted: float
    ci: float
    theory: float
    verdict: str


@dataclass
class ExperimentResult:
    rows: list
    series: dict            # label -> NormSeries
    fits: dict = dc_field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return all(r.verdict == "pass" for r in self.rows)


def _norm_trajectory(evolver, times, norm_fn, label) -> NormSeries:
    values = np.array([norm_fn(evolver.at(t)) for t in times])
    return NormSeries(times, values, label)


def linear_decay_experiment(cfg: DecayConfig) -> ExperimentResult:
    """Fit decay exponents of ||Lambda^ell V(t)|| against -(ell + s)/2.

    ell < 3/2 is measured in the inhomogeneous space B^{3/2-ell}_{2,1}; the
    endpoint ell = 3/2 in homogeneous B^0_{2,1}, matching the expected optimal
    rates for data at low-frequency index s.
    """
    params = cfg.params()
    evolver = RadialEvolver(cfg.make_profile(), params)
    times = cfg.times()
    rows, series, fits = [], {}, {}
    for ell in cfg.ell_list:
        homogeneous = ell >= 1.5
        s_space = 0.0 if homogeneous else 1.5 - ell
        label = f"lam{ell:g}_V"
        norm_fn = lambda p, e=ell, h=homogeneous, ss=s_space: radial_besov_norm(
            p, params, s=ss, r=1.0, ell=e, homogeneous=h).value
        ns = _norm_trajectory(evolver, times, norm_fn, label)
        theory = -(ell + cfg.s_index) / 2.0
        fit = fit_decay(ns, theory, cfg.window, cfg.tolerance)
        rows.append(ExperimentRow(label, ell, s_space, fit.slope, fit.ci, theory, fit.verdict))
        series[label] = ns
        fits[label] = fit
    return ExperimentResult(rows, series, fits)


def w_decay_experiment(cfg: DecayConfig, nonlinear_target: float = -1.5,
                       tolerance_w: float = 0.1) -> ExperimentResult:
    """Fit ||w(t)||_{B^sigma_{2,1}} against -(sigma + s + 1)/2.

    Requires small relaxation time (tau below the reciprocal envelope
    constant); the run is flagged, not aborted, when that fails.  For
    sigma = 3/2 the weaker nonlinear-theory target is recorded alongside:
    it holds a fortiori whenever the linear rate is met.
    """
    params = cfg.params()
    profile = cfg.make_profile()
    evolver = RadialEvolver(profile, params)
    times = cfg.times()
    lam = spectral_abscissa_profile(params).lambda_envelope
    tau_ok = cfg.tau < 1.0 / lam
    rows, series, fits = [], {}, {}
    for sigma in cfg.sigma_list:
        label = f"w_B{sigma:g}"
        norm_fn = lambda p, s=sigma: radial_besov_norm(
            p, params, s=s, r=1.0, which="w").value
        ns = _norm_trajectory(evolver, times, norm_fn, label)
        theory = -(sigma + cfg.s_index + 1.0) / 2.0
        fit = fit_decay(ns, theory, cfg.window, tolerance_w)
        rows.append(ExperimentRow(label, 0.0, sigma, fit.slope, fit.ci, theory, fit.verdict))
        series[label] = ns
        fits[label] = fit
        if sigma == 1.5:
            afortiori = "pass" if fit.slope <= nonlinear_target + tolerance_w else "fail"
            rows.append(ExperimentRow(label + "_nonlinear_target", 0.0, sigma,
                                      fit.slope, fit.ci, nonlinear_target, afortiori))
    result = ExperimentResult(rows, series, fits)
    result.tau_ok = tau_ok
    result.lambda_envelope = lam
    return result


# ---------------------------------------------------------------------------
# convolution-integral probe


@dataclass(frozen=True)
class SegelReport:
    a: float
    b: float
    hypothesis_ok: bool
    fit: DecayFit = None
    ratio_max: float = np.nan   # sup of I(t) * (1+t)^{min(a,b)} on the window

    @property
    def ok(self) -> bool:
        return self.hypothesis_ok and self.fit is not None and self.fit.ok


def _segel_half(t: float, a: float, b: float) -> float:
    """int_0^{t/2} (1+t-r)^-a (1+r)^-b dr in the variable u = log(1+r).

    The substitution spreads the near-origin peak over an O(log t) interval and
    the values are far below quad's default epsabs, so only epsrel is used.
    """
    f = lambda u: (t + 2.0 - np.exp(u)) ** (-a) * np.exp(u * (1.0 - b))
    val, _ = scipy.integrate.quad(f, 0.0, np.log1p(t / 2.0), epsabs=0.0,
                                  epsrel=1e-10, limit=400)
    return val


def _segel_integral(t: float, a: float, b: float) -> float:
    """int_0^t (1+t-r)^-a (1+r)^-b dr, split at t/2 so both halves decay from 0."""
    return _segel_half(t, a, b) + _segel_half(t, b, a)


def segel_probe(a: float, b: float, t_grid=None, window=(1e4, 1e6),
                tolerance: float = 0.05) -> SegelReport:
    """Late-time slope of the convolution integral; expected exponent -min(a,b).

    max(a, b) <= 1 violates the lemma hypothesis and is reported, not raised.
    Equal exponents carry a slowly-varying prefactor, so callers widen the
    tolerance there.
    """
    if max(a, b) <= 1.0:
        return SegelReport(a, b, hypothesis_ok=False)
    if t_grid is None:
        t_grid = np.geomspace(1.0, window[1], 61)
    values = np.array([_segel_integral(t, a, b) for t in t_grid])
    ns = NormSeries(np.asarray(t_grid, dtype=float), values, f"segel_{a:g}_{b:g}")
    theory = -min(a, b)
    fit = fit_decay(ns, theory, window, tolerance)
    sel = (ns.times >= window[0]) & (ns.times <= window[1])
    ratio_max = float(np.max(ns.values[sel] * (1.0 + ns.times[sel]) ** min(a, b)))
    return SegelReport(a, b, True, fit, ratio_max)


# ---------------------------------------------------------------------------
# low-frequency algebraic envelope


@dataclass(frozen=True)
class LowBlockReport:
    k_order: float
    s_index: float
    c0: float
    ok: bool


def low_block_envelope(profile: RadialProfile, params: ModelParams, k_order: float,
                       s_index: float, t_grid) -> LowBlockReport:
    """Check E(t) = ||Lambda^k (low block) V||^2 against the closed-form envelope

        E(t) <= (E(0)^{-1/(k+s)} + c0 * t / (k+s))^{-(k+s)}

    i.e. the largest c0 > 0 making it hold on the grid; c0 > 0 certifies the
    algebraic low-frequency decay mechanism.
    """
    evolver = RadialEvolver(profile, params)
    part = field_partition(v_magnitude_field(profile, params))
    exponent = k_order + s_index

    def low_energy(p):
        fld = v_magnitude_field(p, params)
        return fld.block_l2(-1, part, homogeneous=False, lam=k_order) ** 2

    e0 = low_energy(profile)
    ts = np.asarray([t for t in t_grid if t > 0], dtype=float)
    cands = []
    for t in ts:
        et = low_energy(evolver.at(t))
        cands.append((et ** (-1.0 / exponent) - e0 ** (-1.0 / exponent)) * exponent / t)
    c0 = float(np.min(cands))
    return LowBlockReport(k_order, s_index, c0, c0 > 0)
