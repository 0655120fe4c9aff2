"""Exact linear theory per Fourier mode.

Each mode |xi| of the first-order system is governed by a 3x3 real matrix whose
eigenvalues decide stability.  This module builds the matrix, solves its
spectrum (companion eigen-solve, uniformly accurate near repeated roots),
exponentiates it, and verifies the decay envelope exp(-lam*|xi|^2/(1+|xi|^2)*t)
mode by mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import ModelParams, RegimeError

#: degeneracy threshold relative to the largest root magnitude
DEGENERACY_RTOL = 1e-8

#: wider switch band for the propagator: defective matrices perturb their
#: roots by ~sqrt(machine eps), so the 1e-8 flag can miss them while the
#: eigenvector matrix is already too ill-conditioned to exponentiate through
PROPAGATOR_SWITCH_RTOL = 1e-6

#: default |xi| grid resolving both asymptotic regimes of |xi|^2/(1+|xi|^2)
DEFAULT_XI_GRID = (1e-3, 1e3, 400)


def rho(xi2):
    """Frequency weight |xi|^2 / (1 + |xi|^2) interpolating k^2 and constant damping."""
    return xi2 / (1.0 + xi2)


# ---------------------------------------------------------------------------
# symbol matrix and spectrum


@dataclass(frozen=True)
class SymbolMatrix:
    """The 3x3 mode matrix at squared wavenumber xi2."""

    entries: np.ndarray
    xi2: float
    params: ModelParams


def _matrices(xi2, params: ModelParams):
    """Stack of mode matrices for an array of xi2 values, shape (M, 3, 3)."""
    xi2 = np.asarray(xi2, dtype=float)
    m = np.zeros(xi2.shape + (3, 3))
    m[..., 0, 1] = 1.0
    m[..., 1, 2] = 1.0
    m[..., 2, 0] = -xi2 / params.tau
    m[..., 2, 1] = -params.beta * xi2 / params.tau
    m[..., 2, 2] = -1.0 / params.tau
    return m


def symbol_matrix(xi2: float, params: ModelParams) -> SymbolMatrix:
    if not np.isfinite(xi2) or xi2 < 0:
        raise ValueError(f"xi2 must be finite and >= 0, got {xi2}")
    return SymbolMatrix(_matrices(float(xi2), params), float(xi2), params)


def _sorted_eig(mats):
    """Batched eigen-decomposition sorted by real part (desc), then imag (desc)."""
    vals, vecs = np.linalg.eig(mats)
    order = np.lexsort((-vals.imag, -vals.real))
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    return vals, vecs


def _degenerate_mask(roots, rtol=DEGENERACY_RTOL):
    """True where the minimal pairwise root distance drops below the threshold."""
    d01 = np.abs(roots[..., 0] - roots[..., 1])
    d02 = np.abs(roots[..., 0] - roots[..., 2])
    d12 = np.abs(roots[..., 1] - roots[..., 2])
    dmin = np.minimum(np.minimum(d01, d02), d12)
    scale = np.max(np.abs(roots), axis=-1)
    return dmin < rtol * scale


@dataclass(frozen=True)
class ModeSpectrum:
    """Eigenvalues of one mode matrix, sorted by real part descending."""

    roots: np.ndarray  # 3 complex values
    abscissa: float
    degenerate: bool


def mode_spectrum(m: SymbolMatrix) -> ModeSpectrum:
    roots, _ = _sorted_eig(m.entries[None])
    roots = roots[0]
    return ModeSpectrum(roots, float(roots.real.max()), bool(_degenerate_mask(roots[None])[0]))


def spectrum_batch(xi2, params: ModelParams):
    """(roots, abscissa, degenerate) arrays for a vector of xi2 values."""
    roots, _ = _sorted_eig(_matrices(xi2, params))
    return roots, roots.real.max(axis=-1), _degenerate_mask(roots)


# ---------------------------------------------------------------------------
# propagator


@dataclass(frozen=True)
class ModePropagator:
    """exp(t * Phi) for one mode, with the method actually used."""

    matrix: np.ndarray
    t: float
    method: str  # "eigen" or "squaring"
    xi2: float


class PropagatorFactory:
    """Propagator matrices for a family of modes sharing the same params.

    Non-degenerate modes use the eigen-decomposition V exp(t L) V^-1; modes
    whose roots nearly coincide (ill-conditioned eigenvectors) fall back to
    scaling-and-squaring Pade (scipy.linalg.expm).  This is the single code
    path shared by the solver, the whole-space evolution and the envelopes.
    """

    def __init__(self, xi2, params: ModelParams):
        self.xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
        if np.any(self.xi2 < 0) or not np.all(np.isfinite(self.xi2)):
            raise ValueError("xi2 values must be finite and >= 0")
        self.params = params
        self.mats = _matrices(self.xi2, params)
        vals, vecs = _sorted_eig(self.mats)
        self.roots = vals
        self.degenerate = _degenerate_mask(vals)
        self._squaring = _degenerate_mask(vals, PROPAGATOR_SWITCH_RTOL)
        # keep the eigen factorization invertible where it is actually used
        safe_vecs = vecs.copy()
        safe_vecs[self._squaring] = np.eye(3)
        self._vecs = safe_vecs
        self._vecs_inv = np.linalg.inv(safe_vecs)

    def matrices(self, t: float):
        """Stack exp(t*Phi_i), shape (M, 3, 3), real."""
        if t < 0:
            raise ValueError("propagator requires t >= 0")
        growth = np.exp(self.roots * t)
        p = np.einsum("mij,mj,mjk->mik", self._vecs, growth, self._vecs_inv)
        p = p.real
        for idx in np.nonzero(self._squaring)[0]:
            p[idx] = scipy.linalg.expm(self.mats[idx] * t)
        return p

    def apply(self, t: float, modes):
        """Advance a stack of mode triples, shape (M, 3) complex."""
        return np.einsum("mij,mj->mi", self.matrices(t), modes)


def propagator(m: SymbolMatrix, t: float) -> ModePropagator:
    fac = PropagatorFactory([m.xi2], m.params)
    method = "squaring" if fac._squaring[0] else "eigen"
    return ModePropagator(fac.matrices(t)[0], float(t), method, m.xi2)


# ---------------------------------------------------------------------------
# abscissa profile and the decay-envelope constant


@dataclass(frozen=True)
class AbscissaProfile:
    """Spectral abscissa over a |xi| grid plus the fitted envelope constant.

    lambda_max is the largest lam > 0 with abscissa <= -(lam/2)*rho(xi) on the
    grid; lambda_envelope halves it as a safety margin for trajectory checks.
    """

    xi: np.ndarray
    abscissa: np.ndarray
    lambda_max: float
    lambda_envelope: float
    params: ModelParams = field(repr=False, default=None)


def spectral_abscissa_profile(params: ModelParams, xi_grid=None) -> AbscissaProfile:
    if not params.dissipative_regime():
        raise RegimeError(f"abscissa profile requires tau < beta, got regime {params.regime}")
    if xi_grid is None:
        lo, hi, count = DEFAULT_XI_GRID
        xi_grid = np.geomspace(lo, hi, count)
    xi = np.asarray(xi_grid, dtype=float)
    if xi.size == 0:
        raise ValueError("xi grid is empty")
    if np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
        raise ValueError("xi grid must be positive and strictly increasing")
    _, absc, _ = spectrum_batch(xi**2, params)
    ratios = -absc / rho(xi**2)
    lam_max = 2.0 * float(ratios.min())
    if lam_max <= 0:
        raise RegimeError("no positive envelope constant: some mode fails to decay")
    return AbscissaProfile(xi, absc, lam_max, lam_max / 2.0, params)


@dataclass(frozen=True)
class StabilityRegion:
    tau_values: np.ndarray
    beta_values: np.ndarray
    stable: np.ndarray  # bool, shape (len(tau), len(beta))
    max_abscissa: np.ndarray
    worst_xi: np.ndarray


def stability_region(tau_range, beta_range, xi_samples) -> StabilityRegion:
    """Stability classification over a (tau, beta) grid.

    A cell is stable iff the spectral abscissa is negative for every sampled
    |xi| > 0.  The expected boundary is the line tau = beta.
    """
    taus = np.asarray(tau_range, dtype=float)
    betas = np.asarray(beta_range, dtype=float)
    xis = np.asarray(xi_samples, dtype=float)
    if np.any(taus <= 0) or np.any(betas <= 0) or np.any(xis <= 0):
        raise ValueError("tau, beta and xi samples must be positive")
    xi2 = xis**2
    # characteristic cubic tau*l^3 + l^2 + beta*xi2*l + xi2 == det(Phi - l I),
    # solved as the eigenproblem of the stacked companion matrices
    t_g, b_g, x_g = np.meshgrid(taus, betas, xi2, indexing="ij")
    mats = np.zeros(t_g.shape + (3, 3))
    mats[..., 0, 1] = 1.0
    mats[..., 1, 2] = 1.0
    mats[..., 2, 0] = -x_g / t_g
    mats[..., 2, 1] = -b_g * x_g / t_g
    mats[..., 2, 2] = -1.0 / t_g
    vals = np.linalg.eigvals(mats.reshape(-1, 3, 3)).reshape(t_g.shape + (3,))
    absc = vals.real.max(axis=-1)  # (T, B, X)
    worst = absc.argmax(axis=-1)
    max_absc = np.take_along_axis(absc, worst[..., None], axis=-1)[..., 0]
    return StabilityRegion(taus, betas, max_absc < 0, max_absc, xis[worst])


# ---------------------------------------------------------------------------
# mode energy and envelopes


def mode_energy_e1(mode, xi2: float, params: ModelParams):
    """Quadratic mode energy 0.5*(|v+tau*w|^2 + tau*(beta-tau)*xi2*|v|^2 + xi2*|u+tau*v|^2).

    Positive semidefinite only for tau < beta, hence the regime guard.
    """
    if not params.dissipative_regime():
        raise RegimeError("mode energy form is not positive semidefinite for tau >= beta")
    u, v, w = mode
    tau, beta = params.tau, params.beta
    val = (
        np.abs(v + tau * w) ** 2
        + tau * (beta - tau) * xi2 * np.abs(v) ** 2
        + xi2 * np.abs(u + tau * v) ** 2
    )
    return 0.5 * val


def mode_vnorm2(mode, xi2: float, tau: float):
    """|V-hat|^2 of a single mode: |v+tau*w|^2 + xi2*|u+tau*v|^2 + xi2*|v|^2."""
    u, v, w = mode
    return (
        np.abs(v + tau * w) ** 2
        + xi2 * np.abs(u + tau * v) ** 2
        + xi2 * np.abs(v) ** 2
    )


def _evolve_mode(mode0, params, xi2, t_grid):
    """Trajectory of one mode triple over t_grid, shape (T, 3) complex."""
    fac = PropagatorFactory([xi2], params)
    m0 = np.asarray(mode0, dtype=complex)
    return np.stack([fac.apply(t, m0[None])[0] for t in t_grid])


@dataclass(frozen=True)
class EnvelopeReport:
    """Per-mode decay check |V(t)|^2 <= C exp(-lam*rho*t) |V(0)|^2."""

    xi2: float
    lam: float
    rho: float
    c_fit: float
    slope: float
    slope_bound: float
    ok: bool


def envelope_check(mode0, params: ModelParams, xi2: float, t_grid,
                   profile: AbscissaProfile = None, slope_rtol: float = 0.05) -> EnvelopeReport:
    """Evolve one mode and fit the smallest envelope constant.

    The decay constant comes from the abscissa profile (safety-margin value);
    the slope of log|V| over the late half of the grid must not exceed
    -lam*rho/2 beyond the stated tolerance.
    """
    if profile is None:
        profile = spectral_abscissa_profile(params)
    lam = profile.lambda_envelope
    r = rho(xi2)
    t = np.asarray(t_grid, dtype=float)
    traj = _evolve_mode(mode0, params, xi2, t)
    vn2 = np.array([mode_vnorm2(m, xi2, params.tau) for m in traj])
    v0 = vn2[0]
    if v0 == 0:
        return EnvelopeReport(xi2, lam, r, 0.0, 0.0, 0.0, True)
    ratio = vn2 / v0 * np.exp(lam * r * t)
    c_fit = float(ratio.max())
    # decay-rate fit on the late half (where transients have died out)
    half = t >= 0.5 * t[-1]
    logv = 0.5 * np.log(np.maximum(vn2[half], 1e-300))
    slope = float(np.polyfit(t[half], logv, 1)[0])
    bound = -lam * r / 2.0
    ok = np.isfinite(c_fit) and slope <= bound + slope_rtol * abs(bound)
    return EnvelopeReport(xi2, lam, r, c_fit, slope, bound, ok)


@dataclass(frozen=True)
class WEnvelopeReport:
    """Acceleration-mode bound |w(t)|^2 <= |w0|^2 e^(-t/tau) + C xi2 |V0|^2 e^(-lam rho t)."""

    xi2: float
    lam: float
    c_fit: float
    c_fit_refined: float
    tau_ok: bool  # small-relaxation precondition tau < 1/lam
    ok: bool


def w_envelope_check(mode0, params: ModelParams, xi2: float, t_grid,
                     profile: AbscissaProfile = None) -> WEnvelopeReport:
    """Smallest constant making the two-term acceleration bound hold on t_grid.

    tau >= 1/lam only flags the report (precondition violated); the bound is
    still evaluated.  The constant is recomputed on a refined grid to confirm
    it is not a sampling artifact.
    """
    if profile is None:
        profile = spectral_abscissa_profile(params)
    lam = profile.lambda_envelope
    tau_ok = params.tau < 1.0 / lam
    m0 = np.asarray(mode0, dtype=complex)
    v0sq = float(mode_vnorm2(m0, xi2, params.tau))
    w0sq = float(np.abs(m0[2]) ** 2)

    def smallest_c(ts):
        traj = _evolve_mode(m0, params, xi2, ts)
        wsq = np.abs(traj[:, 2]) ** 2
        first = w0sq * np.exp(-ts / params.tau)
        if xi2 == 0.0 or v0sq == 0.0:
            # decoupled scalar decay: second term unnecessary
            defect = wsq - first
            return 0.0 if np.all(defect <= 1e-12 * max(w0sq, 1e-300)) else np.inf
        second = xi2 * v0sq * np.exp(-lam * rho(xi2) * ts)
        return float(np.max(np.maximum(wsq - first, 0.0) / second))

    t = np.asarray(t_grid, dtype=float)
    c1 = smallest_c(t)
    t_fine = np.sort(np.concatenate([t, 0.5 * (t[:-1] + t[1:])]))
    c2 = smallest_c(t_fine)
    stable = np.isfinite(c1) and np.isfinite(c2) and abs(c2 - c1) <= 0.1 * max(c1, 1.0)
    return WEnvelopeReport(xi2, lam, c1, c2, tau_ok, bool(stable))
