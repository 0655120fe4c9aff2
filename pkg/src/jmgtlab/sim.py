"""Dealiased pseudo-spectral integration of the full nonlinear system on a torus.

The linear part is advanced exactly per mode with precomputed matrix
exponentials (Lawson splitting); classical RK4 acts on the exponentially
transformed nonlinearity.  All stage slopes live in the acceleration component
only, so propagators are applied to full states (9 entries) but to slopes via
their third column (3 entries).

Torus caveat, recorded in every run artifact: the spectral gap at the
fundamental mode makes non-mean modes decay exponentially here, so algebraic
whole-space decay rates are *not* expected on the box; those live in the
radial decay experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft as sfft

from .core import (Grid, InvalidParameterError, ModelParams, State,
                   fft_workers, validate_params)
from .lp import DyadicPartition, NormSeries
from .modal import PropagatorFactory

TORUS_CAVEAT = ("periodic box: non-mean modes decay exponentially (spectral gap); "
                "algebraic whole-space rates are out of reach here by design")

DT_SAFETY = 0.8


class DivergenceError(RuntimeError):
    """Raised when the solution leaves the finite / bounded regime."""

    def __init__(self, message, t, last_norms=None):
        super().__init__(message)
        self.t = t
        self.last_norms = last_norms or {}


@dataclass
class SimConfig:
    """One simulation run: box, physics, timestep, initial data, tracking."""

    dim: int = 1
    n: int = 64
    box_len: float = 2.0 * math.pi
    tau: float = 0.5
    beta: float = 1.0
    nl_ratio: float = 1.0
    nl_enabled: bool = True
    dt: float = 0.0            # 0 selects the stability-rule maximum
    t_end: float = 10.0
    family: str = "gaussian-bump"
    amplitude: float = 1e-3
    width: float = 0.0         # gaussian-bump width; 0 selects box_len/16
    mode_index: int = 1        # single-mode initial wavenumber (units of 2 pi / L)
    band_lo: int = 1
    band_hi: int = 4
    seed: int = 1234
    snapshot_stride: int = 10
    record_trajectory: bool = False

    def grid(self) -> Grid:
        return Grid(self.dim, self.n, self.box_len)

    def params(self) -> ModelParams:
        return validate_params(ModelParams(self.tau, self.beta, 1.0,
                                           self.nl_ratio, self.nl_enabled))


def dt_max(grid: Grid, params: ModelParams) -> float:
    """Timestep rule resolving the relaxation scale and the fastest damped wave:
    dt <= 0.8 * min(tau/2, 0.5 / (beta * k_max^2)) with k_max after dealiasing."""
    m_max = math.floor(grid.n / 3.0)
    k_max2 = grid.dim * (grid.k_fundamental * m_max) ** 2
    return DT_SAFETY * min(params.tau / 2.0, 0.5 / (params.beta * k_max2))


# ---------------------------------------------------------------------------
# initial data


def make_initial(cfg: SimConfig):
    """Build the initial state of the named family, dealiased, with its norms.

    Returns (state, norms) where norms records the energy norm and the
    inhomogeneous dyadic norm of the data so run smallness is documented.
    """
    grid = cfg.grid()
    params = cfg.params()
    eps = cfg.amplitude
    if eps < 0:
        raise InvalidParameterError("amplitude must be >= 0")
    coords = grid.coords()
    if cfg.family == "gaussian-bump":
        width = cfg.width if cfg.width > 0 else grid.box_len / 16.0
        r2 = sum((x - grid.box_len / 2.0) ** 2 for x in coords)
        bump = np.exp(-r2 / (2.0 * width**2)) * np.ones(grid.shape)
        u, v, w = eps * bump, eps * bump, np.zeros(grid.shape)
    elif cfg.family == "single-mode":
        k0 = cfg.mode_index * grid.k_fundamental
        phase = k0 * np.broadcast_to(coords[0], grid.shape)
        u, v, w = eps * np.sin(phase), eps * np.cos(phase), np.zeros(grid.shape)
    elif cfg.family == "random-band":
        rng = np.random.default_rng(cfg.seed)
        kmag = grid.kmag
        band = (kmag >= cfg.band_lo * grid.k_fundamental) & \
               (kmag <= cfg.band_hi * grid.k_fundamental)

        def noise():
            f = grid.rfft(rng.standard_normal(grid.shape))
            f *= band
            phys = grid.irfft(f)
            peak = np.max(np.abs(phys))
            return phys * (eps / peak) if peak > 0 else phys

        u, v, w = noise(), noise(), noise()
    else:
        raise InvalidParameterError(f"unknown initial-data family {cfg.family!r}")

    state = State(grid, u, v, w, t=0.0)
    _dealias_state(state)
    norms = initial_norms(state, params)
    return state, norms


def _dealias_state(state: State):
    g = state.grid
    for name in ("u", "v", "w"):
        spec = g.rfft(getattr(state, name))
        spec *= g.dealias_mask
        setattr(state, name, g.irfft(spec))


def initial_norms(state: State, params: ModelParams) -> dict:
    uh, vh, wh = state.spectral()
    tracker = EnergyTracker(state.grid, params)
    rep = tracker.report(0.0, uh, vh, wh)
    bnorm = math.sqrt(rep.cal_e2) + tracker.dyadic_combo_norm(uh, vh, wh, s=1.5)
    return {"cal_e2": rep.cal_e2, "besov_3_2": bnorm, "m0": rep.m0,
            "torus_caveat": TORUS_CAVEAT}


# ---------------------------------------------------------------------------
# energy bookkeeping


@dataclass
class EnergyReport:
    """Instantaneous + accumulated functionals at one snapshot time."""

    t: float
    cal_e2: float              # seven-term energy integrand
    cal_d2_integrand: float    # five-term dissipation integrand
    cal_d2_cum: float          # running time integral of the above
    m0: float                  # running sup of the five sup-norms
    besov_terms: dict          # running Chemin-Lerner pieces of the dyadic functional
    m_total: float
    fit_c: float               # smallest constant closing the energy inequality so far
    e_terms: tuple
    d_terms: tuple


# (field key, Lambda power, dyadic weight s) of the tracked dyadic functional
_M_TERMS = (
    ("hess_u_b12", "u", 2.0, 0.5),
    ("hess_u_b32", "u", 2.0, 1.5),
    ("v_b12", "v", 0.0, 0.5),
    ("grad_v_b12", "v", 1.0, 0.5),
    ("hess_v_b12", "v", 2.0, 0.5),
    ("w_b12", "w", 0.0, 0.5),
    ("grad_w_b12", "w", 1.0, 0.5),
)


class EnergyTracker:
    """Accumulates sups, time integrals and per-block functionals along a run."""

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params
        kmin = grid.k_fundamental
        kmax = float(grid.kmag.max())
        self.partition = DyadicPartition(math.floor(math.log2(kmin)) - 1,
                                         max(math.ceil(math.log2(kmax)), 1))
        self.qs = np.array(list(self.partition.qs))
        self._block_mults = [self.partition.phi(grid.kmag * 2.0 ** (-q)) for q in self.qs]
        scale = grid.box_len**grid.dim / float(grid.n) ** (2 * grid.dim)
        self._pw = scale * grid.plancherel_weight
        # running accumulators
        self.sup_e2 = 0.0
        self.d2_cum = 0.0
        self.m0 = 0.0
        self.fit_c = 0.0
        self._cl_max = {key: np.zeros(self.qs.size) for key, *_ in _M_TERMS}
        self.block_energy = np.zeros(self.qs.size)      # per-block running sup
        self.block_d2_cum = np.zeros(self.qs.size)
        self._last = None  # (t, d2_integrand, block_d2_integrand)
        self.e2_0 = None

    # -- plain norms ---------------------------------------------------------

    def _sq(self, spec, mult=None) -> float:
        a2 = np.abs(spec) ** 2 if mult is None else (mult * np.abs(spec)) ** 2
        return float(np.sum(self._pw * a2))

    def _sup(self, spec) -> float:
        return float(np.max(np.abs(self.grid.irfft(spec))))

    def _grad_sup(self, spec) -> float:
        g2 = np.zeros(self.grid.shape)
        for k in self.grid.kvec:
            g2 += self.grid.irfft(1j * k * spec) ** 2
        return float(np.sqrt(np.max(g2)))

    def dyadic_combo_norm(self, uh, vh, wh, s: float) -> float:
        """Sum of homogeneous B^s_{2,1} norms of the seven tracked combinations."""
        tau = self.params.tau
        km, k2 = self.grid.kmag, self.grid.k2
        combos = (vh + tau * wh, km * (vh + tau * wh), k2 * vh, km * vh,
                  k2 * (uh + tau * vh), km * (uh + tau * vh), wh)
        total = 0.0
        for spec in combos:
            blocks = [math.sqrt(self._sq(spec, m)) for m in self._block_mults]
            total += float(np.sum(2.0 ** (self.qs * s) * np.asarray(blocks)))
        return total

    # -- the report ----------------------------------------------------------

    def report(self, t: float, uh, vh, wh) -> EnergyReport:
        g = self.grid
        tau = self.params.tau
        km, k2 = g.kmag, g.k2
        a = vh + tau * wh          # v + tau w
        b = uh + tau * vh          # u + tau v
        e_terms = (self._sq(a), self._sq(a, km), self._sq(vh, k2), self._sq(vh, km),
                   self._sq(b, k2), self._sq(b, km), self._sq(wh))
        d_terms = (self._sq(vh, km), self._sq(vh, k2), self._sq(wh),
                   self._sq(b, k2), self._sq(a, km))
        cal_e2 = float(sum(e_terms))
        d2_int = float(sum(d_terms))
        if not np.isfinite(cal_e2) or not np.isfinite(d2_int):
            raise DivergenceError("non-finite energy", t, {"cal_e2": cal_e2})

        m0_now = (self._sup(vh) + self._sup(a) + self._grad_sup(b)
                  + self._grad_sup(uh) + self._grad_sup(vh))

        # per-block localized energy / dissipation (same seven and five terms)
        blocks_e = np.zeros(self.qs.size)
        blocks_d = np.zeros(self.qs.size)
        for i, m in enumerate(self._block_mults):
            blocks_e[i] = (self._sq(a, m) + self._sq(a, m * km) + self._sq(vh, m * k2)
                           + self._sq(vh, m * km) + self._sq(b, m * k2)
                           + self._sq(b, m * km) + self._sq(wh, m))
            blocks_d[i] = (self._sq(vh, m * km) + self._sq(vh, m * k2) + self._sq(wh, m)
                           + self._sq(b, m * k2) + self._sq(a, m * km))

        # Chemin-Lerner running sup per block of the tracked dyadic functional
        specs = {"u": uh, "v": vh, "w": wh}
        for key, fld, lam, _s in _M_TERMS:
            spec = specs[fld]
            w_lam = km**lam if lam else 1.0
            vals = np.array([math.sqrt(self._sq(spec, m * w_lam)) for m in self._block_mults])
            np.maximum(self._cl_max[key], vals, out=self._cl_max[key])

        # accumulate integrals (trapezoid between snapshots)
        if self.e2_0 is None:
            self.e2_0 = cal_e2
        if self._last is not None:
            t0, d0, bd0 = self._last
            h = t - t0
            self.d2_cum += 0.5 * h * (d0 + d2_int)
            self.block_d2_cum += 0.5 * h * (bd0 + blocks_d)
        self._last = (t, d2_int, blocks_d)
        self.sup_e2 = max(self.sup_e2, cal_e2)
        self.m0 = max(self.m0, m0_now)
        np.maximum(self.block_energy, blocks_e, out=self.block_energy)

        besov_terms = {key: float(np.sum(2.0 ** (self.qs * s) * self._cl_max[key]))
                       for key, _f, _l, s in _M_TERMS}
        m_total = float(sum(besov_terms.values()))

        if self.d2_cum > 0:
            gain = self.sup_e2 + self.d2_cum - self.e2_0
            cand = max(0.0, gain) / ((math.sqrt(self.sup_e2) + self.m0) * self.d2_cum)
            self.fit_c = max(self.fit_c, cand)

        return EnergyReport(t, cal_e2, d2_int, self.d2_cum, self.m0, besov_terms,
                            m_total, self.fit_c, e_terms, d_terms)


# ---------------------------------------------------------------------------
# the integrator


@dataclass
class Trajectory:
    """Spectral snapshots plus recorded forcings, for integral-identity replay."""

    grid: Grid
    params: ModelParams
    times: list
    states: list      # (3, *rshape) complex stacks
    forcings: list    # w-equation nonlinear term in Fourier space (already / tau)


class Simulator:
    """Lawson exponential-RK4 stepping of one configured run."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.params = cfg.params()
        limit = dt_max(self.grid, self.params)
        if cfg.dt > 0:
            self.dt = cfg.dt
        else:
            # largest rule-compliant step that divides t_end evenly
            n = max(1, math.ceil(cfg.t_end / limit)) if cfg.t_end > 0 else 1
            self.dt = cfg.t_end / n if cfg.t_end > 0 else limit
        if self.dt > limit * (1 + 1e-12):
            raise InvalidParameterError(
                f"dt={cfg.dt} exceeds the stability rule maximum {limit:.6g}")
        k2 = self.grid.k2
        uniq, inverse = np.unique(k2.ravel(), return_inverse=True)
        fac = PropagatorFactory(uniq, self.params)

        def tables(t):
            mats = fac.matrices(t)
            return [mats[:, i, j][inverse].reshape(k2.shape) for i in range(3) for j in range(3)]

        self._e_full = tables(self.dt)        # e^{dt Phi}, 9 gathered entries
        self._e_half = tables(self.dt / 2.0)  # e^{dt/2 Phi}
        self._mask = self.grid.dealias_mask

    # -- spectral helpers ----------------------------------------------------

    def _apply(self, table, u, v, w):
        return (table[0] * u + table[1] * v + table[2] * w,
                table[3] * u + table[4] * v + table[5] * w,
                table[6] * u + table[7] * v + table[8] * w)

    def _apply_col(self, table, f):
        """Propagate a slope vector (0, 0, f): only the third column acts."""
        return table[2] * f, table[5] * f, table[8] * f

    def _forcing(self, u, v, w):
        """Nonlinear w-slope in Fourier space, dealiased, divided by tau."""
        g = self.grid
        wk = fft_workers()
        vp = sfft.irfftn(v, s=g.shape, workers=wk)
        wp = sfft.irfftn(w, s=g.shape, workers=wk)
        f = self.params.nl_ratio * vp * wp
        for k in g.kvec:
            gu = sfft.irfftn(1j * k * u, s=g.shape, workers=wk)
            gv = sfft.irfftn(1j * k * v, s=g.shape, workers=wk)
            f += 2.0 * gu * gv
        fh = sfft.rfftn(f, workers=wk)
        fh *= self._mask
        fh /= self.params.tau
        return fh

    def step_spectral(self, u, v, w):
        """One Lawson-RK4 step on rfft arrays; returns the advanced triple."""
        dt = self.dt
        if not self.params.nl_enabled:
            return self._apply(self._e_full, u, v, w)
        eu = self._apply(self._e_full, u, v, w)
        e2u = self._apply(self._e_half, u, v, w)
        k1 = self._forcing(u, v, w)
        k1h = self._apply_col(self._e_half, k1)
        s2 = (e2u[0] + 0.5 * dt * k1h[0], e2u[1] + 0.5 * dt * k1h[1],
              e2u[2] + 0.5 * dt * k1h[2])
        k2 = self._forcing(*s2)
        s3 = (e2u[0], e2u[1], e2u[2] + 0.5 * dt * k2)
        k3 = self._forcing(*s3)
        k3h = self._apply_col(self._e_half, k3)
        s4 = (eu[0] + dt * k3h[0], eu[1] + dt * k3h[1], eu[2] + dt * k3h[2])
        k4 = self._forcing(*s4)
        k1e = self._apply_col(self._e_full, k1)
        k23 = self._apply_col(self._e_half, k2 + k3)
        return (eu[0] + dt / 6.0 * (k1e[0] + 2.0 * k23[0]),
                eu[1] + dt / 6.0 * (k1e[1] + 2.0 * k23[1]),
                eu[2] + dt / 6.0 * (k1e[2] + 2.0 * k23[2] + k4))

    def step(self, state: State) -> State:
        """Physical-space convenience wrapper around one spectral step."""
        g = self.grid
        u, v, w = self.step_spectral(*state.spectral())
        out = State(g, g.irfft(u), g.irfft(v), g.irfft(w), state.t + self.dt)
        if not (np.all(np.isfinite(out.w)) and np.all(np.isfinite(out.v))):
            raise DivergenceError("non-finite field after step", out.t)
        return out


@dataclass
class RunResult:
    cfg: SimConfig
    grid: Grid
    params: ModelParams
    reports: list
    final_state: State
    initial_norms: dict
    sup_e2: float
    cal_d2: float
    fit_c: float
    tracker: EnergyTracker = dc_field(repr=False, default=None)
    trajectory: Trajectory = dc_field(repr=False, default=None)

    def series(self, key: str) -> NormSeries:
        """Norm series by report attribute name (cal_e2, cal_d2_cum, m0, ...)."""
        t = np.array([r.t for r in self.reports])
        vals = np.array([getattr(r, key) for r in self.reports])
        return NormSeries(t, vals, key)


def run(cfg: SimConfig) -> RunResult:
    """Advance to t_end (or divergence), reporting at the snapshot stride."""
    simulator = Simulator(cfg)
    grid, params = simulator.grid, simulator.params
    state, init_norms = make_initial(cfg)
    u, v, w = state.spectral()
    tracker = EnergyTracker(grid, params)
    reports = [tracker.report(0.0, u, v, w)]
    traj = None
    if cfg.record_trajectory:
        traj = Trajectory(grid, params, [0.0], [np.stack([u, v, w])],
                          [simulator._forcing(u, v, w) if params.nl_enabled
                           else np.zeros_like(u)])
    n_steps = int(round(cfg.t_end / simulator.dt))
    e2_floor = max(reports[0].cal_e2, 1e-300)
    t = 0.0
    for istep in range(1, n_steps + 1):
        u, v, w = simulator.step_spectral(u, v, w)
        t = istep * simulator.dt
        if not np.all(np.isfinite(w)):
            raise DivergenceError("non-finite field", t,
                                  {"cal_e2": reports[-1].cal_e2, "t_last": reports[-1].t})
        if istep % cfg.snapshot_stride == 0 or istep == n_steps:
            rep = tracker.report(t, u, v, w)
            reports.append(rep)
            if rep.cal_e2 > 1e6 * e2_floor:
                raise DivergenceError(
                    f"energy grew past 1e6 x initial at t={t:.3g}", t,
                    {"cal_e2": rep.cal_e2})
            if traj is not None:
                traj.times.append(t)
                traj.states.append(np.stack([u, v, w]))
                traj.forcings.append(simulator._forcing(u, v, w)
                                     if params.nl_enabled else np.zeros_like(u))
    final = State(grid, grid.irfft(u), grid.irfft(v), grid.irfft(w), t)
    return RunResult(cfg, grid, params, reports, final, init_norms,
                     tracker.sup_e2, tracker.d2_cum, tracker.fit_c, tracker, traj)


# ---------------------------------------------------------------------------
# integral-identity replay (frequency-localized Duhamel reconstruction)


@dataclass(frozen=True)
class DuhamelResult:
    residual: float
    n_snapshots: int
    accuracy_warning: bool
    empty_block: bool = False


def duhamel_residual(traj: Trajectory, q: int, ell: float,
                     homogeneous: bool = True) -> DuhamelResult:
    """Reconstruct the block-filtered final state from the integral identity.

    The final Delta_q Lambda^ell U must equal the exactly-propagated data plus
    the trapezoid-in-time convolution of the propagated forcings; the relative
    L2 defect converges at the quadrature order as snapshots densify.
    """
    grid, params = traj.grid, traj.params
    times = np.asarray(traj.times)
    if times.size < 2:
        raise ValueError("need at least two snapshots to replay the identity")
    warn = times.size < 5
    t_final = times[-1]
    k2 = grid.k2
    uniq, inverse = np.unique(k2.ravel(), return_inverse=True)
    fac = PropagatorFactory(uniq, params)

    def gathered(tlag):
        mats = fac.matrices(tlag)
        return [mats[:, i, j][inverse].reshape(k2.shape) for i in range(3) for j in range(3)]

    # exactly propagated initial data
    full = gathered(t_final)
    s0 = traj.states[0]
    recon = np.stack([full[3 * i] * s0[0] + full[3 * i + 1] * s0[1] + full[3 * i + 2] * s0[2]
                      for i in range(3)])
    # trapezoid over propagated forcings (third component sources)
    weights = np.zeros(times.size)
    weights[1:] += 0.5 * np.diff(times)
    weights[:-1] += 0.5 * np.diff(times)
    for j, (r, fh) in enumerate(zip(times, traj.forcings)):
        cols = gathered(t_final - r)
        recon[0] += weights[j] * cols[2] * fh
        recon[1] += weights[j] * cols[5] * fh
        recon[2] += weights[j] * cols[8] * fh

    qr = max(abs(q) + 2, 3)
    part = DyadicPartition(-qr, qr)
    mult = part.block_multiplier(q, grid.kmag, homogeneous)
    lam_w = np.where(grid.kmag > 0, np.where(grid.kmag > 0, grid.kmag, 1.0) ** ell, 0.0) \
        if ell else 1.0
    target = traj.states[-1]
    diff2 = 0.0
    ref2 = 0.0
    pw = grid.plancherel_weight
    for i in range(3):
        d = (recon[i] - target[i]) * mult * lam_w
        r = target[i] * mult * lam_w
        diff2 += float(np.sum(pw * np.abs(d) ** 2))
        ref2 += float(np.sum(pw * np.abs(r) ** 2))
    if ref2 == 0.0:
        return DuhamelResult(0.0 if diff2 == 0.0 else np.inf, times.size, warn,
                             empty_block=True)
    return DuhamelResult(math.sqrt(diff2 / ref2), times.size, warn)
