"""Acceptance criteria: one callable per criterion, shared by CLI verify and pytest.

Each function measures against a pinned target and tolerance and returns a
CriterionResult; nothing here is calibrated at run time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import decay, lp, modal, sim
from .core import Grid, ModelParams, RegimeError


@dataclass
class CriterionResult:
    name: str
    passed: bool
    measured: str
    target: str
    tolerance: str
    runtime: float
    details: dict = dc_field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: measured={self.measured} "
                f"target={self.target} tol={self.tolerance} ({self.runtime:.1f}s)")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (RegimeError, ValueError) as exc:
            return CriterionResult(fn.__name__.replace("criterion_", ""), False,
                                   f"error: {exc}", "-", "-", time.perf_counter() - t0)
        result.runtime = time.perf_counter() - t0
        return result
    wrapper.__name__ = fn.__name__
    return wrapper


# ---------------------------------------------------------------------------
# 1. stability threshold


@_timed
def criterion_stability(cells: int = 100, xi_count: int = 50) -> CriterionResult:
    """Computed stable region equals {tau < beta} up to one grid cell."""
    taus = np.linspace(2.0 / cells, 2.0, cells)
    betas = np.linspace(2.0 / cells, 2.0, cells)
    xis = np.geomspace(1e-2, 1e2, xi_count)
    region = modal.stability_region(taus, betas, xis)
    expected = taus[:, None] < betas[None, :]
    mismatch = region.stable != expected
    cell = taus[1] - taus[0]
    off_boundary = np.abs(taus[:, None] - betas[None, :]) > cell * (1 + 1e-9)
    bad = int(np.sum(mismatch & off_boundary))
    return CriterionResult(
        "stability-threshold", bad == 0,
        f"{bad} off-boundary mismatches ({int(mismatch.sum())} within band)",
        "0 mismatches beyond one cell of tau=beta", "1 grid cell", 0.0,
        {"grid": f"{cells}x{cells}", "xi_samples": xi_count})


# ---------------------------------------------------------------------------
# 2. linear decay exponents


@_timed
def criterion_linear_decay(tau: float = 0.5, beta: float = 1.0) -> CriterionResult:
    """Fitted slopes of ||Lambda^ell V|| within +-0.05 of -3/4 - ell/2."""
    cfg = decay.DecayConfig(tau=tau, beta=beta, ell_list=(0.0, 1.0, 1.5))
    result = decay.linear_decay_experiment(cfg)
    measured = ", ".join(f"l={r.ell:g}:{r.fitted:+.3f}" for r in result.rows)
    targets = ", ".join(f"{r.theory:+.3f}" for r in result.rows)
    return CriterionResult("linear-decay-exponents", result.all_ok, measured,
                           targets, "+-0.05",
                           0.0, {"rows": result.rows})


# ---------------------------------------------------------------------------
# 3. acceleration decay


@_timed
def criterion_w_decay(tau: float = 0.1, beta: float = 1.0) -> CriterionResult:
    """||w||_{B^{3/2}_{2,1}} slope within +-0.1 of -2; -3/2 recorded a fortiori."""
    cfg = decay.DecayConfig(tau=tau, beta=beta, sigma_list=(1.5,))
    result = decay.w_decay_experiment(cfg)
    ok = result.all_ok and result.tau_ok
    measured = ", ".join(f"{r.label}:{r.fitted:+.3f}" for r in result.rows)
    return CriterionResult("w-decay-exponent", ok, measured,
                           "-2.0 (linear), -1.5 (a fortiori)", "+-0.1", 0.0,
                           {"tau_ok": result.tau_ok, "rows": result.rows})


# ---------------------------------------------------------------------------
# 4. mode-wise decay envelope


@_timed
def criterion_envelope(tau: float = 0.5, beta: float = 1.0) -> CriterionResult:
    """A single lam > 0 with abscissa <= -(lam/2) |xi|^2/(1+|xi|^2), no violations."""
    params = ModelParams(tau, beta)
    profile = modal.spectral_abscissa_profile(params)
    lam = profile.lambda_max
    bound = -(lam / 2.0) * modal.rho(profile.xi**2)
    violations = int(np.sum(profile.abscissa > bound + 1e-12 * np.abs(bound)))
    ok = lam > 0 and violations == 0
    return CriterionResult("mode-envelope", ok,
                           f"lam={lam:.4g}, {violations} violations at {profile.xi.size} points",
                           "lam > 0, 0 violations", "exact", 0.0, {"lambda": lam})


# ---------------------------------------------------------------------------
# 5. dyadic-analysis suite


@_timed
def criterion_lpaley(seed: int = 20240) -> CriterionResult:
    rng = np.random.default_rng(seed)
    parts = []

    # partition identity at 1e4 points
    r = np.exp(rng.uniform(np.log(1e-4), np.log(1e4), 10000))
    total = lp.chi_radial(r) + sum(lp.phi_radial(r * 2.0 ** (-q)) for q in range(0, 41))
    ident_err = float(np.abs(total - 1.0).max())
    parts.append(("identity", ident_err < 1e-12, f"{ident_err:.2e}"))

    # block almost-orthogonality: disjoint multiplier supports, exactly
    k = np.geomspace(1e-4, 1e4, 200001)
    worst = max(float(np.max(lp.phi_radial(k * 2.0 ** (-q)) * lp.phi_radial(k * 2.0 ** (-q - 2))))
                for q in range(-10, 11))
    parts.append(("orthogonality", worst == 0.0, f"{worst:.1e}"))

    # Bernstein ratios on 100 random block-limited fields
    grid = Grid(3, 32, 2.0 * np.pi)
    part = lp.DyadicPartition(-2, 6)
    mult = part.block_multiplier(2, grid.kmag)
    ok_bern = True
    worst_ratio = {}
    for _ in range(100):
        spec = (rng.standard_normal(grid.rshape) + 1j * rng.standard_normal(grid.rshape)) * mult
        fld = lp.GridField(grid, grid.irfft(spec))
        for k_ord in (1, 2):
            ratio = lp.bernstein_ratio(fld, k_ord, 2, part)
            lo, hi = (3.0 / 4.0) ** k_ord, (8.0 / 3.0) ** k_ord
            ok_bern &= lo <= ratio <= hi
            key = f"k{k_ord}"
            worst_ratio[key] = max(worst_ratio.get(key, 0.0), ratio)
    parts.append(("bernstein", ok_bern, str({k: round(v, 3) for k, v in worst_ratio.items()})))

    # Minkowski ordering on 20 synthetic trajectories, both directions
    spec_s = 0.5
    ok_mink = True
    for _ in range(20):
        times = np.linspace(0.0, 3.0, 16)
        qs = np.arange(-3, 3)
        vals = rng.uniform(0.1, 1.0, (qs.size, 1)) * \
            np.exp(-rng.uniform(0.1, 1.0, (qs.size, 1)) * times) \
            * (1.0 + 0.3 * np.sin(rng.uniform(0, 6, (qs.size, 1)) * times))
        series = lp.BlockSeries(times, qs, vals)
        # r >= theta gives CL <= L; r <= theta reverses it (equality at r = theta)
        for r_exp, theta, direction in ((np.inf, 2.0, "le"), (2.0, 2.0, "le"),
                                        (1.0, 2.0, "ge"), (2.0, np.inf, "ge"),
                                        (1.0, np.inf, "ge")):
            spec = lp.BesovSpec(s=spec_s, r=r_exp)
            cl = lp.chemin_lerner_norm(series, theta, spec)
            leb = lp.lebesgue_besov_norm(series, theta, spec)
            slack = 1e-12 * max(cl, leb)
            ok_mink &= (cl <= leb + slack) if direction == "le" else (cl >= leb - slack)
    parts.append(("minkowski", ok_mink, "both orderings"))

    # embedding: one constant across a 10-member bump family
    widths = np.geomspace(0.2, 20.0, 10)
    knodes = decay.default_k_nodes(2048)
    ratios = [lp.embedding_ratio(lp.RadialField(knodes, np.exp(-(knodes * wdt) ** 2 / 2.0),
                                                l1=1.0))
              for wdt in widths]
    spread = max(ratios) / min(ratios)
    parts.append(("embedding", np.isfinite(max(ratios)) and spread < 2.0,
                  f"C={max(ratios):.4f}, spread={spread:.4f}"))

    ok = all(p[1] for p in parts)
    measured = "; ".join(f"{n}={'ok' if good else 'BAD'} ({m})" for n, good, m in parts)
    return CriterionResult("littlewood-paley-suite", ok, measured,
                           "identity<1e-12, exact orthogonality, Bernstein bounds, "
                           "Minkowski both ways, bounded embedding constant",
                           "per-part", 0.0, {"parts": parts})


# ---------------------------------------------------------------------------
# 6. solver consistency


@_timed
def criterion_solver(seed: int = 11) -> CriterionResult:
    parts = {}

    # (a) linear-regime match to the mode propagator after 1e3 steps on 32^3
    cfg = sim.SimConfig(dim=3, n=32, box_len=32 * np.pi, tau=0.5, beta=1.0,
                        nl_enabled=False, t_end=0.0, family="random-band",
                        amplitude=1.0, seed=seed, band_lo=1, band_hi=5)
    simulator = sim.Simulator(cfg)
    state, _ = sim.make_initial(cfg)
    u, v, w = state.spectral()
    u0, v0, w0 = u.copy(), v.copy(), w.copy()
    for _ in range(1000):
        u, v, w = simulator.step_spectral(u, v, w)
    t_total = 1000 * simulator.dt
    k2 = simulator.grid.k2
    uniq, inverse = np.unique(k2.ravel(), return_inverse=True)
    mats = modal.PropagatorFactory(uniq, simulator.params).matrices(t_total)
    tables = [mats[:, i, j][inverse].reshape(k2.shape) for i in range(3) for j in range(3)]
    refs = (tables[0] * u0 + tables[1] * v0 + tables[2] * w0,
            tables[3] * u0 + tables[4] * v0 + tables[5] * w0,
            tables[6] * u0 + tables[7] * v0 + tables[8] * w0)
    num = sum(float(np.sum(np.abs(a - b) ** 2)) for a, b in zip((u, v, w), refs))
    den = sum(float(np.sum(np.abs(b) ** 2)) for b in refs)
    linear_err = np.sqrt(num / den)
    parts["linear_match"] = (linear_err <= 1e-9, f"{linear_err:.2e}")

    # (b) Richardson self-convergence order
    def terminal(dt):
        c = sim.SimConfig(dim=1, n=128, box_len=16 * np.pi, tau=0.5, beta=1.0,
                          nl_enabled=True, nl_ratio=3.0, dt=dt, t_end=1.6,
                          family="random-band", amplitude=0.3, seed=7,
                          band_lo=1, band_hi=6, snapshot_stride=10**9)
        return sim.run(c).final_state

    s1, s2, s3 = terminal(0.01), terminal(0.005), terminal(0.0025)
    e1 = np.sqrt(np.sum((s1.w - s2.w) ** 2))
    e2 = np.sqrt(np.sum((s2.w - s3.w) ** 2))
    order = float(np.log2(e1 / e2))
    parts["richardson_order"] = (order >= 3.7, f"{order:.2f}")

    # (c) integral-identity residual shrinks under snapshot-stride halving
    def residual(stride):
        c = sim.SimConfig(dim=1, n=64, box_len=16 * np.pi, tau=0.5, beta=1.0,
                          nl_enabled=True, nl_ratio=3.0, dt=0.005, t_end=1.0,
                          family="random-band", amplitude=0.05, seed=3,
                          snapshot_stride=stride, record_trajectory=True)
        return sim.duhamel_residual(sim.run(c).trajectory, q=-2, ell=0.5).residual

    r16, r8 = residual(16), residual(8)
    ratio = r16 / r8
    parts["duhamel_ratio"] = (ratio >= 3.5, f"{ratio:.2f}")

    ok = all(v[0] for v in parts.values())
    measured = ", ".join(f"{k}={v[1]}" for k, v in parts.items())
    return CriterionResult("solver-consistency", ok, measured,
                           "match<=1e-9, order>=3.7, shrink>=3.5x", "as stated", 0.0,
                           {"parts": parts})


# ---------------------------------------------------------------------------
# 7. small-data boundedness


@_timed
def criterion_boundedness(tau: float = 0.5, beta: float = 1.0,
                          amplitude: float = 1e-3) -> CriterionResult:
    cfg = sim.SimConfig(dim=3, n=64, box_len=64 * np.pi, tau=tau, beta=beta,
                        nl_enabled=True, nl_ratio=3.0, t_end=200.0,
                        family="gaussian-bump", amplitude=amplitude,
                        snapshot_stride=10)
    result = sim.run(cfg)
    e2_0 = result.reports[0].cal_e2
    sup_ratio = np.sqrt(result.sup_e2 / e2_0) if e2_0 > 0 else np.inf
    fit_series = result.series("fit_c")
    half = fit_series.times >= 0.5 * fit_series.times[-1]
    cs = fit_series.values[half]
    c_var = float((cs.max() - cs.min()) / cs.max()) if cs.max() > 0 else 0.0
    ok = sup_ratio <= 2.0 and c_var < 0.10
    return CriterionResult("small-data-boundedness", ok,
                           f"sup E/E(0)={sup_ratio:.4f}, C drift={100 * c_var:.2f}%",
                           "<= 2.0 and < 10%", "as stated", 0.0,
                           {"fit_c": result.fit_c, "initial": result.initial_norms})


# ---------------------------------------------------------------------------
# 8. convolution-integral lemma


@_timed
def criterion_segel() -> CriterionResult:
    cases = ((2.0, 1.5, 0.05), (1.5, 2.0, 0.05), (3.0, 1.2, 0.05))
    rows = []
    ok = True
    for a, b, tol in cases:
        rep = decay.segel_probe(a, b, tolerance=tol)
        rows.append(f"({a:g},{b:g}):{rep.fit.slope:+.3f}")
        ok &= rep.ok
    rep_eq = decay.segel_probe(2.0, 2.0, tolerance=0.1)
    rows.append(f"(2,2):{rep_eq.fit.slope:+.3f}")
    ok &= rep_eq.ok
    return CriterionResult("segel-integral", ok, ", ".join(rows),
                           "-min(a,b) each", "+-0.05 (+-0.1 at a=b)", 0.0)


# ---------------------------------------------------------------------------
# suites


SUITES = {
    "stability": (criterion_stability,),
    "decay": (criterion_linear_decay,),
    "wdecay": (criterion_w_decay,),
    "envelope": (criterion_envelope,),
    "lpaley": (criterion_lpaley,),
    "solver": (criterion_solver,),
    "boundedness": (criterion_boundedness,),
    "segel": (criterion_segel,),
}
SUITES["all"] = tuple(fn for key in
                      ("stability", "decay", "wdecay", "envelope", "lpaley",
                       "solver", "boundedness", "segel")
                      for fn in SUITES[key])

#: criteria that accept (tau, beta) overrides, for negative controls
PARAMETRIC = {criterion_linear_decay, criterion_w_decay, criterion_envelope,
              criterion_boundedness}


def run_suite(name: str, tau: float = None, beta: float = None):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for fn in SUITES[name]:
        if (tau is not None or beta is not None) and fn in PARAMETRIC:
            kwargs = {}
            if tau is not None:
                kwargs["tau"] = tau
            if beta is not None:
                kwargs["beta"] = beta
            results.append(fn(**kwargs))
        else:
            results.append(fn())
    return results
