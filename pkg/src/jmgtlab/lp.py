"""Dyadic partition of unity, frequency blocks, and Besov-type norms (p = 2 only).

The annulus bump is built as phi(xi) = chi(xi/2) - chi(xi) from a mollified
radial indicator chi, so the telescoping identities

    chi(xi) + sum_{q>=0} phi(2^-q xi) = 1,      sum_{q in Z} phi(2^-q xi) = 1

hold exactly by construction instead of only approximately.  All block norms
are Plancherel integrals: on the torus they are weighted mode sums, for
whole-space radial profiles they are 1D quadratures with weight 4*pi*k^2 dk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .core import Grid

CHI_BALL = 4.0 / 3.0        # chi supported in |xi| <= 4/3
ANNULUS_HI = 8.0 / 3.0      # phi vanishes for |xi| >= 8/3
ANNULUS_LO = 3.0 / 4.0      # ...and (a fortiori) for |xi| <= 3/4


def _bump(x):
    """exp(-1/x) for x > 0, identically 0 otherwise; the C-infinity glue."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """Monotone C-infinity transition: 0 for x <= 0, 1 for x >= 1."""
    a = _bump(x)
    b = _bump(1.0 - np.asarray(x, dtype=float))
    with np.errstate(invalid="ignore"):
        return np.where(a + b > 0, a / (a + b), 0.0)


def chi_radial(r):
    """Mollified indicator of the unit-scale ball: 1 on r <= 1, 0 on r >= 4/3."""
    r = np.asarray(r, dtype=float)
    return smooth_step((CHI_BALL - r) * 3.0)


def phi_radial(r):
    """Annulus bump chi(r/2) - chi(r); support inside (1, 8/3)."""
    r = np.asarray(r, dtype=float)
    return chi_radial(r / 2.0) - chi_radial(r)


@dataclass(frozen=True)
class DyadicPartition:
    """The (chi, phi) pair with a finite block range [q_min, q_max]."""

    q_min: int
    q_max: int

    def __post_init__(self):
        if self.q_min >= self.q_max:
            raise ValueError(f"need q_min < q_max, got [{self.q_min}, {self.q_max}]")

    def chi(self, r):
        return chi_radial(r)

    def phi(self, r):
        return phi_radial(r)

    @property
    def qs(self):
        return range(self.q_min, self.q_max + 1)

    def block_multiplier(self, q: int, kmag, homogeneous: bool = True):
        """Fourier multiplier of block q evaluated at |k| values."""
        if homogeneous:
            if not (self.q_min <= q <= self.q_max):
                raise ValueError(f"block q={q} outside partition range [{self.q_min}, {self.q_max}]")
            return phi_radial(np.asarray(kmag) * 2.0 ** (-q))
        if q == -1:
            return chi_radial(np.asarray(kmag))
        if not (0 <= q <= self.q_max):
            raise ValueError(f"inhomogeneous block q={q} outside [-1, {self.q_max}]")
        return phi_radial(np.asarray(kmag) * 2.0 ** (-q))


def build_partition(q_min: int, q_max: int) -> DyadicPartition:
    return DyadicPartition(q_min, q_max)


# ---------------------------------------------------------------------------
# spectral fields


class GridField:
    """Real scalar field on a periodic grid, with cached rfft coefficients."""

    def __init__(self, grid: Grid, values: np.ndarray):
        if values.shape != grid.shape:
            raise ValueError(f"field shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values

    @cached_property
    def spec(self):
        return self.grid.rfft(self.values)

    @cached_property
    def _abs2(self):
        # Plancherel weights folded in once; every norm below is a masked sum
        g = self.grid
        scale = g.box_len**g.dim / float(g.n) ** (2 * g.dim)
        return scale * g.plancherel_weight * np.abs(self.spec) ** 2

    def _lam_weight(self, lam: float):
        if lam == 0.0:
            return 1.0
        k = self.grid.kmag
        with np.errstate(divide="ignore"):
            w = np.where(k > 0, k, 1.0) ** (2.0 * lam)
        return np.where(k > 0, w, 0.0)

    def block_l2(self, q: int, partition: DyadicPartition, homogeneous=True, lam=0.0) -> float:
        mult = partition.block_multiplier(q, self.grid.kmag, homogeneous)
        return float(np.sqrt(np.sum(self._abs2 * mult**2 * self._lam_weight(lam))))

    def l2(self, lam: float = 0.0) -> float:
        return float(np.sqrt(np.sum(self._abs2 * self._lam_weight(lam))))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l1(self) -> float:
        return self.grid.l1_norm(self.values)

    def default_q_range(self):
        kmin = self.grid.k_fundamental
        kmax = float(self.grid.kmag.max())
        return (math.floor(math.log2(kmin)) - 2, math.ceil(math.log2(kmax)) + 1)

    def filtered(self, multiplier) -> "GridField":
        return GridField(self.grid, self.grid.irfft(self.spec * multiplier))


class RadialField:
    """|f-hat| samples on a radial |xi| grid in R^3; norms are 1D quadratures."""

    dim = 3

    def __init__(self, k: np.ndarray, fhat_abs: np.ndarray, l1: float = None):
        k = np.asarray(k, dtype=float)
        fhat_abs = np.asarray(fhat_abs, dtype=float)
        if k.ndim != 1 or np.any(k <= 0) or np.any(np.diff(k) <= 0):
            raise ValueError("k nodes must be 1D, positive, strictly increasing")
        if fhat_abs.shape != k.shape or not np.all(np.isfinite(fhat_abs)):
            raise ValueError("profile values must match k nodes and be finite")
        self.k = k
        self.fhat_abs = fhat_abs
        self._l1 = l1

    def _quad(self, integrand) -> float:
        # L2(R^3)^2 = (2 pi)^-3 * 4 pi * int |fhat|^2 k^2 dk
        return float(np.trapz(integrand * self.k**2, self.k) / (2.0 * np.pi**2))

    def block_l2(self, q: int, partition: DyadicPartition, homogeneous=True, lam=0.0) -> float:
        mult = partition.block_multiplier(q, self.k, homogeneous)
        return float(np.sqrt(self._quad((mult * self.k**lam * self.fhat_abs) ** 2)))

    def l2(self, lam: float = 0.0) -> float:
        return float(np.sqrt(self._quad((self.k**lam * self.fhat_abs) ** 2)))

    def l1(self) -> float:
        if self._l1 is None:
            raise ValueError("L1 norm not available for a spectral-only radial profile")
        return self._l1

    def default_q_range(self):
        return (math.floor(math.log2(self.k[0])) - 1, math.ceil(math.log2(self.k[-1])) + 1)

    def filtered(self, multiplier) -> "RadialField":
        return RadialField(self.k, self.fhat_abs * multiplier, None)


def field_partition(field) -> DyadicPartition:
    q_lo, q_hi = field.default_q_range()
    return DyadicPartition(q_lo, q_hi)


def dyadic_block(field, q: int, partition: DyadicPartition = None, homogeneous=True):
    """Band-pass the field through block q (or the low ball for q = -1)."""
    if partition is None:
        partition = field_partition(field)
    kmag = field.grid.kmag if isinstance(field, GridField) else field.k
    return field.filtered(partition.block_multiplier(q, kmag, homogeneous))


# ---------------------------------------------------------------------------
# Besov norms


@dataclass(frozen=True)
class BesovSpec:
    """Regularity index s, summation exponent r in {1, 2, inf}; p is fixed to 2."""

    s: float
    r: float = 1.0
    homogeneous: bool = True
    p: int = 2

    def __post_init__(self):
        if self.p != 2:
            raise ValueError("only p = 2 block norms are supported")
        if self.r not in (1.0, 2.0, np.inf, 1, 2):
            raise ValueError(f"r must be 1, 2 or inf, got {self.r}")


def _ell_r(values, r):
    values = np.asarray(values, dtype=float)
    if r == np.inf:
        return float(values.max()) if values.size else 0.0
    return float(np.sum(values**r) ** (1.0 / r))


@dataclass(frozen=True)
class BesovResult:
    value: float
    blocks: tuple          # ((q, 2^{qs} * block_l2), ...)
    truncation: float      # estimated weight of blocks outside the computed range
    truncated: bool        # True when that estimate exceeds 1% of the value
    spec: BesovSpec = dc_field(repr=False, default=None)

    def __float__(self):
        return self.value


def _tail_estimate(weighted, r):
    """Geometric extrapolation of the block series beyond both ends."""
    w = [x for x in weighted]
    tail = 0.0
    for edge, inner in ((0, 1), (-1, -2)):
        if len(w) < 2 or w[edge] <= 0:
            continue
        ratio = w[edge] / w[inner] if w[inner] > 0 else np.inf
        if r == np.inf:
            extra = w[edge] * min(ratio, 1.0)
            tail = max(tail, max(0.0, extra - max(w)))
        elif ratio < 1.0:
            tail += w[edge] * ratio / (1.0 - ratio)
        else:
            tail += w[edge]  # cannot extrapolate a non-decaying edge; count it once
    return tail


def besov_norm(field, spec: BesovSpec, partition: DyadicPartition = None,
               lam: float = 0.0) -> BesovResult:
    """Dyadic-sum norm of Lambda^lam applied to the field.

    Homogeneous norms sum the partition range; blocks outside it are charged
    to a reported truncation budget (they cannot be evaluated on finite data).
    Inhomogeneous norms start at the low-frequency ball q = -1.
    """
    if partition is None:
        partition = field_partition(field)
    if spec.homogeneous:
        qs = list(partition.qs)
    else:
        qs = [-1] + [q for q in partition.qs if q >= 0]
    blocks = []
    for q in qs:
        b = field.block_l2(q, partition, homogeneous=spec.homogeneous, lam=lam)
        blocks.append((q, 2.0 ** (q * spec.s) * b))
    weighted = [b for _, b in blocks]
    value = _ell_r(weighted, spec.r)
    truncation = 0.0
    if spec.homogeneous:
        nonzero = [b for b in weighted if b > 0]
        truncation = _tail_estimate(nonzero, spec.r) if nonzero else 0.0
    truncated = bool(value > 0 and truncation > 0.01 * value)
    return BesovResult(value, tuple(blocks), truncation, truncated, spec)


# ---------------------------------------------------------------------------
# time series of norms


@dataclass
class NormSeries:
    """Time-stamped values of one norm along a trajectory."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be matching 1D arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("norm values must be finite")


# ---------------------------------------------------------------------------
# Chemin-Lerner (time-inside-block) norms


@dataclass
class BlockSeries:
    """Per-block L2 norms sampled on a shared uniform time grid."""

    times: np.ndarray
    qs: np.ndarray
    values: np.ndarray  # shape (len(qs), len(times))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.qs = np.asarray(self.qs, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.qs.size, self.times.size):
            raise ValueError("values must have shape (n_blocks, n_times)")
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("Chemin-Lerner accumulation requires a uniform time grid")

    @classmethod
    def from_norm_series(cls, per_block):
        """Assemble from (q, NormSeries)-like pairs; time grids must agree."""
        qs, series = zip(*per_block)
        times = np.asarray(series[0].times, dtype=float)
        for s in series[1:]:
            if len(s.times) != len(times) or not np.array_equal(np.asarray(s.times), times):
                raise ValueError("mismatched time grids across blocks")
        values = np.stack([np.asarray(s.values, dtype=float) for s in series])
        return cls(times, np.asarray(qs), values)


def chemin_lerner_norm(series: BlockSeries, theta: float, spec: BesovSpec) -> float:
    """Time integral inside each block first, ell^r sum over blocks second."""
    if theta not in (2, 2.0, np.inf):
        raise ValueError(f"theta must be 2 or inf, got {theta}")
    if theta == np.inf:
        per_block = series.values.max(axis=1)
    else:
        per_block = np.sqrt(np.trapz(series.values**2, series.times, axis=1))
    weighted = 2.0 ** (series.qs * spec.s) * per_block
    return _ell_r(weighted, spec.r)


def lebesgue_besov_norm(series: BlockSeries, theta: float, spec: BesovSpec) -> float:
    """The other ordering, L^theta_T of the instantaneous Besov norm."""
    if theta not in (2, 2.0, np.inf):
        raise ValueError(f"theta must be 2 or inf, got {theta}")
    weighted = 2.0 ** (series.qs[:, None] * spec.s) * series.values
    inst = np.array([_ell_r(weighted[:, j], spec.r) for j in range(series.times.size)])
    if theta == np.inf:
        return float(inst.max())
    return float(np.sqrt(np.trapz(inst**2, series.times)))


# ---------------------------------------------------------------------------
# inequality probes


def bernstein_ratio(field, k_order: float, q: int, partition: DyadicPartition = None) -> float:
    """||Lambda^k f|| / (2^{qk} ||f||) for a field band-limited to block q.

    Must lie in [(3/4)^k, (8/3)^k]; raises if spectral mass leaks out of the
    annulus 2^q * [3/4, 8/3].
    """
    if partition is None:
        partition = field_partition(field)
    kmag = field.grid.kmag if isinstance(field, GridField) else field.k
    scale = 2.0**q
    inside = (kmag >= ANNULUS_LO * scale) & (kmag <= ANNULUS_HI * scale)
    total = field.l2(0.0)
    if total == 0:
        raise ValueError("zero field has no Bernstein ratio")
    leaked = field.filtered(np.where(inside, 0.0, 1.0)).l2(0.0)
    if leaked > 1e-10 * total:
        raise ValueError(
            f"spectral support leaks outside the block-q annulus ({leaked / total:.2e} of mass)"
        )
    return field.l2(lam=k_order) / (scale**k_order * total)


@dataclass(frozen=True)
class InterpolationReport:
    lhs: float
    rhs: float
    ratio: float
    theta: float


def interpolation_check(field, k: float, m: float, rho_idx: float,
                        partition: DyadicPartition = None) -> InterpolationReport:
    """||Lambda^k f|| vs ||Lambda^{k+m} f||^theta * ||f||_{B^{-rho}_{2,inf}}^{1-theta}.

    theta = (rho + k) / (rho + k + m).  The returned ratio lhs/rhs is the
    constant the inequality needs for this particular field.
    """
    if k < 0 or m <= 0 or rho_idx <= 0:
        raise ValueError("need k >= 0, m > 0, rho > 0")
    theta = (rho_idx + k) / (rho_idx + k + m)
    lhs = field.l2(lam=k)
    high = field.l2(lam=k + m)
    low = besov_norm(field, BesovSpec(s=-rho_idx, r=np.inf, homogeneous=True), partition).value
    rhs = high**theta * low ** (1.0 - theta)
    if not (np.isfinite(lhs) and np.isfinite(rhs)):
        raise ValueError("non-finite norms in interpolation check")
    return InterpolationReport(lhs, rhs, lhs / rhs if rhs > 0 else np.inf, theta)


def embedding_ratio(field) -> float:
    """||f||_{B^{-3/2}_{2,inf}} / ||f||_{L1} for a 3D field (scaling-invariant)."""
    bes = besov_norm(field, BesovSpec(s=-1.5, r=np.inf, homogeneous=True)).value
    return bes / field.l1()
