"""Physical parameters, periodic-grid field containers, and the quadratic forcing.

Everything downstream (modal sweeps, dyadic norms, the time stepper) shares the
types defined here.  Fields live in physical space as real arrays; spectral
representations use the real-FFT layout of ``scipy.fft.rfftn``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft


class InvalidParameterError(ValueError):
    """Non-finite or non-positive physical parameter."""


class RegimeError(RuntimeError):
    """Operation requires the dissipative regime (tau < beta)."""


def fft_workers() -> int:
    """Worker count for FFT calls, capped by the JMGT_THREADS env var."""
    env = os.environ.get("JMGT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the relaxed acoustic model.

    tau       -- relaxation time (> 0)
    beta      -- sound diffusivity (> 0)
    c         -- sound speed, fixed to 1 by the nondimensionalization
    nl_ratio  -- quadratic nonlinearity coefficient B/A
    nl_enabled -- whether the quadratic forcing participates
    """

    tau: float
    beta: float
    c: float = 1.0
    nl_ratio: float = 1.0
    nl_enabled: bool = True

    def dissipative_regime(self) -> bool:
        return self.tau < self.beta

    @property
    def regime(self) -> str:
        if self.tau < self.beta:
            return "dissipative"
        if self.tau == self.beta:
            return "critical"
        return "unstable"


def validate_params(raw: ModelParams) -> ModelParams:
    """Check finiteness/positivity and return the params with their regime label.

    tau >= beta is *not* rejected: stability-region sweeps need to evaluate the
    unstable side.  Only malformed values raise.
    """
    for name in ("tau", "beta", "c", "nl_ratio"):
        value = getattr(raw, name)
        if not np.isfinite(value):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    if raw.tau <= 0:
        raise InvalidParameterError(f"tau must be positive, got {raw.tau}")
    if raw.beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {raw.beta}")
    if raw.c != 1.0:
        raise InvalidParameterError("c is fixed to 1 by the nondimensionalization")
    return raw


# ---------------------------------------------------------------------------
# grid


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic box [0, L)^dim sampled with n points per axis (n a power of two)."""

    dim: int
    n: int
    box_len: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or not _is_power_of_two(self.n):
            raise InvalidParameterError(f"n must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.box_len) and self.box_len > 0):
            raise InvalidParameterError(f"box_len must be positive, got {self.box_len}")

    # -- shapes -------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def rshape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def dx(self) -> float:
        return self.box_len / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def k_fundamental(self) -> float:
        return 2.0 * np.pi / self.box_len

    def coords(self):
        """Per-axis coordinate arrays, broadcastable to ``shape``."""
        x = np.arange(self.n) * self.dx
        out = []
        for axis in range(self.dim):
            sh = [1] * self.dim
            sh[axis] = self.n
            out.append(x.reshape(sh))
        return out

    # -- spectral layout ----------------------------------------------------

    @cached_property
    def mode_index(self):
        """Integer mode numbers per axis, broadcastable to ``rshape``."""
        out = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                m = np.arange(self.n // 2 + 1)
            else:
                m = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
            sh = [1] * self.dim
            sh[axis] = m.size
            out.append(m.reshape(sh))
        return out

    @cached_property
    def kvec(self):
        """Physical wavenumber per axis (rfft layout), Nyquist zeroed."""
        out = []
        for m in self.mode_index:
            k = m * self.k_fundamental
            k = np.where(np.abs(m) == self.n // 2, 0.0, k)
            out.append(k.astype(float))
        return out

    @cached_property
    def k2(self):
        k2 = np.zeros(self.rshape)
        for k in self.kvec:
            k2 = k2 + k * k
        return k2

    @cached_property
    def kmag(self):
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self):
        """True where every |mode index| <= n/3 (the 2/3 rule keep-region)."""
        keep = np.ones(self.rshape, dtype=bool)
        for m in self.mode_index:
            keep = keep & (np.abs(m) <= self.n / 3.0)
        return keep

    @cached_property
    def plancherel_weight(self):
        """Multiplicity of each rfft mode in the full spectrum (1 or 2)."""
        m_last = self.mode_index[-1]
        w = np.full(m_last.shape, 2.0)
        w[m_last == 0] = 1.0
        w[m_last == self.n // 2] = 1.0
        return np.broadcast_to(w, self.rshape)

    # -- transforms and norms -------------------------------------------------

    def rfft(self, field):
        return sfft.rfftn(field, workers=fft_workers())

    def irfft(self, spec):
        return sfft.irfftn(spec, s=self.shape, workers=fft_workers())

    def spectral_l2sq(self, spec) -> float:
        """Squared L2(box) norm from rfft coefficients (Plancherel)."""
        scale = self.box_len**self.dim / float(self.n) ** (2 * self.dim)
        return scale * float(np.sum(self.plancherel_weight * np.abs(spec) ** 2))

    def l2_norm(self, field) -> float:
        """L2(box) norm by physical quadrature (exact for band-limited fields)."""
        return float(np.sqrt(np.sum(np.abs(field) ** 2) * self.cell_volume))

    def l1_norm(self, field) -> float:
        return float(np.sum(np.abs(field)) * self.cell_volume)

    def linf_norm(self, field) -> float:
        return float(np.max(np.abs(field)))

    def gradient_spec(self, spec):
        """Spectral gradient: tuple of rfft arrays i*k_j*spec."""
        return tuple(1j * k * spec for k in self.kvec)


# ---------------------------------------------------------------------------
# state and V-vector


@dataclass
class State:
    """The unknown triple on a grid: u, its rate v = u_t and acceleration w = u_tt."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise InvalidParameterError(
                    f"{name} has shape {arr.shape}, expected {self.grid.shape}"
                )

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "State":
        z = lambda: np.zeros(grid.shape)
        return cls(grid, z(), z(), z(), t)

    def spectral(self):
        g = self.grid
        return g.rfft(self.u), g.rfft(self.v), g.rfft(self.w)

    def copy(self) -> "State":
        return State(self.grid, self.u.copy(), self.v.copy(), self.w.copy(), self.t)


@dataclass
class VVector:
    """Diagnostic unknowns whose L2 norm is the natural linear energy.

    a = v + tau*w (scalar), b = grad(u + tau*v), c = grad(v); 1 + 2*dim
    components in total.
    """

    grid: Grid
    a: np.ndarray
    b: tuple
    c: tuple

    @property
    def component_count(self) -> int:
        return 1 + 2 * self.grid.dim

    def norm_l2(self) -> float:
        """Physical-space quadrature norm over all components."""
        total = np.sum(self.a**2)
        for comp in self.b + self.c:
            total += np.sum(comp**2)
        return float(np.sqrt(total * self.grid.cell_volume))


def assemble_v(state: State, params: ModelParams) -> VVector:
    """Build (v + tau*w, grad(u + tau*v), grad v) with spectral gradients."""
    g = state.grid
    tau = params.tau
    a = state.v + tau * state.w
    b_spec = g.gradient_spec(g.rfft(state.u + tau * state.v))
    c_spec = g.gradient_spec(g.rfft(state.v))
    b = tuple(g.irfft(s) for s in b_spec)
    c = tuple(g.irfft(s) for s in c_spec)
    return VVector(g, a, b, c)


def v_norm_l2_spectral(state: State, params: ModelParams) -> float:
    """Plancherel evaluation of the V-vector norm, for cross-checking quadrature."""
    g = state.grid
    tau = params.tau
    uh, vh, wh = state.spectral()
    a = vh + tau * wh
    b = uh + tau * vh
    total = g.spectral_l2sq(a) + g.spectral_l2sq(np.sqrt(g.k2) * b)
    total += g.spectral_l2sq(np.sqrt(g.k2) * vh)
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# quadratic forcing


def quadratic_product(state: State, params: ModelParams) -> np.ndarray:
    """Raw pointwise forcing (B/A)*v*w + 2*grad(u).grad(v), no dealiasing."""
    g = state.grid
    uh = g.rfft(state.u)
    vh = g.rfft(state.v)
    f = params.nl_ratio * state.v * state.w
    for ku, kv in zip(g.gradient_spec(uh), g.gradient_spec(vh)):
        f = f + 2.0 * g.irfft(ku) * g.irfft(kv)
    return f

def nonlinear_forcing(state: State, params: ModelParams) -> np.ndarray:
    """Dealiased quadratic forcing (2/3-rule mask applied in Fourier space)."""
    g = state.grid
    fh = g.rfft(quadratic_product(state, params))
    fh *= g.dealias_mask
    return g.irfft(fh)


def forcing_spectral(uh, vh, wh, grid: Grid, params: ModelParams):
    """Dealiased rfft of the forcing, straight from spectral inputs (solver path)."""
    g = grid
    w = fft_workers()
    v = sfft.irfftn(vh, s=g.shape, workers=w)
    wp = sfft.irfftn(wh, s=g.shape, workers=w)
    f = params.nl_ratio * v * wp
    for k in g.kvec:
        gu = sfft.irfftn(1j * k * uh, s=g.shape, workers=w)
        gv = sfft.irfftn(1j * k * vh, s=g.shape, workers=w)
        f += 2.0 * gu * gv
    fh = sfft.rfftn(f, workers=w)
    fh *= g.dealias_mask
    return fh


# ---------------------------------------------------------------------------
# snapshot format: one-line JSON header + little-endian float64, row-major


def write_snapshot(path, field: np.ndarray, grid: Grid, t: float, field_name: str):
    header = {
        "dim": grid.dim,
        "n": grid.n,
        "box_len": grid.box_len,
        "t": float(t),
        "field_name": field_name,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(field, dtype="<f8").tobytes())


def read_snapshot(path):
    """Returns (field array, header dict); the grid is rebuilt from the header."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    grid = Grid(header["dim"], header["n"], header["box_len"])
    field = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
    return field, header, grid


def imag_fraction(grid: Grid, spec_full) -> float:
    """max |imag part| of the full inverse transform relative to the field norm.

    Takes a full (not rfft) spectrum; used to audit Hermitian symmetry.
    """
    phys = sfft.ifftn(spec_full, workers=fft_workers())
    denom = np.max(np.abs(phys))
    if denom == 0:
        return 0.0
    return float(np.max(np.abs(phys.imag)) / denom)
