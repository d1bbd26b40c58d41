"""One-unit propagator kernels on the circumference and their winding split.

A winding kernel resolves the one-unit propagator by how many circumferences
the path wrapped during the unit: block w holds the part of the kernel whose
paths unwound to a displacement in [w*L, (w+1)*L).  Summing blocks recovers
the plain circumference propagator, exactly in this scheme, because spatial
tiling of the noise commutes with the circulant heat steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import solver
from .fields import DegenerateDensity, TorusDensity
from .grid import GridSpec
from .noise import increment_factors
from .solver import NumericalInstability

# spectral round-off leaves negative dust near hard deltas; anything below
# this (relative to the peak) means the solve actually went wrong
NEGATIVE_DUST_TOL = 1e-12


@dataclass(frozen=True)
class TorusKernel:
    """One-unit propagator on the circumference; entries are transition
    densities G[x, y] (target row, source column) scaled so the matrix max is
    one, with the true magnitude in log_norm."""

    spec: GridSpec
    mat: np.ndarray = field(repr=False)
    log_norm: float = 0.0

    def physical(self) -> np.ndarray:
        return self.mat * np.exp(self.log_norm)


@dataclass(frozen=True)
class WindingKernel:
    """One-unit propagator split by winding increment.

    blocks[w + winding_blocks][x, y] is the density of ending at x having
    wound w full circumferences, starting from y.  Shares one log_norm with
    all blocks so ratios between blocks stay meaningful.
    """

    spec: GridSpec
    blocks: np.ndarray = field(repr=False)  # (2*winding_blocks+1, cells, cells)
    log_norm: float = 0.0

    def block(self, w: int) -> np.ndarray:
        j = self.spec.winding_blocks
        if not -j <= w <= j:
            raise IndexError(f"winding block {w} outside ±{j}")
        return self.blocks[w + j]

    def physical(self, w: int) -> np.ndarray:
        return self.block(w) * np.exp(self.log_norm)


def _extract_norm(raw: np.ndarray, log_scale: float, step_hint: int):
    peak = raw.max()
    low = raw.min()
    if not np.isfinite(peak) or peak <= 0:
        raise NumericalInstability(step_hint, "kernel solve produced no positive mass")
    if low < -NEGATIVE_DUST_TOL * peak:
        raise NumericalInstability(step_hint, f"negative kernel entries at {low / peak:.2e} of peak")
    out = np.maximum(raw, 0.0) / peak
    return out, float(np.log(peak) + log_scale)


def unit_kernel(slab: np.ndarray, spec: GridSpec) -> WindingKernel:
    """Solve one unit on the unrolled strip, one source column per grid point.

    Sources are grid atoms (1/dx) placed on the middle circumference of a
    strip 2*winding_blocks+1 circumferences wide; reading the solution on
    circumference w gives the winding-w block.
    """
    n = spec.cells
    wb = spec.winding_blocks
    n_ext = spec.extended_cells
    state = np.zeros((n, n_ext))
    state[np.arange(n), wb * n + np.arange(n)] = 1.0 / spec.dx
    half, full = solver.extended_multipliers(spec)
    factors = increment_factors(slab, spec)
    log_scale = solver.propagate(state, factors, half, full)
    # state[y, b*n + x] is the field at strip cell (b, x) started from y
    blocks = state.reshape(n, 2 * wb + 1, n).transpose(1, 2, 0)
    blocks, log_norm = _extract_norm(np.ascontiguousarray(blocks), log_scale, spec.steps_per_unit)
    return WindingKernel(spec=spec, blocks=blocks, log_norm=log_norm)


def direct_torus_kernel(slab: np.ndarray, spec: GridSpec) -> TorusKernel:
    """Solve the same unit directly on the circumference (no winding split)."""
    n = spec.cells
    state = np.eye(n) / spec.dx
    half, full = solver.torus_multipliers(spec)
    factors = increment_factors(slab, spec)
    log_scale = solver.propagate(state, factors, half, full)
    mat, log_norm = _extract_norm(state.T.copy(), log_scale, spec.steps_per_unit)
    return TorusKernel(spec=spec, mat=mat, log_norm=log_norm)


def torus_reduce(wk: WindingKernel) -> TorusKernel:
    """Fold the winding blocks back onto the circumference (same log_norm)."""
    return TorusKernel(spec=wk.spec, mat=wk.blocks.sum(axis=0), log_norm=wk.log_norm)


def apply_kernel(k: TorusKernel, d: TorusDensity) -> TorusDensity:
    """Push a density through one unit and renormalize.

    Returns the normalized image; the log of the physical mass that was
    divided out (the partition increment) is added to log_mass.
    """
    v = k.mat @ d.values * k.spec.dx
    mass = v.sum() * k.spec.dx
    if not mass > 0:
        raise DegenerateDensity("kernel application lost all mass")
    return TorusDensity(
        spec=k.spec,
        values=v / mass,
        log_mass=d.log_mass + float(np.log(mass)) + k.log_norm,
    )


def heat_reference(t: float, spec: GridSpec) -> TorusKernel:
    """Exact heat propagator on the circumference by image summation.

    Entries are the wrapped Gaussian density evaluated at grid differences;
    images are added until the next term falls below 1e-12 of the total.
    """
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    n = spec.cells
    length = float(spec.circumference)
    diff = (np.arange(n) * spec.dx)[:, None] - (np.arange(n) * spec.dx)[None, :]
    total = np.zeros_like(diff)
    p = 0
    while True:
        term = _gauss(diff + p * length, t)
        if p > 0:
            term = term + _gauss(diff - p * length, t)
        total += term
        if p > 0 and term.max() < 1e-12 * max(total.max(), 1.0):
            break
        p += 1
    peak = total.max()
    return TorusKernel(spec=spec, mat=total / peak, log_norm=float(np.log(peak)))


def _gauss(x, t):
    return np.exp(-(x * x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
