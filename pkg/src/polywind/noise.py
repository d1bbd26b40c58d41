"""Space-time driving noise on the cylinder lattice.

The noise is white in time and space at the lattice scale: one independent
standard normal per (time step, grid cell), generated eagerly so a grid is
bit-for-bit reproducible from its seed alone.  Values on any wider strip are
read through spatial tiling, which is what makes the periodic geometry exact
in the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec


@dataclass(frozen=True)
class NoiseGrid:
    spec: GridSpec
    units: int
    values: np.ndarray = field(repr=False)  # (units * steps_per_unit, cells)

    def slab(self, k: int) -> np.ndarray:
        """Increments driving time unit k (1-based), shape (steps_per_unit, cells)."""
        if not 1 <= k <= self.units:
            raise IndexError(f"unit {k} outside 1..{self.units}")
        s = self.spec.steps_per_unit
        return self.values[(k - 1) * s : k * s]

    def tiled_value(self, step: int, cell: int) -> float:
        """Single increment with the cell index wrapped onto the circumference."""
        if not 0 <= step < self.values.shape[0]:
            raise IndexError(f"step {step} outside 0..{self.values.shape[0] - 1}")
        return float(self.values[step, cell % self.spec.cells])


def new_noise(spec: GridSpec, seed, units: int) -> NoiseGrid:
    """Draw a fresh noise grid covering `units` time units.

    `seed` may be an int or a numpy SeedSequence; identical inputs give
    identical grids on any machine.
    """
    if units < 1:
        raise ValueError(f"units must be >= 1, got {units}")
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((units * spec.steps_per_unit, spec.cells))
    return NoiseGrid(spec=spec, units=units, values=values)


def increment_factors(slab: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Per-step multiplicative noise factors for one time unit.

    Exponential of the scaled increments with the compensator that keeps the
    factor mean-one, so the zero-coupling limit is exactly ones.
    """
    beta = spec.noise_strength
    if beta == 0.0:
        return np.ones_like(slab)
    amp = beta * np.sqrt(spec.dt / spec.dx)
    drift = 0.5 * beta * beta * spec.dt / spec.dx
    return np.exp(amp * slab - drift)
