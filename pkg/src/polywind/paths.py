"""Path law of the polymer as a Markov chain over circumference positions.

Conditionally on one noise realization, the polymer's positions at integer
times form a Markov chain whose transition weights are the one-unit kernels;
given the whole position chain, the winding increments of the units are
independent, with laws read off the winding-resolved kernels.  Sampling is
exact (forward filtering, backward sampling); no Metropolis step anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import BoundaryCondition, DegenerateDensity, TorusDensity
from .grid import GridSpec
from .kernels import TorusKernel, WindingKernel, apply_kernel


@dataclass
class ForwardPass:
    """Filtered densities a_0..a_N and per-unit log partition increments."""

    spec: GridSpec
    densities: list[TorusDensity]
    log_increments: list[float]


@dataclass
class PathSample:
    """Positions (grid cells) of the polymer at integer times 0..N."""

    spec: GridSpec
    cells: np.ndarray
    log_partition: float


@dataclass
class WindingLaw:
    """Law of one unit's winding increment given its two endpoints.

    `truncation` is the probability mass sitting on the outermost tracked
    offsets, a proxy for how much lies beyond the window.
    """

    offsets: np.ndarray
    probs: np.ndarray
    truncation: float

    def mean(self) -> float:
        return float(self.offsets @ self.probs)

    def second_moment(self) -> float:
        return float((self.offsets.astype(float) ** 2) @ self.probs)

    def char_value(self, angle: float) -> complex:
        return complex(np.exp(1j * angle * self.offsets) @ self.probs)


def draw_categorical(rng, weights) -> int:
    """Inverse-CDF draw in fixed index order (reproducible given the rng)."""
    cdf = np.cumsum(weights)
    total = cdf[-1]
    if not total > 0:
        raise DegenerateDensity("categorical weights sum to zero")
    return int(np.searchsorted(cdf, rng.random() * total, side="right"))


def forward_pass(kernels, start: BoundaryCondition) -> ForwardPass:
    """Filter the start density through the units, renormalizing each time."""
    if not kernels:
        raise ValueError("need at least one kernel")
    spec = kernels[0].spec
    a = start.as_density(spec)
    densities = [a]
    log_increments = []
    for k in kernels:
        a = apply_kernel(_as_torus(k), a)
        log_increments.append(a.log_mass - densities[-1].log_mass)
        densities.append(a)
    return ForwardPass(spec=spec, densities=densities, log_increments=log_increments)


def log_partition(fp: ForwardPass, end: BoundaryCondition) -> float:
    """Log of the partition function between the two end conditions."""
    w = end.weights(fp.spec)
    closure = float(w @ fp.densities[-1].values) * fp.spec.dx
    if not closure > 0:
        raise DegenerateDensity("end condition has no overlap with the filtered density")
    return sum(fp.log_increments) + float(np.log(closure))


def sample_path(kernels, start: BoundaryCondition, end: BoundaryCondition, rng) -> PathSample:
    """Draw the position chain exactly: filter forward, sample backward."""
    torus = [_as_torus(k) for k in kernels]
    fp = forward_pass(torus, start)
    spec = fp.spec
    n = len(kernels)
    cells = np.empty(n + 1, dtype=np.int64)
    cells[n] = draw_categorical(rng, end.weights(spec) * fp.densities[n].values)
    for k in range(n, 0, -1):
        row = torus[k - 1].mat[cells[k], :]
        cells[k - 1] = draw_categorical(rng, row * fp.densities[k - 1].values)
    return PathSample(spec=spec, cells=cells, log_partition=log_partition(fp, end))


def increment_law(wk: WindingKernel, cell_to: int, cell_from: int) -> WindingLaw:
    """Winding-increment law for one unit given its endpoint cells."""
    j = wk.spec.winding_blocks
    w = wk.blocks[:, cell_to, cell_from]
    total = w.sum()
    if not total > 0:
        raise DegenerateDensity("no winding mass between these endpoints")
    p = w / total
    return WindingLaw(
        offsets=np.arange(-j, j + 1),
        probs=p,
        truncation=float(p[0] + p[-1]),
    )


def sample_increments(winding_kernels, path: PathSample, rng) -> np.ndarray:
    """Draw the per-unit winding increments, independent given the path."""
    if len(winding_kernels) != len(path.cells) - 1:
        raise ValueError("kernel count does not match path length")
    out = np.empty(len(winding_kernels), dtype=np.int64)
    for k, wk in enumerate(winding_kernels):
        law = increment_law(wk, path.cells[k + 1], path.cells[k])
        out[k] = law.offsets[draw_categorical(rng, law.probs)]
    return out


def conditional_cf(winding_kernels, path: PathSample, freq: float, k_range=None) -> complex:
    """Characteristic function of the scaled winding sum given the path.

    The angle is freq / sqrt(N) per unit with N the full chain length, so a
    full-range product is the conditional cf of Y/sqrt(N).
    """
    n = len(winding_kernels)
    if len(path.cells) - 1 != n:
        raise ValueError("kernel count does not match path length")
    lo, hi = (1, n) if k_range is None else k_range
    if not 1 <= lo <= hi <= n:
        raise ValueError(f"k range ({lo}, {hi}) outside 1..{n}")
    angle = freq / np.sqrt(n)
    out = complex(1.0)
    for k in range(lo, hi + 1):
        law = increment_law(winding_kernels[k - 1], path.cells[k], path.cells[k - 1])
        out *= law.char_value(angle)
    return out


def _as_torus(k) -> TorusKernel:
    if isinstance(k, TorusKernel):
        return k
    if isinstance(k, WindingKernel):
        from .kernels import torus_reduce

        return torus_reduce(k)
    raise TypeError(f"expected a kernel, got {type(k).__name__}")
