"""Streaming replica engine: whole-chain statistics from one noise realization.

Each replica owns one noise realization over its whole horizon.  The forward
sweep filters the start density unit by unit on the circumference (one small
solve per unit).  The backward sweep draws the position chain exactly: for
each unit, one adjoint solve on the unrolled strip, started from a point mass
at the sampled endpoint, yields simultaneously the backward transition row
(fold the strip over circumferences) and the winding-increment law at every
candidate previous position (read the strip blockwise).  No full kernel
matrix is ever materialized, which keeps long chains cheap.

Reproducibility contract: all randomness of replica r derives from
(master_seed, r) alone, so any replica can be replayed in isolation and
aggregate results cannot depend on worker scheduling.  Within a replica the
sampling draws happen in a fixed order: stationary boundaries (when used),
then the endpoint, then alternating previous-position / winding-increment
draws from the last unit down to the first.

At zero coupling every unit kernel is the same deterministic matrix; the
engine then skips the solves entirely and samples from one cached kernel
pair, which is exact, not an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import solver
from .endpoint import quenched_moments
from .fields import BoundaryCondition, DegenerateDensity, LineDensity, TorusDensity
from .grid import GridSpec
from .kernels import NEGATIVE_DUST_TOL, TorusKernel, WindingKernel, torus_reduce, unit_kernel
from .noise import increment_factors, new_noise
from .paths import draw_categorical
from .solver import NumericalInstability

BOUNDARY_MODES = ("pinned", "stationary")


def replica_seeds(master_seed: int, replica_index: int):
    """Independent (noise, sampling) seed sequences for one replica."""
    noise_ss, sampling_ss = np.random.SeedSequence((master_seed, replica_index)).spawn(2)
    return noise_ss, sampling_ss


@dataclass
class ChainStats:
    """Everything one chain replica produced; heavier statistics are derived.

    `laws[k - 1]` is the winding-increment law of unit k conditioned on the
    sampled adjacent positions, over offsets -winding_blocks..winding_blocks.
    """

    spec: GridSpec
    boundary_mode: str
    replica_index: int
    cells: np.ndarray = field(repr=False)  # (n_units + 1,) position chain
    increments: np.ndarray = field(repr=False)  # (n_units,) sampled winding increments
    laws: np.ndarray = field(repr=False)  # (n_units, 2*winding_blocks + 1)
    log_partition: float = 0.0

    @property
    def n_units(self) -> int:
        return len(self.increments)

    def law_offsets(self) -> np.ndarray:
        wb = self.spec.winding_blocks
        return np.arange(-wb, wb + 1)

    def winding_total(self) -> int:
        return int(self.increments.sum())

    def displacement(self) -> float:
        """Endpoint displacement on the unrolled line (winding plus fraction)."""
        length = float(self.spec.circumference)
        frac = (int(self.cells[-1]) - int(self.cells[0])) * self.spec.dx
        return length * self.winding_total() + frac

    def increment_means(self) -> np.ndarray:
        """Conditional mean of each unit's winding increment given the path."""
        return self.laws @ self.law_offsets()

    def increment_seconds(self) -> np.ndarray:
        """Conditional second moment of each unit's increment given the path."""
        return self.laws @ (self.law_offsets().astype(float) ** 2)

    def second_moment_exact(self) -> float:
        """Conditional expectation of the squared winding total given the noise.

        Increments are independent given the path, so the conditional second
        moment of their sum is the summed conditional variance plus the squared
        summed conditional mean; averaging this over replicas is the
        variance-reduced estimator of the annealed second moment.
        """
        means = self.increment_means()
        variances = self.increment_seconds() - means**2
        return float(variances.sum() + means.sum() ** 2)

    def conditional_cf(self, freq: float) -> complex:
        """Conditional characteristic value of the scaled winding total."""
        angle = freq / np.sqrt(self.n_units)
        phases = np.exp(1j * angle * self.law_offsets())
        return complex(np.prod(self.laws @ phases))

    def truncation_max(self) -> float:
        """Largest per-unit probability on the outermost tracked offsets."""
        return float((self.laws[:, 0] + self.laws[:, -1]).max())


def chain_replica(
    spec: GridSpec,
    n_units: int,
    master_seed: int,
    replica_index: int,
    boundary_mode: str = "pinned",
    _force_generic: bool = False,
) -> ChainStats:
    """Run one full replica: filter forward, sample the chain backward.

    boundary_mode "pinned" starts the chain at cell 0 against a flat end;
    "stationary" draws an independent stationary density for each end.
    """
    if n_units < 1:
        raise ValueError(f"n_units must be >= 1, got {n_units}")
    if boundary_mode not in BOUNDARY_MODES:
        raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}, got {boundary_mode!r}")
    noise_ss, sampling_ss = replica_seeds(master_seed, replica_index)
    rng = np.random.default_rng(sampling_ss)
    start, end = _chain_boundaries(spec, boundary_mode, rng)
    if spec.noise_strength == 0.0 and not _force_generic:
        cells, increments, laws, log_partition = _chain_flat(spec, n_units, start, end, rng)
    else:
        cells, increments, laws, log_partition = _chain_streaming(
            spec, n_units, noise_ss, start, end, rng
        )
    return ChainStats(
        spec=spec,
        boundary_mode=boundary_mode,
        replica_index=replica_index,
        cells=cells,
        increments=increments,
        laws=laws,
        log_partition=log_partition,
    )


def _chain_boundaries(spec: GridSpec, boundary_mode: str, rng):
    if boundary_mode == "pinned":
        return BoundaryCondition.delta(0), BoundaryCondition.lebesgue()
    from .stationary import stationary_boundaries

    left, right = stationary_boundaries(spec, rng)
    return BoundaryCondition.from_density(left), BoundaryCondition.from_density(right)


def _chain_streaming(spec: GridSpec, n_units: int, noise_ss, start, end, rng):
    noise = new_noise(spec, noise_ss, n_units)
    n = spec.cells
    half_t, full_t = solver.torus_multipliers(spec)
    half_e, full_e = solver.extended_multipliers(spec)
    densities = np.empty((n_units + 1, n))
    densities[0] = start.as_density(spec).values
    log_increments = np.empty(n_units)
    state = np.empty((1, n))
    for k in range(1, n_units + 1):
        state[0] = densities[k - 1]
        log_scale = solver.propagate(
            state, increment_factors(noise.slab(k), spec), half_t, full_t
        )
        clean = _clipped(state[0], f"forward density after unit {k}", spec)
        mass = clean.sum() * spec.dx
        if not mass > 0:
            raise DegenerateDensity(f"forward density lost all mass at unit {k}")
        densities[k] = clean / mass
        log_increments[k - 1] = np.log(mass) + log_scale
    log_partition = _closure(spec, end, densities[n_units], log_increments)
    cells = np.empty(n_units + 1, dtype=np.int64)
    cells[n_units] = draw_categorical(rng, end.weights(spec) * densities[n_units])
    wb = spec.winding_blocks
    rows = 2 * wb + 1
    offsets = np.arange(-wb, wb + 1)
    increments = np.empty(n_units, dtype=np.int64)
    laws = np.empty((n_units, rows))
    ext = np.empty((1, spec.extended_cells))
    for k in range(n_units, 0, -1):
        ext[:] = 0.0
        ext[0, wb * n + cells[k]] = 1.0 / spec.dx
        solver.propagate(
            ext, increment_factors(noise.slab(k), spec), half_e, full_e, reverse=True
        )
        # adjoint solve from the endpoint: strip block b, position y holds the
        # winding-(wb - b) kernel entry from y to the endpoint; reversing the
        # block axis puts offsets in increasing order
        stack = _clipped(ext[0], f"adjoint solve of unit {k}", spec).reshape(rows, n)[::-1]
        row = stack.sum(axis=0)
        cells[k - 1] = draw_categorical(rng, row * densities[k - 1])
        col = stack[:, cells[k - 1]]
        total = col.sum()
        if not total > 0:
            raise DegenerateDensity(f"no winding mass between sampled endpoints of unit {k}")
        p = col / total
        laws[k - 1] = p
        increments[k - 1] = offsets[draw_categorical(rng, p)]
    return cells, increments, laws, log_partition


@lru_cache(maxsize=8)
def flat_unit_kernels(spec: GridSpec) -> tuple[TorusKernel, WindingKernel]:
    """The deterministic zero-coupling unit kernels, computed once per spec."""
    if spec.noise_strength != 0.0:
        raise ValueError("flat kernels are only defined at zero coupling")
    winding = unit_kernel(np.zeros((spec.steps_per_unit, spec.cells)), spec)
    return torus_reduce(winding), winding


def _chain_flat(spec: GridSpec, n_units: int, start, end, rng):
    torus, winding = flat_unit_kernels(spec)
    n = spec.cells
    densities = np.empty((n_units + 1, n))
    densities[0] = start.as_density(spec).values
    log_increments = np.empty(n_units)
    for k in range(1, n_units + 1):
        v = torus.mat @ densities[k - 1] * spec.dx
        mass = v.sum() * spec.dx
        if not mass > 0:
            raise DegenerateDensity(f"forward density lost all mass at unit {k}")
        densities[k] = v / mass
        log_increments[k - 1] = np.log(mass) + torus.log_norm
    log_partition = _closure(spec, end, densities[n_units], log_increments)
    cells = np.empty(n_units + 1, dtype=np.int64)
    cells[n_units] = draw_categorical(rng, end.weights(spec) * densities[n_units])
    wb = spec.winding_blocks
    offsets = np.arange(-wb, wb + 1)
    increments = np.empty(n_units, dtype=np.int64)
    laws = np.empty((n_units, 2 * wb + 1))
    for k in range(n_units, 0, -1):
        row = torus.mat[cells[k], :]
        cells[k - 1] = draw_categorical(rng, row * densities[k - 1])
        col = winding.blocks[:, cells[k], cells[k - 1]]
        total = col.sum()
        if not total > 0:
            raise DegenerateDensity(f"no winding mass between sampled endpoints of unit {k}")
        p = col / total
        laws[k - 1] = p
        increments[k - 1] = offsets[draw_categorical(rng, p)]
    return cells, increments, laws, log_partition


def _closure(spec: GridSpec, end, final_density: np.ndarray, log_increments) -> float:
    closure = float(end.weights(spec) @ final_density) * spec.dx
    if not closure > 0:
        raise DegenerateDensity("end condition has no overlap with the filtered density")
    return float(log_increments.sum() + np.log(closure))


@dataclass
class LineSnapshot:
    """Quenched endpoint-displacement moments after an integer number of units."""

    n_units: int
    mean: float
    variance: float
    edge_mass: float  # probability on the two outermost winding rows
    log_mass: float
    density: LineDensity | None = None  # populated only on request


def line_replica(
    spec: GridSpec,
    snapshots,
    master_seed: int,
    replica_index: int,
    window: int | None = None,
    keep_fields: bool = False,
) -> list[LineSnapshot]:
    """Evolve the joint (winding, position) law directly on the unrolled strip.

    The joint law of winding count and circumference position propagates
    exactly like a field on a strip of 2*window+1 circumferences with
    spatially tiled noise — the same identity the kernel construction uses —
    so one strip solve per unit replaces a full kernel build.  Mass beyond
    the strip wraps around; `edge_mass` tracks how much sits on the outermost
    winding rows so undersized windows are visible.

    Starts pinned at cell 0 with zero winding; returns one snapshot per
    requested unit count, in increasing order.
    """
    snaps = sorted(set(int(s) for s in snapshots))
    if not snaps or snaps[0] < 1:
        raise ValueError("snapshots must be positive unit counts")
    horizon = snaps[-1]
    if window is None:
        window = int(np.ceil(4 * np.sqrt(horizon))) + spec.winding_blocks
    n = spec.cells
    rows = 2 * window + 1
    noise_ss, _ = replica_seeds(master_seed, replica_index)
    noise = new_noise(spec, noise_ss, horizon) if spec.noise_strength > 0 else None
    half, full = solver.extended_multipliers(spec, window=window)
    state = np.zeros((1, rows * n))
    state[0, window * n] = 1.0 / spec.dx
    log_mass = 0.0
    out = []
    for k in range(1, horizon + 1):
        if noise is None:
            factors = np.ones((spec.steps_per_unit, n))
        else:
            factors = increment_factors(noise.slab(k), spec)
        log_scale = solver.propagate(state, factors, half, full)
        clean = _clipped(state[0], f"line density after unit {k}", spec)
        mass = clean.sum() * spec.dx
        if not mass > 0:
            raise DegenerateDensity(f"line density lost all mass at unit {k}")
        state[0] = clean / mass
        log_mass += float(np.log(mass)) + log_scale
        if k in snaps:
            values = state[0].reshape(rows, n).copy()
            density = LineDensity(
                spec=spec, window=window, values=values, log_mass=log_mass
            )
            mean, variance = quenched_moments(density)
            edge = float((values[0].sum() + values[-1].sum()) * spec.dx)
            out.append(
                LineSnapshot(
                    n_units=k,
                    mean=mean,
                    variance=variance,
                    edge_mass=edge,
                    log_mass=log_mass,
                    density=density if keep_fields else None,
                )
            )
    return out


def flow_replica(
    spec: GridSpec,
    times,
    master_seed: int,
    replica_index: int,
) -> np.ndarray:
    """Contraction gaps between evolved start densities at the given times.

    Three starts evolve under one noise realization: a point mass at cell 0,
    a point mass half a circumference away, and the uniform density.  Returns
    an array of shape (len(times), 2): sup distance between the two point
    starts, and between the first point start and the uniform start.

    Times must be increasing multiples of the time step.  Snapshot times
    split the within-unit step sequence; at integer times the evolution
    composes one-unit kernels exactly.
    """
    t = [float(x) for x in times]
    if not t or any(b <= a for a, b in zip(t, t[1:])) or t[0] <= 0:
        raise ValueError("times must be strictly increasing and positive")
    steps = []
    for x in t:
        s = x * spec.steps_per_unit
        if abs(s - round(s)) > 1e-9:
            raise ValueError(f"time {x} is not a multiple of the time step")
        steps.append(int(round(s)))
    n = spec.cells
    mid = n // 2
    state = np.zeros((3, n))
    state[0, 0] = 1.0 / spec.dx
    state[1, mid] = 1.0 / spec.dx
    state[2, :] = 1.0 / spec.circumference
    if spec.noise_strength > 0:
        units = int(np.ceil(t[-1] - 1e-9))
        noise_ss, _ = replica_seeds(master_seed, replica_index)
        values = new_noise(spec, noise_ss, units).values
    else:
        values = np.zeros((steps[-1], n))
    half, full = solver.torus_multipliers(spec)
    gaps = np.empty((len(steps), 2))
    prev = 0
    for i, stop in enumerate(steps):
        solver.propagate(state, increment_factors(values[prev:stop], spec), half, full)
        prev = stop
        for r in range(3):
            clean = _clipped(state[r], f"flow density at time {t[i]}", spec)
            mass = clean.sum() * spec.dx
            if not mass > 0:
                raise DegenerateDensity(f"flow density lost all mass at time {t[i]}")
            state[r] = clean / mass
        gaps[i, 0] = np.abs(state[0] - state[1]).max()
        gaps[i, 1] = np.abs(state[0] - state[2]).max()
    return gaps


def kernel_column_replica(
    spec: GridSpec,
    master_seed: int,
    replica_index: int,
    source_cell: int = 0,
) -> np.ndarray:
    """One column of the winding-resolved unit kernel, in physical units.

    Solves a single unit from a point source on the unrolled strip and
    returns the (2*winding_blocks+1, cells) stack of winding-block columns
    Z[w][:, source_cell], with all normalization folded back in.
    """
    n = spec.cells
    wb = spec.winding_blocks
    rows = 2 * wb + 1
    noise_ss, _ = replica_seeds(master_seed, replica_index)
    if spec.noise_strength > 0:
        slab = new_noise(spec, noise_ss, 1).slab(1)
    else:
        slab = np.zeros((spec.steps_per_unit, n))
    state = np.zeros((1, spec.extended_cells))
    state[0, wb * n + (source_cell % n)] = 1.0 / spec.dx
    half, full = solver.extended_multipliers(spec)
    log_scale = solver.propagate(state, increment_factors(slab, spec), half, full)
    clean = _clipped(state[0], "kernel column solve", spec)
    return clean.reshape(rows, n) * np.exp(log_scale)


def endpoint_flow_replica(
    spec: GridSpec,
    n_units: int,
    master_seed: int,
    replica_index: int,
    start_mode: str = "uniform",
) -> TorusDensity:
    """Push a start density through whole units of fresh noise; return the end.

    start_mode "uniform" starts flat, "point" starts at cell 0, "stationary"
    draws a stationary density from the replica's sampling stream first (for
    invariance checks).
    """
    if n_units < 1:
        raise ValueError(f"n_units must be >= 1, got {n_units}")
    noise_ss, sampling_ss = replica_seeds(master_seed, replica_index)
    if start_mode == "uniform":
        d = TorusDensity.uniform(spec)
    elif start_mode == "point":
        d = TorusDensity.point(spec, 0)
    elif start_mode == "stationary":
        from .stationary import stationary_density

        d = stationary_density(spec, np.random.default_rng(sampling_ss))
    else:
        raise ValueError(f"start_mode must be uniform, point, or stationary, got {start_mode!r}")
    noise = new_noise(spec, noise_ss, n_units) if spec.noise_strength > 0 else None
    half, full = solver.torus_multipliers(spec)
    state = np.empty((1, spec.cells))
    state[0] = d.values
    log_mass = 0.0
    for k in range(1, n_units + 1):
        if noise is None:
            factors = np.ones((spec.steps_per_unit, spec.cells))
        else:
            factors = increment_factors(noise.slab(k), spec)
        log_scale = solver.propagate(state, factors, half, full)
        clean = _clipped(state[0], f"endpoint density after unit {k}", spec)
        mass = clean.sum() * spec.dx
        if not mass > 0:
            raise DegenerateDensity(f"endpoint density lost all mass at unit {k}")
        state[0] = clean / mass
        log_mass += float(np.log(mass)) + log_scale
    return TorusDensity(spec=spec, values=state[0].copy(), log_mass=log_mass)


def _clipped(values: np.ndarray, what: str, spec: GridSpec) -> np.ndarray:
    """Zero out spectral round-off dust; real negativity is an instability."""
    peak = values.max()
    if not np.isfinite(peak) or peak <= 0:
        raise NumericalInstability(spec.steps_per_unit, f"{what} produced no positive mass")
    low = values.min()
    if low < -NEGATIVE_DUST_TOL * peak:
        raise NumericalInstability(
            spec.steps_per_unit, f"{what} went negative at {low / peak:.2e} of peak"
        )
    return np.maximum(values, 0.0)
