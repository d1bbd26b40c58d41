"""Stationary endpoint law: Gibbs densities built from Brownian bridges.

As the horizon grows the endpoint density of the polymer forgets its start
condition and equilibrates to exp(coupling * bridge) normalized, with an
independent standard Brownian bridge per realization.  At zero coupling this
degenerates to the uniform density, which is what keeps the zero-coupling
chain exactly stationary under uniform boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import TorusDensity
from .grid import GridSpec


@dataclass
class BridgeSample:
    """Standard Brownian bridge sampled at the grid nodes.

    values[c] is the bridge at position c*dx; the bridge starts at zero and
    its (unstored) wrap value at the full circumference is exactly zero by
    construction.
    """

    spec: GridSpec
    values: np.ndarray = field(repr=False)


def sample_bridge(spec: GridSpec, rng) -> BridgeSample:
    return BridgeSample(spec=spec, values=sample_bridge_batch(spec, rng, 1)[0])


def sample_bridge_batch(spec: GridSpec, rng, count: int) -> np.ndarray:
    """(count, cells) array of independent bridge node values.

    A random walk with N(0, dx) increments over all cells, linearly de-drifted
    so the wrap value is exactly zero; the node-restricted law is exact.
    """
    n = spec.cells
    steps = rng.standard_normal((count, n)) * np.sqrt(spec.dx)
    walk = np.cumsum(steps, axis=1)
    frac = np.arange(1, n + 1) / n
    bridge = walk - walk[:, -1:] * frac
    # shift so node 0 carries value 0 (bridge[:, n-1] is node n-1; roll start)
    out = np.empty_like(bridge)
    out[:, 0] = 0.0
    out[:, 1:] = bridge[:, :-1]
    return out


def bridge_density(b: BridgeSample) -> TorusDensity:
    """Gibbs density exp(bridge) normalized to unit mass."""
    return _exp_density(b.spec, b.values)


def stationary_density(spec: GridSpec, rng) -> TorusDensity:
    """One stationary endpoint density at the spec's coupling."""
    beta = spec.noise_strength
    return _exp_density(spec, beta * sample_bridge_batch(spec, rng, 1)[0])


def stationary_boundaries(spec: GridSpec, rng) -> tuple[TorusDensity, TorusDensity]:
    """Two independent stationary endpoint densities at the spec's coupling.

    The bridge enters scaled by the coupling, so zero coupling gives exactly
    uniform densities.
    """
    beta = spec.noise_strength
    pair = sample_bridge_batch(spec, rng, 2)
    return _exp_density(spec, beta * pair[0]), _exp_density(spec, beta * pair[1])


def _exp_density(spec: GridSpec, log_values: np.ndarray) -> TorusDensity:
    v = np.exp(log_values - log_values.max())
    return TorusDensity(spec=spec, values=v / (v.sum() * spec.dx))
