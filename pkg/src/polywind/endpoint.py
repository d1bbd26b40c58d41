"""Endpoint laws: densities pushed through units, on the circle and the line.

The line view tracks the joint law of (winding count, circumference position)
by convolving winding-resolved kernels; its marginal over positions gives the
law of the integer part of the endpoint, and its moments give the quenched
mean and variance of the winding count for one noise realization.
"""

from __future__ import annotations

import warnings

import numpy as np

from .fields import BoundaryCondition, LineDensity, TorusDensity
from .kernels import TorusKernel, WindingKernel, apply_kernel

LOSS_WARN = 1e-4
LOSS_ERROR = 1e-2


class WindowOverflow(RuntimeError):
    """Too much probability mass ran off the tracked winding window."""


def evolve_density(kernels, d: TorusDensity) -> TorusDensity:
    """Push a circumference density through the units, renormalizing each."""
    for k in kernels:
        d = apply_kernel(k, d)
    return d


def backward_density(kernels, d: TorusDensity) -> TorusDensity:
    """Pull a density backward: transposed kernels in reverse order."""
    for k in reversed(kernels):
        kt = TorusKernel(spec=k.spec, mat=np.ascontiguousarray(k.mat.T), log_norm=k.log_norm)
        d = apply_kernel(kt, d)
    return d


def line_evolve(
    winding_kernels,
    start: BoundaryCondition,
    window: int | None = None,
) -> LineDensity:
    """Joint (winding count, position) law after the units, started at zero
    winding from `start`.

    `window` is the half-width of the tracked winding range; the default
    covers 4 standard deviations of the expected spread plus one kernel
    window.  Mass falling outside is accumulated into lost_fraction: above
    1e-4 it warns, above 1e-2 it raises.
    """
    if not winding_kernels:
        raise ValueError("need at least one kernel")
    spec = winding_kernels[0].spec
    wb = spec.winding_blocks
    n_units = len(winding_kernels)
    if window is None:
        window = int(np.ceil(4 * np.sqrt(n_units))) + wb
    n = spec.cells
    values = np.zeros((2 * window + 1, n))
    values[window] = start.as_density(spec).values
    log_mass = 0.0
    lost_fraction = 0.0
    for wk in winding_kernels:
        new = np.zeros_like(values)
        lost = 0.0
        for dw in range(-wb, wb + 1):
            img = (wk.block(dw) @ values.T) * spec.dx  # (n, rows)
            for row in range(2 * window + 1):
                target = row + dw
                if 0 <= target <= 2 * window:
                    new[target] += img[:, row]
                else:
                    lost += img[:, row].sum()
        kept = new.sum()
        unit_loss = lost / (kept + lost) if kept + lost > 0 else 1.0
        lost_fraction = lost_fraction + (1.0 - lost_fraction) * unit_loss
        if lost_fraction > LOSS_ERROR:
            raise WindowOverflow(
                f"lost fraction {lost_fraction:.2e} exceeds {LOSS_ERROR:.0e}; widen the window"
            )
        mass = kept * spec.dx
        values = new / mass
        log_mass += float(np.log(mass)) + wk.log_norm
    if lost_fraction > LOSS_WARN:
        warnings.warn(
            f"winding window leaked {lost_fraction:.2e} of the mass", RuntimeWarning, stacklevel=2
        )
    return LineDensity(
        spec=spec, window=window, values=values, log_mass=log_mass, lost_fraction=lost_fraction
    )


def integer_part_law(ld: LineDensity):
    """Marginal law of the winding count: offsets and probabilities.

    Each count's probability integrates the line density over one
    circumference trapezoidally, stitching the last cell of a row to the
    first cell of the next; this keeps the reflection pairing
    P(j) = P(-j-1) exact for reflection-symmetric densities, which node sums
    would break at first order in dx.
    """
    v = ld.values
    right = np.zeros_like(v)
    right[:, :-1] = v[:, 1:]
    right[:-1, -1] = v[1:, 0]
    probs = 0.5 * (v + right).sum(axis=1) * ld.spec.dx
    return ld.offsets(), probs / probs.sum()


def quenched_moments(ld: LineDensity):
    """Mean and variance of the endpoint displacement for this realization.

    Uses the cell-center coordinate w*L + (c + 1/2)*dx for row w, cell c.
    """
    spec = ld.spec
    coords = (
        ld.offsets()[:, None] * float(spec.circumference)
        + (np.arange(spec.cells) + 0.5)[None, :] * spec.dx
    )
    weights = ld.values * spec.dx
    total = weights.sum()
    mean = float((weights * coords).sum() / total)
    second = float((weights * coords * coords).sum() / total)
    return mean, second - mean * mean


def contraction_gap(kernels, a, b) -> float:
    """Sup distance between two start densities pushed through the units."""
    da = _coerce(kernels[0].spec, a)
    db = _coerce(kernels[0].spec, b)
    fa = evolve_density(kernels, da)
    fb = evolve_density(kernels, db)
    return float(np.abs(fa.values - fb.values).max())


def _coerce(spec, d) -> TorusDensity:
    if isinstance(d, TorusDensity):
        return d
    if isinstance(d, BoundaryCondition):
        return d.as_density(spec)
    raise TypeError(f"expected a density or boundary condition, got {type(d).__name__}")
