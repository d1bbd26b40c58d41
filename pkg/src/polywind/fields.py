"""Density containers on the circumference and on the unrolled line."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec


class DegenerateDensity(RuntimeError):
    """A density lost all of its mass (or was handed zero mass)."""


@dataclass
class TorusDensity:
    """Probability density on the circumference, sampled at the grid points.

    `values` integrates to one with the trapezoid-free lattice rule
    sum(values) * dx; `log_mass` tracks the log of the physical normalization
    that was divided out along the way.
    """

    spec: GridSpec
    values: np.ndarray = field(repr=False)
    log_mass: float = 0.0

    def mass(self) -> float:
        return float(self.values.sum() * self.spec.dx)

    def normalized(self) -> "TorusDensity":
        m = self.mass()
        if not m > 0:
            raise DegenerateDensity("density has no mass")
        return TorusDensity(self.spec, self.values / m, self.log_mass + np.log(m))

    @classmethod
    def uniform(cls, spec: GridSpec) -> "TorusDensity":
        return cls(spec, np.full(spec.cells, 1.0 / spec.circumference))

    @classmethod
    def point(cls, spec: GridSpec, cell: int) -> "TorusDensity":
        """Grid atom at one cell, represented with density 1/dx."""
        v = np.zeros(spec.cells)
        v[cell % spec.cells] = 1.0 / spec.dx
        return cls(spec, v)


@dataclass
class LineDensity:
    """Joint density of (winding count, circumference position) on the line.

    `values` has shape (2*window+1, cells); row w corresponds to winding count
    w - window.  Normalized so values.sum() * dx == 1; `lost_fraction` is the
    cumulative probability mass that fell off the tracked window.
    """

    spec: GridSpec
    window: int
    values: np.ndarray = field(repr=False)
    log_mass: float = 0.0
    lost_fraction: float = 0.0

    def mass(self) -> float:
        return float(self.values.sum() * self.spec.dx)

    def offsets(self) -> np.ndarray:
        return np.arange(-self.window, self.window + 1)


@dataclass(frozen=True)
class BoundaryCondition:
    """End condition for the polymer: a grid atom, flat measure, or a density."""

    kind: str  # "delta" | "lebesgue" | "density"
    cell: int | None = None
    density: TorusDensity | None = None

    @classmethod
    def delta(cls, cell: int) -> "BoundaryCondition":
        return cls("delta", cell=cell)

    @classmethod
    def lebesgue(cls) -> "BoundaryCondition":
        return cls("lebesgue")

    @classmethod
    def from_density(cls, d: TorusDensity) -> "BoundaryCondition":
        return cls("density", density=d)

    def weights(self, spec: GridSpec) -> np.ndarray:
        """Density representation; pairing with a field is sum(w * a) * dx."""
        if self.kind == "delta":
            return TorusDensity.point(spec, self.cell).values
        if self.kind == "lebesgue":
            return np.ones(spec.cells)
        if self.kind == "density":
            if self.density.spec.cells != spec.cells:
                raise ValueError("boundary density lives on a different grid")
            return self.density.values
        raise ValueError(f"unknown boundary kind {self.kind!r}")

    def as_density(self, spec: GridSpec) -> TorusDensity:
        if self.kind == "lebesgue":
            return TorusDensity.uniform(spec)
        if self.kind == "delta":
            return TorusDensity.point(spec, self.cell)
        return self.density
