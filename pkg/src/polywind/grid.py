"""Discretization parameters shared by every solver and sampler in the package."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice for the cylinder flow.

    Attributes:
        points_per_unit: spatial grid points per unit length (CLI flag M).
        steps_per_unit: time steps per unit of time (CLI flag steps).
        winding_blocks: half-width, in circumferences, of the window used to
            resolve winding increments over one time unit (CLI flag J).
        circumference: cylinder circumference in length units (CLI flag L).
        noise_strength: coupling in front of the driving noise (CLI flag beta).
    """

    points_per_unit: int = 128
    steps_per_unit: int = 1000
    winding_blocks: int = 4
    circumference: int = 1
    noise_strength: float = 0.0

    def __post_init__(self):
        if self.points_per_unit < 8:
            raise ValueError(f"points_per_unit must be >= 8, got {self.points_per_unit}")
        if self.steps_per_unit < 100:
            raise ValueError(f"steps_per_unit must be >= 100, got {self.steps_per_unit}")
        if self.winding_blocks < 2:
            raise ValueError(f"winding_blocks must be >= 2, got {self.winding_blocks}")
        if self.circumference < 1:
            raise ValueError(f"circumference must be >= 1, got {self.circumference}")
        if self.noise_strength < 0:
            raise ValueError(f"noise_strength must be >= 0, got {self.noise_strength}")

    @property
    def dx(self) -> float:
        return 1.0 / self.points_per_unit

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_unit

    @property
    def cells(self) -> int:
        """Grid points on one circumference."""
        return self.points_per_unit * self.circumference

    @property
    def extended_cells(self) -> int:
        """Grid points on the unrolled strip of 2*winding_blocks+1 circumferences."""
        return (2 * self.winding_blocks + 1) * self.cells

    def with_(self, **changes) -> "GridSpec":
        return replace(self, **changes)
