"""Backend selection and spectral helpers for the one-unit propagator.

Two interchangeable backends advance fields through a time unit: a compiled
FFTW core and a pure-numpy fallback.  Selection happens once at import,
overridable with POLYWIND_BACKEND=auto|c|py.  Results agree to FFT round-off;
the active backend is recorded in every run manifest.
"""

from __future__ import annotations

import os

import numpy as np

from . import _solver_py
from ._solver_py import NumericalInstability  # noqa: F401  (canonical home)
from .grid import GridSpec


def _select():
    choice = os.environ.get("POLYWIND_BACKEND", "auto").lower()
    if choice not in ("auto", "c", "py"):
        raise ValueError(f"POLYWIND_BACKEND must be auto, c, or py, got {choice!r}")
    if choice in ("auto", "c"):
        try:
            from . import _corekern

            return "c", _corekern.propagate
        except ImportError:
            if choice == "c":
                raise
    return "py", _solver_py.propagate


_BACKEND_NAME, _PROPAGATE = _select()


def backend_name() -> str:
    return _BACKEND_NAME


def propagate(state, factors, half_mult, full_mult, reverse=False) -> float:
    """Advance (rows, n) fields through one unit in place; returns log rescale."""
    if not state.flags.c_contiguous:
        raise ValueError("state must be C-contiguous (updated in place)")
    return _PROPAGATE(state, factors, half_mult, full_mult, reverse)


def heat_multipliers(n_points: int, dx: float, dt: float):
    """Spectral decay factors for a half and a full step on an n-point circle."""
    freq = np.fft.rfftfreq(n_points, d=dx)
    half = np.exp(-np.pi**2 * freq**2 * dt)
    full = half * half
    return half, full


def torus_multipliers(spec: GridSpec):
    return heat_multipliers(spec.cells, spec.dx, spec.dt)


def extended_multipliers(spec: GridSpec, window: int | None = None):
    """Multipliers for the unrolled strip of 2*window+1 circumferences."""
    w = spec.winding_blocks if window is None else window
    n = (2 * w + 1) * spec.cells
    return heat_multipliers(n, spec.dx, spec.dt)
