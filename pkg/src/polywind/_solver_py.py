"""Pure-numpy propagation backend.

Reference implementation of the one-unit splitting scheme; the compiled
backend in _corekern mirrors the exact same operation order and rescale
schedule so the two differ only by FFT round-off.
"""

from __future__ import annotations

import numpy as np

RESCALE_EVERY = 64
RESCALE_HI = 1e120
RESCALE_LO = 1e-120


class NumericalInstability(RuntimeError):
    """State became non-finite or identically zero during propagation."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"propagation unstable at step {step}: {detail}")
        self.step = step


def propagate(state, factors, half_mult, full_mult, reverse=False):
    """Advance `state` through one time unit in place; returns the log rescale.

    state: (rows, n) real array, each row an independent field on the strip.
    factors: (steps, m) noise multipliers on one circumference; tiled across
        the strip (n must be a multiple of m).
    half_mult / full_mult: spectral heat multipliers for a half and a full
        time step on an n-point grid.
    reverse: apply the noise factors in reversed step order (adjoint flow).
    """
    steps, m = factors.shape
    rows, n = state.shape
    tiles = n // m
    if tiles * m != n:
        raise ValueError(f"state width {n} not a multiple of factor width {m}")

    log_scale = 0.0
    q = np.fft.rfft(state, axis=1)
    q *= half_mult
    state[:] = np.fft.irfft(q, n=n, axis=1)
    for s in range(steps):
        f = factors[steps - 1 - s] if reverse else factors[s]
        if tiles == 1:
            state *= f
        else:
            state.reshape(rows, tiles, m)[...] *= f
        q = np.fft.rfft(state, axis=1)
        q *= half_mult if s == steps - 1 else full_mult
        state[:] = np.fft.irfft(q, n=n, axis=1)
        if (s + 1) % RESCALE_EVERY == 0 or s == steps - 1:
            peak = np.abs(state).max()
            if not np.isfinite(peak):
                raise NumericalInstability(s + 1, "non-finite values")
            if peak == 0.0:
                raise NumericalInstability(s + 1, "state collapsed to zero")
            if peak > RESCALE_HI or peak < RESCALE_LO:
                state *= 1.0 / peak
                log_scale += np.log(peak)
    return log_scale
