"""Time the compiled propagation core against the pure-numpy fallback.

Runs the one-unit splitting scheme on the shapes the experiments actually
use (single-circle forward filter, unrolled-strip adjoint solve, and the
multi-row kernel stack) and reports per-unit wall time for each backend,
the speedup, and the worst relative disagreement between the two results.

Usage:
    python3 benchmarks/compare_backends.py [--steps 1000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from polywind import _solver_py
from polywind.grid import GridSpec
from polywind.noise import increment_factors
from polywind.solver import extended_multipliers, torus_multipliers

try:
    from polywind import _corekern
except ImportError:
    _corekern = None


def workloads(steps: int):
    """(label, state, factors, half, full) for the shapes the runner uses."""
    spec = GridSpec(
        noise_strength=1.0,
        points_per_unit=128,
        steps_per_unit=steps,
        winding_blocks=4,
        circumference=1,
    )
    rng = np.random.default_rng(12345)
    strip = (2 * spec.winding_blocks + 1) * spec.cells

    def noise():
        return increment_factors(
            rng.standard_normal((steps, spec.cells)), spec
        )

    half_t, full_t = torus_multipliers(spec)
    half_e, full_e = extended_multipliers(spec)
    yield "forward filter (1 x 128)", np.ones((1, spec.cells)), noise(), half_t, full_t
    yield "adjoint strip (1 x 1152)", np.ones((1, strip)), noise(), half_e, full_e
    kernel = np.zeros((9, strip))
    kernel[:, spec.cells // 2 :: spec.cells] = 1.0 / spec.dx
    yield "kernel stack (9 x 1152)", kernel, noise(), half_e, full_e


def time_backend(propagate, base, factors, half, full, repeat: int) -> tuple[float, np.ndarray]:
    state = np.empty_like(base)
    best = np.inf
    for _ in range(repeat):
        state[:] = base
        start = time.perf_counter()
        log_scale = propagate(state, factors, half, full, False)
        best = min(best, time.perf_counter() - start)
    return best, state * np.exp(log_scale)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=1000, help="time steps per unit")
    parser.add_argument("--repeat", type=int, default=5, help="timed repetitions, best kept")
    args = parser.parse_args()

    if _corekern is None:
        print("compiled backend unavailable; timing pure-numpy fallback only")

    print(f"{'workload':<26} {'py ms':>9} {'c ms':>9} {'speedup':>8} {'max rel diff':>13}")
    for label, base, factors, half, full in workloads(args.steps):
        py_time, py_result = time_backend(
            _solver_py.propagate, base, factors, half, full, args.repeat
        )
        if _corekern is None:
            print(f"{label:<26} {py_time * 1e3:>9.2f} {'-':>9} {'-':>8} {'-':>13}")
            continue
        c_time, c_result = time_backend(
            _corekern.propagate, base, factors, half, full, args.repeat
        )
        scale = np.abs(py_result).max()
        diff = np.abs(py_result - c_result).max() / scale
        print(
            f"{label:<26} {py_time * 1e3:>9.2f} {c_time * 1e3:>9.2f}"
            f" {py_time / c_time:>7.2f}x {diff:>13.3e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
