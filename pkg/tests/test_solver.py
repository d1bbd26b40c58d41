import numpy as np
import pytest

import closedform as cf
from polywind import _solver_py, solver
from polywind.grid import GridSpec
from polywind.noise import increment_factors, new_noise
from polywind.solver import NumericalInstability


def _backends():
    backends = [("py", _solver_py.propagate)]
    try:
        from polywind import _corekern

        backends.append(("c", _corekern.propagate))
    except ImportError:
        pass
    return backends


BACKENDS = _backends()


@pytest.fixture
def spec():
    return GridSpec(points_per_unit=32, steps_per_unit=150, winding_blocks=3, noise_strength=1.0)


def _run(prop, spec, state, reverse=False, seed=5):
    g = new_noise(spec, seed, 1)
    fac = increment_factors(g.slab(1), spec)
    half, full = solver.heat_multipliers(state.shape[1], spec.dx, spec.dt)
    ls = prop(state, fac, half, full, reverse)
    return state, ls


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_pure_heat_matches_wrapped_gaussian(name, prop, spec):
    flat = spec.with_(noise_strength=0.0)
    n = flat.cells
    state = np.zeros((1, n))
    state[0, 0] = 1.0 / flat.dx
    _run(prop, flat, state)
    xs = np.arange(n) * flat.dx
    expected = cf.wrapped_gauss_density(xs, 1.0)
    assert np.abs(state[0] - expected).max() < 1e-10


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_mass_conserved_at_zero_coupling(name, prop, spec):
    flat = spec.with_(noise_strength=0.0)
    rng = np.random.default_rng(0)
    state = np.abs(rng.standard_normal((3, flat.cells))) + 0.1
    masses = state.sum(axis=1) * flat.dx
    _run(prop, flat, state)
    assert np.abs(state.sum(axis=1) * flat.dx - masses).max() < 1e-12


def test_backends_agree_to_roundoff(spec):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend unavailable")
    states = []
    for _, prop in BACKENDS:
        state = np.zeros((2, spec.extended_cells))
        state[0, 5] = 1.0 / spec.dx
        state[1, 40] = 2.0 / spec.dx
        _run(prop, spec, state, seed=9)
        states.append(state.copy())
    scale = np.abs(states[0]).max()
    assert np.abs(states[0] - states[1]).max() < 1e-12 * scale


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_reverse_is_adjoint(name, prop, spec):
    # <K a, b> = <a, K' b> for the one-unit flow and its reversed-noise flow
    n = spec.cells
    rng = np.random.default_rng(3)
    a = rng.random((1, n)) + 0.5
    b = rng.random((1, n)) + 0.5
    ka = a.copy()
    _run(prop, spec, ka, reverse=False, seed=21)
    ktb = b.copy()
    _run(prop, spec, ktb, reverse=True, seed=21)
    lhs = float(ka[0] @ b[0])
    rhs = float(a[0] @ ktb[0])
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_single_mode_decays_at_spectral_gap(name, prop):
    # lowest nonzero mode contracts by exp(-2 pi^2) per unit at zero coupling
    spec = GridSpec(points_per_unit=64, steps_per_unit=200, noise_strength=0.0)
    n = spec.cells
    xs = np.arange(n) * spec.dx
    state = 1.0 + 0.5 * np.cos(2 * np.pi * xs)[None, :].copy()
    _run(prop, spec, state)
    amp = (state[0] - 1.0).max() / 0.5
    assert abs(np.log(amp) + cf.HEAT_SPECTRAL_GAP) < 1e-8


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_rescale_bookkeeping_preserves_values(name, prop, spec):
    # huge input triggers the periodic rescale; log_scale restores the truth
    flat = spec.with_(noise_strength=0.0)
    state_big = np.zeros((1, flat.cells))
    state_big[0, 3] = 1e140
    _, ls = _run(prop, flat, state_big)
    state_ref = np.zeros((1, flat.cells))
    state_ref[0, 3] = 1.0
    _run(prop, flat, state_ref)
    rebuilt = state_big[0] * np.exp(ls - np.log(1e140))
    assert np.abs(rebuilt - state_ref[0]).max() < 1e-12 * state_ref.max()


@pytest.mark.parametrize("name,prop", BACKENDS)
def test_instability_error_carries_step(name, prop, spec):
    state = np.full((1, spec.cells), np.nan)
    with pytest.raises(NumericalInstability) as exc:
        _run(prop, spec, state)
    assert exc.value.step >= 1
    assert "step" in str(exc.value)


def test_tiling_width_must_divide(spec):
    state = np.ones((1, spec.cells + 1))
    g = new_noise(spec, 5, 1)
    fac = increment_factors(g.slab(1), spec)
    half, full = solver.heat_multipliers(spec.cells + 1, spec.dx, spec.dt)
    with pytest.raises(ValueError, match="multiple"):
        solver.propagate(state, fac, half, full)
