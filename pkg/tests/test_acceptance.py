"""Full-scale statistical acceptance runs.

Every test here performs one production-scale check (M=128, steps=1000,
J=4, L=1 unless the check itself varies them) and records a single
"PASS/FAIL <check>: <detail>" line with the observed statistic and its
gate; the lines are reprinted together at the end of the session.  The
module takes about half an hour on one core — run it deliberately:

    python3 -m pytest tests/test_acceptance.py -v
"""

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from polywind.config import build_config
from polywind.endpoint import integer_part_law, line_evolve
from polywind.fields import BoundaryCondition, LineDensity
from polywind.grid import GridSpec
from polywind.kernels import direct_torus_kernel, heat_reference, torus_reduce, unit_kernel
from polywind.noise import new_noise
from polywind.pipeline import line_replica
from polywind.runner import run


def _check(label: str, passed: bool, detail: str):
    line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def _full_spec(beta: float, **kw) -> GridSpec:
    params = dict(
        points_per_unit=128,
        steps_per_unit=1000,
        winding_blocks=4,
        circumference=1,
        noise_strength=beta,
    )
    params.update(kw)
    return GridSpec(**params)


def _run(experiment: str, out: Path, **kw):
    flags = {
        "experiment": experiment,
        "M": 128,
        "steps": 1000,
        "J": 4,
        "L": 1,
        "threads": 1,
        "out": str(out),
    }
    flags.update(kw)
    outcome = run(build_config(None, flags))
    assert outcome.status == 0, f"{experiment} run failed: {outcome.summary}"
    return outcome


def _read_csv(path: Path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def clt_noisy(out_root):
    return _run("clt", out_root, beta=1.0, N=64, replicas=2000, seed=101)


@pytest.fixture(scope="module")
def clt_flat(out_root):
    return _run("clt", out_root, beta=0.0, N=64, replicas=2000, seed=102)


@pytest.fixture(scope="module")
def clt_mid(out_root):
    return _run("clt", out_root, beta=0.5, N=64, replicas=800, seed=103)


@pytest.fixture(scope="module")
def stationary_64(out_root):
    return _run("sigma-stationary", out_root, beta=1.0, N=64, replicas=500, seed=104)


def test_periodization_identity():
    worst = 0.0
    for beta in (0.0, 0.5, 1.0):
        spec = _full_spec(beta)
        for seed in range(20):
            if beta > 0:
                slab = new_noise(spec, (seed, 17), 1).slab(1)
            else:
                slab = np.zeros((spec.steps_per_unit, spec.cells))
            winding = unit_kernel(slab, spec)
            reduced = torus_reduce(winding)
            direct = direct_torus_kernel(slab, spec)
            scale = math.exp(reduced.log_norm - direct.log_norm)
            err = float(np.abs(reduced.mat * scale - direct.mat).max() / direct.mat.max())
            worst = max(worst, err)
            if beta == 0.0:
                break  # deterministic: every seed gives the same kernels
    _check(
        "periodization identity",
        worst < 1e-10,
        f"max rel diff {worst:.3e} over 20 seeds x couplings 0/0.5/1 (gate 1e-10)",
    )


def test_flat_closed_forms():
    spec = _full_spec(0.0)
    slab = np.zeros((spec.steps_per_unit, spec.cells))
    direct = direct_torus_kernel(slab, spec)
    reference = heat_reference(1.0, spec)
    scale = math.exp(direct.log_norm - reference.log_norm)
    kernel_err = float(np.abs(direct.mat * scale - reference.mat).max() / reference.mat.max())

    winding = unit_kernel(slab, spec)
    expected = (0.398942, 0.241971, 0.053991, 0.004432)
    law_err = max(
        abs(float(winding.physical(j)[0, 0]) - expected[j]) for j in range(4)
    )
    _check(
        "zero-coupling closed forms",
        kernel_err < 1e-6 and law_err < 1e-4,
        f"kernel vs heat reference rel {kernel_err:.3e} (gate 1e-6); "
        f"winding law from the origin abs {law_err:.3e} (gate 1e-4)",
    )


def test_path_sum_matches_line_route():
    # At 16 points per unit the time step must shrink with dx^2 to keep the
    # band-limit damping envelope; 100 steps is already far inside it.
    spec = _full_spec(1.0, points_per_unit=16, steps_per_unit=100)
    window = 10
    wb = spec.winding_blocks
    worst_joint = 0.0
    worst_law = 0.0
    for seed in range(10):
        noise = new_noise(spec, (seed, 23), 2)
        kernels = [unit_kernel(noise.slab(k), spec) for k in (1, 2)]
        ld = line_evolve(kernels, BoundaryCondition.delta(0), window=window)
        assert ld.lost_fraction == 0.0

        # explicit sum over every (intermediate cell, first winding, second
        # winding) path from a start pinned at cell 0
        joint = np.zeros((2 * window + 1, spec.cells))
        for dw1 in range(-wb, wb + 1):
            through = kernels[0].block(dw1)[:, 0]  # weights of cell 0 -> x1
            for dw2 in range(-wb, wb + 1):
                contrib = kernels[1].block(dw2) @ through * spec.dx
                joint[window + dw1 + dw2] += contrib
        joint /= joint.sum() * spec.dx

        worst_joint = max(worst_joint, float(np.abs(joint - ld.values).max() / ld.values.max()))
        brute = LineDensity(spec=spec, window=window, values=joint, log_mass=0.0)
        _, probs_brute = integer_part_law(brute)
        _, probs_line = integer_part_law(ld)
        worst_law = max(worst_law, float(np.abs(probs_brute - probs_line).max()))
    _check(
        "path sum vs line evolution",
        worst_joint < 1e-10 and worst_law < 1e-10,
        f"joint density rel {worst_joint:.3e}, winding law abs {worst_law:.3e} "
        f"over 10 seeds (gate 1e-10)",
    )


def test_quenched_variance_identity():
    spec = _full_spec(0.5)
    horizons = (1, 2, 4)
    replicas = 300
    variances = np.empty((replicas, len(horizons)))
    for r in range(replicas):
        snaps = line_replica(spec, horizons, 401, r)
        variances[r] = [snap.variance for snap in snaps]
    means = variances.mean(axis=0)
    ses = variances.std(axis=0, ddof=1) / math.sqrt(replicas)
    parts = []
    passed = True
    for i, horizon in enumerate(horizons):
        tolerance = max(3 * ses[i], 0.05 * horizon)
        ok = abs(means[i] - horizon) <= tolerance
        passed = passed and ok
        parts.append(f"N={horizon}: {means[i]:.4f}+/-{ses[i]:.4f}")
    _check(
        "quenched variance identity",
        passed,
        "; ".join(parts) + f" vs N over {replicas} replicas (gate max(3 SE, 5%))",
    )


def test_increment_mean_zero(out_root):
    outcome = _run("sigma-stationary", out_root, beta=1.0, N=32, replicas=500, seed=105)
    report = outcome.summary["increment_mean"]
    value, se = report["value"], report["std_error"]
    _check(
        "stationary increment mean",
        abs(value) <= 3 * se,
        f"mean {value:.5f} +/- {se:.5f} over 500 replicas x 32 units (gate 3 SE)",
    )


def test_winding_normality(clt_noisy, clt_flat):
    ks_noisy = clt_noisy.summary["ks"]["statistic"]
    ks_flat = clt_flat.summary["ks"]["statistic"]
    _check(
        "endpoint normality",
        ks_noisy < 0.05 and ks_flat < 0.04,
        f"KS {ks_noisy:.4f} at coupling 1 (gate 0.05), {ks_flat:.4f} at coupling 0 "
        f"(gate 0.04), 2000 replicas each at N=64",
    )


def test_diffusivity_floor(clt_flat, clt_mid, clt_noisy):
    runs = [(0.0, clt_flat), (0.5, clt_mid), (1.0, clt_noisy)]
    parts = []
    passed = True
    flat_value = None
    for beta, outcome in runs:
        report = outcome.summary["sigma_annealed"]
        value, se = report["value"], report["std_error"]
        if beta == 0.0:
            flat_value = value
        passed = passed and value >= 1.0 - 3 * se - 0.05
        parts.append(f"beta={beta:g}: {value:.4f}+/-{se:.4f}")
    passed = passed and abs(flat_value - 1.0) <= 0.05
    _check(
        "diffusivity floor",
        passed,
        "; ".join(parts) + " (gate >= 1 - 3 SE - 0.05; flat within 0.05 of 1)",
    )


def test_route_agreement(clt_noisy, stationary_64):
    annealed = clt_noisy.summary["sigma_annealed"]
    stationary = stationary_64.summary["sigma_stationary"]
    diff = abs(annealed["value"] - stationary["value"])
    joint = math.hypot(annealed["std_error"], stationary["std_error"])
    routes_ok = diff <= 3 * joint

    rows = _read_csv(stationary_64.run_dir / "results.csv")
    tail_rows = [r for r in rows if int(r["lag"]) > 5]
    worst_lag_se = max(
        abs(float(r["covariance"])) / float(r["std_error"]) for r in tail_rows
    )
    lags_ok = worst_lag_se <= 3.0
    _check(
        "diffusivity route agreement",
        routes_ok and lags_ok,
        f"annealed {annealed['value']:.4f}+/-{annealed['std_error']:.4f} vs "
        f"stationary {stationary['value']:.4f}+/-{stationary['std_error']:.4f} "
        f"({diff / joint if joint else 0:.2f} joint SE, gate 3); "
        f"lag>5 covariances within {worst_lag_se:.2f} SE of 0 (gate 3)",
    )


def test_boundary_equivalence(out_root):
    outcome = _run("cf-compare", out_root, beta=1.0, N=64, replicas=500, seed=106)
    parts = []
    passed = True
    for entry in outcome.summary["frequencies"]:
        ok = entry["discrepancy"] <= 3 * entry["joint_std_error"]
        passed = passed and ok
        # Diagnostic decomposition: the corner-pinned start floors the mean
        # displacement to -1/2, which shifts the pinned characteristic value
        # by a phase ~ modulus * sin(theta/(2 sqrt N)); the real parts carry
        # no such offset, so their agreement isolates it.
        pinned, stationary = entry["pinned"], entry["stationary"]
        phase = pinned["extras"]["modulus"] * abs(
            math.sin(entry["freq"] * 0.5 / math.sqrt(64))
        )
        real_z = abs(pinned["value"] - stationary["value"]) / math.hypot(
            pinned["extras"]["std_error_real"], stationary["extras"]["std_error_real"]
        )
        parts.append(
            f"freq {entry['freq']:g}: {entry['discrepancy_se']:.2f} SE "
            f"(= {entry['discrepancy'] / phase:.2f} of the corner-start phase "
            f"offset; real parts agree at {real_z:.2f} SE)"
        )
    _check(
        "boundary-condition equivalence",
        passed,
        "; ".join(parts) + " over 500 replicas per mode at N=64 (gate 3 SE)",
    )


def test_endpoint_mixing(out_root):
    noisy = _run("mixing", out_root, beta=1.0, N=8, replicas=200, seed=107)
    if "mixing_rate_error" in noisy.summary:
        noisy_ok = False
        noisy_part = (
            f"whole-unit decay fit at coupling 1 degenerate "
            f"({noisy.summary['mixing_rate_error']})"
        )
    else:
        rate = noisy.summary["mixing_rate"]
        value, se = rate["value"], rate["std_error"]
        r_squared = rate["extras"]["r_squared"]
        noisy_ok = value - 1.96 * se > 0 and r_squared > 0.9
        noisy_part = (
            f"rate {value:.2f}+/-{se:.2f} (R2 {r_squared:.4f}) at coupling 1, "
            f"200 replicas (gate >0 at 95%, R2>0.9)"
        )

    flat = _run("mixing", out_root, beta=0.0, N=8, replicas=2, seed=108)
    flat_rate = flat.summary["mixing_rate"]["value"]
    reference = flat.summary["flat_rate_reference"]
    flat_ok = abs(flat_rate - reference) <= 0.1 * reference
    _check(
        "endpoint mixing",
        noisy_ok and flat_ok,
        noisy_part
        + f"; flat control {flat_rate:.4f} vs {reference:.4f} (gate 10%)",
    )


def _variance_with_se(samples: np.ndarray):
    centered = samples - samples.mean()
    variance = float(np.var(samples, ddof=1))
    fourth = float(np.mean(centered**4))
    se = math.sqrt(max(fourth - variance**2, 0.0) / len(samples))
    return variance, se


def test_stationary_law(out_root):
    outcome = _run("stationary-check", out_root, beta=1.0, replicas=1000, seed=109)
    mean_se = outcome.summary["discrepancy_se"]
    rows = _read_csv(outcome.run_dir / "results.csv")
    legs = {}
    for method in ("bridge", "flow"):
        samples = np.array(
            [float(r["rho_square"]) for r in rows if r["method"] == method]
        )
        legs[method] = _variance_with_se(samples)
    var_diff = abs(legs["bridge"][0] - legs["flow"][0])
    var_joint = math.hypot(legs["bridge"][1], legs["flow"][1])
    var_se = var_diff / var_joint if var_joint else 0.0
    _check(
        "stationary law",
        mean_se <= 3.0 and var_se <= 3.0,
        f"density functional mean agrees at {mean_se:.2f} SE, variance at "
        f"{var_se:.2f} SE, 1000 replicas per leg (gate 3 SE)",
    )


def test_tails_and_ratio_stationarity(out_root):
    parts = []
    passed = True
    for beta, seed in ((0.5, 110), (1.0, 111)):
        outcome = _run("tails", out_root, beta=beta, replicas=300, seed=seed)
        r_squared = outcome.summary["tail_profile"]["extras"]["r_squared"]
        passed = passed and r_squared > 0.99
        parts.append(f"tail R2 {r_squared:.4f} at beta={beta:g}")
    for beta, seed in ((0.5, 112), (1.0, 113)):
        outcome = _run("ratio-stationarity", out_root, beta=beta, replicas=300, seed=seed)
        worst = max(
            outcome.summary["mean_discrepancy_se"],
            outcome.summary["variance_discrepancy_se"],
        )
        passed = passed and worst < 3.0
        parts.append(f"ratio disc {worst:.2f} SE at beta={beta:g}")
    _check(
        "tails and ratio stationarity",
        passed,
        "; ".join(parts) + " (gates R2>0.99, 3 SE; 300 replicas each)",
    )


def test_thread_determinism(out_root):
    base = [
        sys.executable,
        "-m",
        "polywind.cli",
        "sigma",
        "--beta", "1",
        "--N", "8",
        "--M", "128",
        "--J", "4",
        "--steps", "1000",
        "--replicas", "8",
        "--seed", "114",
    ]
    for threads, out in (("1", out_root / "serial"), ("2", out_root / "pooled")):
        proc = subprocess.run(
            base + ["--threads", threads, "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
    serial_dir = next((out_root / "serial").iterdir())
    pooled_dir = next((out_root / "pooled").iterdir())
    same_results = (serial_dir / "results.csv").read_bytes() == (
        pooled_dir / "results.csv"
    ).read_bytes()
    same_warnings = (serial_dir / "warnings.log").read_bytes() == (
        pooled_dir / "warnings.log"
    ).read_bytes()
    manifest = json.loads((serial_dir / "manifest.json").read_text())
    _check(
        "thread determinism",
        same_results and same_warnings,
        f"results.csv and warnings.log byte-identical across 1 and 2 worker "
        f"processes (config {manifest['config_hash']})",
    )
