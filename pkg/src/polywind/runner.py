"""Experiment drivers: a process-parallel replica loop with deterministic outputs.

Each experiment maps a range of replica indices onto independent worker
calls (pure functions of the configuration and the replica index), then
reduces the collected per-replica records in replica-index order.  Because
the reduction consumes workers' outputs in a fixed order regardless of
which process produced them first, every output file is byte-identical
across thread counts and repeat runs.

A run writes into <output_dir>/<experiment>-<config_hash>/:
  results.csv   the experiment's primary table (schema per experiment)
  replicas.csv  per-replica records when results.csv is an aggregate
  summary.json  estimate reports and derived statistics
  manifest.json config echo, per-replica seed entries, timing, status
  warnings.log  one line per captured warning
  failure.json  machine-readable record when a gate or a replica fails

Every CSV row carries the configuration hash in its last column.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings as _warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .estimators import (
    DegenerateFitError,
    char_fn,
    clt_test,
    increment_mean,
    increment_moment,
    mean_report,
    mixing_rate,
    ratio_stationarity,
    sigma_annealed,
    sigma_stationary,
    tail_profile,
)
from .kernels import NumericalInstability, direct_torus_kernel, torus_reduce, unit_kernel
from .fields import DegenerateDensity
from .noise import new_noise
from .pipeline import (
    chain_replica,
    endpoint_flow_replica,
    flow_replica,
    kernel_column_replica,
    replica_seeds,
)
from .solver import backend_name
from .stationary import stationary_density

GATES_VERSION = "1"

# Default pass/fail thresholds used under --assert.  These are run-control
# defaults, overridable per run via run(..., gate_overrides=...).
DEFAULT_GATES = {
    "kernel-check": {"periodization_error_max": 1e-10},
    "sigma": {"sigma_lower_slack": 0.05, "flat_sigma_window": 0.05},
    "clt": {
        "ks_statistic": 0.05,
        "ks_statistic_flat": 0.04,
        "sigma_lower_slack": 0.05,
        "flat_sigma_window": 0.05,
    },
    "sigma-stationary": {"increment_mean_se": 3.0},
    "mixing": {"rate_confidence": 1.96, "fit_r_squared": 0.9, "flat_rate_tolerance": 0.1},
    "stationary-check": {"discrepancy_se": 3.0},
    "tails": {"fit_r_squared": 0.99},
    "ratio-stationarity": {"mean_discrepancy_se": 3.0, "variance_discrepancy_se": 3.0},
    "moments": {"stationarity_se": 4.0},
    "cf-compare": {"discrepancy_se": 3.0},
    "sweep-L": {"sigma_positive": 0.0},
}

CF_FREQUENCIES = (0.5, 1.0, 2.0)
RATIO_WINDING_OFFSETS = (0, 1)
STATIONARY_FLOW_UNITS = 20
LAG_CUTOFF_DEFAULT = 12
SWEEP_MULTIPLIERS = (1, 2, 4)
EDGE_MASS_WARN = 1e-6
MIXING_TIMES_NOISY = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
MIXING_TIMES_FLAT = (0.25, 0.5, 0.75, 1.0)

SEED_RULE = (
    "seed material for replica index r is the entropy pair (seed, r); "
    "its first child stream drives the noise, the second the sampling draws"
)

# Which file holds one row (or row group) per replica, for replay lookups.
_REPLICA_FILE = {
    "kernel-check": "results.csv",
    "sigma": "results.csv",
    "clt": "results.csv",
    "sigma-stationary": "replicas.csv",
    "mixing": "replicas.csv",
    "stationary-check": "results.csv",
    "tails": "replicas.csv",
    "ratio-stationarity": "replicas.csv",
    "moments": "replicas.csv",
    "cf-compare": "results.csv",
    "sweep-L": "replicas.csv",
}

_CHAIN_FIELDS = [
    "replica",
    "winding_total",
    "Y_over_sqrtN",
    "second_moment",
    "second_over_N",
    "displacement",
    "log_partition",
    "law_truncation_max",
]

# Column order of results.csv per experiment (config_hash is appended last).
_RESULT_FIELDS = {
    "kernel-check": [
        "replica",
        "periodization_error",
        "torus_sum",
        "torus_max",
        "log_norm",
        "edge_block_fraction",
    ],
    "sigma": _CHAIN_FIELDS,
    "clt": _CHAIN_FIELDS,
    "sigma-stationary": ["lag", "covariance", "std_error"],
    "mixing": [
        "time",
        "gap_two_points",
        "gap_two_points_se",
        "gap_uniform",
        "gap_uniform_se",
        "replicas_used",
    ],
    "stationary-check": ["replica", "method", "rho_square"],
    "tails": ["winding_offset", "mean_square", "std_error", "log_mean"],
    "ratio-stationarity": [
        "winding_offset",
        "position",
        "mean",
        "mean_std_error",
        "variance",
        "variance_std_error",
    ],
    "moments": ["unit_index", "exponent", "value", "std_error", "replicas_used"],
    "cf-compare": ["replica", "boundary", "freq", "cf_real", "cf_imag"],
    "sweep-L": [
        "circumference",
        "sigma",
        "sigma_std_error",
        "sigma_sampled",
        "sigma_sampled_std_error",
        "replicas_used",
        "n_units",
    ],
}

# Column order of replicas.csv for experiments whose results.csv aggregates.
_REPLICA_FIELDS = {
    "sigma-stationary": [
        "replica",
        "winding_total",
        "mean_increment",
        "mean_second",
        "log_partition",
    ],
    "mixing": ["replica", "time", "gap_two_points", "gap_uniform"],
    "tails": ["replica", "winding_offset", "kernel_value", "kernel_square"],
    "ratio-stationarity": ["replica", "winding_offset", "position", "ratio"],
    "moments": ["replica", "unit_index", "moment_p1", "moment_p2"],
    "sweep-L": ["replica", "circumference", "winding_total", "Y_over_sqrtN", "second_moment"],
}


class ReplicaFailure(RuntimeError):
    """A replica-level numerical failure, tagged with its seed for replay."""

    def __init__(self, replica: int, master_seed: int, message: str):
        super().__init__(replica, master_seed, message)
        self.replica = replica
        self.master_seed = master_seed
        self.message = message

    def __str__(self):
        return (
            f"replica {self.replica} failed: {self.message}; "
            f"seed entry for replay: ({self.master_seed}, {self.replica})"
        )


@dataclass
class RunOutcome:
    """Exit status plus where the run landed and what it concluded."""

    status: int
    run_dir: Path
    summary: dict


def mixing_times(beta: float):
    """Snapshot times for the contraction-gap experiment.

    With noise the gap decays fast enough that whole-unit times 1..8 span
    the usable range; without noise the decay rate is large and uniform, so
    quarter-unit times keep all points above the floating-point floor.
    """
    return MIXING_TIMES_FLAT if beta == 0 else MIXING_TIMES_NOISY


# ---------------------------------------------------------------------------
# Replica workers.  Each returns {"rows": [...]} plus optional arrays; all
# inputs and outputs are picklable and immutable once returned.


def _truncation_warnings(chain, replica: int):
    worst = chain.truncation_max()
    if worst > EDGE_MASS_WARN:
        return [
            f"replica={replica} winding truncation: law mass {worst:.3e} at the"
            " outermost winding blocks exceeds 1e-06; increase winding_blocks"
        ]
    return []


def _work_kernel_check(config: ExperimentConfig, replica: int, extra):
    spec = config.grid_spec()
    noise_ss, _ = replica_seeds(config.seed, replica)
    if spec.noise_strength > 0:
        slab = new_noise(spec, noise_ss, 1).slab(1)
    else:
        slab = np.zeros((spec.steps_per_unit, spec.cells))
    winding = unit_kernel(slab, spec)
    reduced = torus_reduce(winding)
    direct = direct_torus_kernel(slab, spec)
    scale = math.exp(reduced.log_norm - direct.log_norm)
    error = float(np.abs(reduced.mat * scale - direct.mat).max() / direct.mat.max())
    block_mass = winding.blocks.sum(axis=(1, 2))
    edge_fraction = float((block_mass[0] + block_mass[-1]) / block_mass.sum())
    notes = []
    if edge_fraction > EDGE_MASS_WARN:
        notes.append(
            f"replica={replica} winding truncation: block mass fraction "
            f"{edge_fraction:.3e} at the outermost winding blocks exceeds 1e-06"
        )
    return {
        "rows": [
            {
                "replica": replica,
                "periodization_error": error,
                "torus_sum": float(reduced.mat.sum()),
                "torus_max": float(reduced.mat.max()),
                "log_norm": float(reduced.log_norm),
                "edge_block_fraction": edge_fraction,
            }
        ],
        "warnings": notes,
    }


def _chain_row(config: ExperimentConfig, chain, replica: int) -> dict:
    root_n = math.sqrt(config.n_units)
    second = chain.second_moment_exact()
    return {
        "replica": replica,
        "winding_total": int(chain.winding_total()),
        "Y_over_sqrtN": chain.winding_total() / root_n,
        "second_moment": second,
        "second_over_N": second / config.n_units,
        "displacement": chain.displacement(),
        "log_partition": chain.log_partition,
        "law_truncation_max": chain.truncation_max(),
    }


def _work_sigma(config: ExperimentConfig, replica: int, extra):
    chain = chain_replica(config.grid_spec(), config.n_units, config.seed, replica, "pinned")
    return {
        "rows": [_chain_row(config, chain, replica)],
        "warnings": _truncation_warnings(chain, replica),
    }


def _work_sigma_stationary(config: ExperimentConfig, replica: int, extra):
    chain = chain_replica(config.grid_spec(), config.n_units, config.seed, replica, "stationary")
    means = chain.increment_means()
    seconds = chain.increment_seconds()
    return {
        "rows": [
            {
                "replica": replica,
                "winding_total": int(chain.winding_total()),
                "mean_increment": float(means.mean()),
                "mean_second": float(seconds.mean()),
                "log_partition": chain.log_partition,
            }
        ],
        "means": means,
        "seconds": seconds,
        "warnings": _truncation_warnings(chain, replica),
    }


def _work_mixing(config: ExperimentConfig, replica: int, extra):
    times = mixing_times(config.beta)
    gaps = flow_replica(config.grid_spec(), times, config.seed, replica)
    rows = [
        {
            "replica": replica,
            "time": float(t),
            "gap_two_points": float(gaps[i, 0]),
            "gap_uniform": float(gaps[i, 1]),
        }
        for i, t in enumerate(times)
    ]
    return {"rows": rows, "gaps": gaps}


def _work_stationary_check(config: ExperimentConfig, replica: int, extra):
    spec = config.grid_spec()
    if extra == "bridge":
        _, sampling_ss = replica_seeds(config.seed, replica)
        density = stationary_density(spec, np.random.default_rng(sampling_ss))
    else:
        density = endpoint_flow_replica(
            spec, STATIONARY_FLOW_UNITS, config.seed, replica, "uniform"
        )
    rho_square = float((density.values**2).sum() * spec.dx)
    return {"rows": [{"replica": replica, "method": extra, "rho_square": rho_square}]}


def _work_tails(config: ExperimentConfig, replica: int, extra):
    spec = config.grid_spec()
    stack = kernel_column_replica(spec, config.seed, replica, source_cell=0)
    offsets = np.arange(spec.winding_blocks + 1)
    values = np.array([float(stack[spec.winding_blocks + j, 0]) for j in offsets])
    rows = [
        {
            "replica": replica,
            "winding_offset": int(j),
            "kernel_value": values[j],
            "kernel_square": values[j] ** 2,
        }
        for j in offsets
    ]
    return {"rows": rows, "squares": values**2}


def _free_kernel(displacement: float) -> float:
    return math.exp(-0.5 * displacement * displacement) / math.sqrt(2.0 * math.pi)


def _ratio_cells(spec) -> list:
    return [0, spec.cells // 4, spec.cells // 2]


def _work_ratio(config: ExperimentConfig, replica: int, extra):
    spec = config.grid_spec()
    stack = kernel_column_replica(spec, config.seed, replica, source_cell=0)
    period = float(spec.circumference)
    rows = []
    ratios = {}
    for j in RATIO_WINDING_OFFSETS:
        per_position = []
        for cell in _ratio_cells(spec):
            position = cell * spec.dx
            ratio = float(stack[spec.winding_blocks + j, cell]) / _free_kernel(
                position + j * period
            )
            rows.append(
                {
                    "replica": replica,
                    "winding_offset": int(j),
                    "position": position,
                    "ratio": ratio,
                }
            )
            per_position.append(ratio)
        ratios[j] = np.array(per_position)
    return {"rows": rows, "ratios": ratios}


def _moment_units(n_units: int) -> list:
    return sorted({1, max(1, n_units // 2), n_units})


def _work_moments(config: ExperimentConfig, replica: int, extra):
    chain = chain_replica(config.grid_spec(), config.n_units, config.seed, replica, "stationary")
    offsets = chain.law_offsets()
    abs_offsets = np.abs(offsets).astype(float)
    rows = []
    laws = {}
    for unit in _moment_units(config.n_units):
        law = chain.laws[unit - 1]
        rows.append(
            {
                "replica": replica,
                "unit_index": unit,
                "moment_p1": float(law @ abs_offsets),
                "moment_p2": float(law @ (abs_offsets**2)),
            }
        )
        laws[unit] = law
    return {
        "rows": rows,
        "laws": laws,
        "offsets": offsets,
        "warnings": _truncation_warnings(chain, replica),
    }


def _work_cf(config: ExperimentConfig, replica: int, extra):
    chain = chain_replica(config.grid_spec(), config.n_units, config.seed, replica, extra)
    rows = []
    for freq in CF_FREQUENCIES:
        value = chain.conditional_cf(freq)
        rows.append(
            {
                "replica": replica,
                "boundary": extra,
                "freq": float(freq),
                "cf_real": float(value.real),
                "cf_imag": float(value.imag),
            }
        )
    return {"rows": rows, "warnings": _truncation_warnings(chain, replica)}


def _work_sweep(config: ExperimentConfig, replica: int, extra):
    spec = config.grid_spec().with_(circumference=int(extra))
    chain = chain_replica(spec, config.n_units, config.seed, replica, "pinned")
    root_n = math.sqrt(config.n_units)
    return {
        "rows": [
            {
                "replica": replica,
                "circumference": int(extra),
                "winding_total": int(chain.winding_total()),
                "Y_over_sqrtN": chain.winding_total() / root_n,
                "second_moment": chain.second_moment_exact(),
            }
        ],
        "warnings": _truncation_warnings(chain, replica),
    }


_WORKERS = {
    "kernel-check": _work_kernel_check,
    "sigma": _work_sigma,
    "clt": _work_sigma,
    "sigma-stationary": _work_sigma_stationary,
    "mixing": _work_mixing,
    "stationary-check": _work_stationary_check,
    "tails": _work_tails,
    "ratio-stationarity": _work_ratio,
    "moments": _work_moments,
    "cf-compare": _work_cf,
    "sweep-L": _work_sweep,
}


def _tasks(config: ExperimentConfig) -> list:
    """(replica_index, variant) pairs; indices are unique across the run."""
    count = config.replicas
    experiment = config.experiment
    if experiment == "stationary-check":
        return [(i, "bridge") for i in range(count)] + [
            (count + i, "flow") for i in range(count)
        ]
    if experiment == "cf-compare":
        return [(i, "pinned") for i in range(count)] + [
            (count + i, "stationary") for i in range(count)
        ]
    if experiment == "sweep-L":
        tasks = []
        for leg, mult in enumerate(SWEEP_MULTIPLIERS):
            value = config.circumference * mult
            tasks.extend((leg * count + i, value) for i in range(count))
        return tasks
    return [(i, None) for i in range(count)]


def _worker(args):
    """Top-level pool entry: run one replica, capturing warnings and failures."""
    config, replica, extra = args
    try:
        with _warnings.catch_warnings(record=True) as captured:
            _warnings.simplefilter("always")
            out = _WORKERS[config.experiment](config, replica, extra)
    except (NumericalInstability, DegenerateDensity, DegenerateFitError) as err:
        raise ReplicaFailure(replica, config.seed, f"{type(err).__name__}: {err}") from err
    notes = [f"replica={replica} {type(w.message).__name__}: {w.message}" for w in captured]
    out["warnings"] = notes + out.get("warnings", [])
    out["replica"] = replica
    return out


def _execute(config: ExperimentConfig, tasks: list) -> list:
    """Run all replica tasks, returning outputs in task order."""
    args = [(config, replica, extra) for replica, extra in tasks]
    workers = config.threads if config.threads > 0 else (os.cpu_count() or 1)
    workers = min(workers, len(args))
    if workers <= 1:
        return [_worker(a) for a in args]
    chunk = max(1, len(args) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, args, chunksize=chunk))


# ---------------------------------------------------------------------------
# Aggregation: fixed-order reductions over the collected worker outputs.


def _report_json(report) -> dict:
    return {
        "name": report.name,
        "value": report.value,
        "std_error": report.std_error,
        "replicas": report.replicas,
        "extras": dict(report.extras),
    }


def _discrepancy_se(values, ses):
    """Largest pairwise |difference| / joint standard error."""
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            joint = math.hypot(ses[i], ses[j])
            diff = abs(values[i] - values[j])
            if joint == 0.0:
                if diff != 0.0:
                    return float("inf")
                continue
            worst = max(worst, diff / joint)
    return worst


def _flat_rows(outputs) -> list:
    rows = []
    for out in outputs:
        rows.extend(out["rows"])
    return rows


def _agg_kernel_check(config, outputs):
    rows = _flat_rows(outputs)
    summary = {
        "periodization_error_max": max(r["periodization_error"] for r in rows),
        "edge_block_fraction_max": max(r["edge_block_fraction"] for r in rows),
    }
    return rows, None, summary


def _agg_sigma(config, outputs, with_clt: bool):
    rows = _flat_rows(outputs)
    seconds = np.array([r["second_moment"] for r in rows])
    totals = np.array([r["winding_total"] for r in rows], dtype=float)
    report = sigma_annealed(
        seconds, config.n_units, totals, config_hash=config.config_hash(), seed=config.seed
    )
    summary = {"sigma_annealed": _report_json(report)}
    if with_clt:
        # The gated normality check standardizes the real-valued endpoint
        # displacement by its own sampled scale (composite, conservative);
        # the integer winding count sits on a lattice whose KS distance to
        # any continuous law is floored at ~phi(0)/(sigma*sqrt(N)), so its
        # statistic is reported alongside but never gated.
        displacements = np.array([r["displacement"] for r in rows])
        second_w = float(np.mean(displacements * displacements))
        if second_w > 0:
            stat, p_value = clt_test(
                displacements, math.sqrt(second_w / config.n_units), config.n_units
            )
            summary["ks"] = {
                "statistic": float(stat),
                "p_value": float(p_value),
                "sigma_hat": math.sqrt(second_w / config.n_units),
            }
        else:
            summary["ks"] = {"error": "nonpositive displacement scale"}
        if report.value > 0:
            stat_int, p_int = clt_test(totals, math.sqrt(report.value), config.n_units)
            summary["ks_integer"] = {
                "statistic": float(stat_int),
                "p_value": float(p_int),
                "sigma_hat": math.sqrt(report.value),
            }
    return rows, None, summary


def _agg_sigma_stationary(config, outputs):
    replica_rows = _flat_rows(outputs)
    means = np.stack([out["means"] for out in outputs])
    seconds = np.stack([out["seconds"] for out in outputs])
    n_max = min(LAG_CUTOFF_DEFAULT, (config.n_units - 1) // 2)
    meta = {"config_hash": config.config_hash(), "seed": config.seed}
    report, series = sigma_stationary(means, seconds, n_max, **meta)
    zero_report = increment_mean(means, **meta)
    results = [
        {
            "lag": int(series.lags[i]),
            "covariance": float(series.estimates[i]),
            "std_error": float(series.std_errors[i]),
        }
        for i in range(len(series.lags))
    ]
    summary = {
        "sigma_stationary": _report_json(report),
        "increment_mean": _report_json(zero_report),
        "lag_cutoff": n_max,
    }
    return results, replica_rows, summary


def _agg_mixing(config, outputs):
    replica_rows = _flat_rows(outputs)
    times = np.array(mixing_times(config.beta))
    gaps = np.stack([out["gaps"] for out in outputs])
    count = gaps.shape[0]
    means = gaps.mean(axis=0)
    if count >= 2:
        ses = gaps.std(axis=0, ddof=1) / math.sqrt(count)
    else:
        ses = np.zeros_like(means)
    results = [
        {
            "time": float(times[i]),
            "gap_two_points": float(means[i, 0]),
            "gap_two_points_se": float(ses[i, 0]),
            "gap_uniform": float(means[i, 1]),
            "gap_uniform_se": float(ses[i, 1]),
            "replicas_used": count,
        }
        for i in range(len(times))
    ]
    summary = {}
    try:
        report = mixing_rate(
            times,
            means[:, 0],
            config_hash=config.config_hash(),
            seed=config.seed,
            replicas=count,
        )
        summary["mixing_rate"] = _report_json(report)
    except DegenerateFitError as err:
        summary["mixing_rate_error"] = str(err)
    if config.beta == 0:
        summary["flat_rate_reference"] = float(2.0 * math.pi**2)
    return results, replica_rows, summary


def _agg_stationary_check(config, outputs):
    rows = _flat_rows(outputs)
    meta = {"config_hash": config.config_hash(), "seed": config.seed}
    legs = {}
    for method in ("bridge", "flow"):
        samples = np.array([r["rho_square"] for r in rows if r["method"] == method])
        legs[method] = mean_report(f"rho_square_{method}", samples, **meta)
    diff = abs(legs["bridge"].value - legs["flow"].value)
    joint = math.hypot(legs["bridge"].std_error, legs["flow"].std_error)
    if diff == 0.0:
        diff_se = 0.0
    elif joint == 0.0:
        diff_se = float("inf")
    else:
        diff_se = diff / joint
    summary = {
        "rho_square_bridge": _report_json(legs["bridge"]),
        "rho_square_flow": _report_json(legs["flow"]),
        "discrepancy": diff,
        "joint_std_error": joint,
        "discrepancy_se": diff_se,
        "flow_units": STATIONARY_FLOW_UNITS,
    }
    return rows, None, summary


def _agg_tails(config, outputs):
    replica_rows = _flat_rows(outputs)
    squares = np.stack([out["squares"] for out in outputs])
    offsets = np.arange(config.winding_blocks + 1)
    report, profile = tail_profile(
        squares, offsets, config_hash=config.config_hash(), seed=config.seed
    )
    results = [
        {
            "winding_offset": int(row["offset"]),
            "mean_square": row["mean_square"],
            "std_error": row["std_error"],
            "log_mean": row["log_mean"],
        }
        for row in profile
    ]
    summary = {"tail_profile": _report_json(report)}
    return results, replica_rows, summary


def _agg_ratio(config, outputs):
    replica_rows = _flat_rows(outputs)
    spec = config.grid_spec()
    positions = [cell * spec.dx for cell in _ratio_cells(spec)]
    results = []
    per_offset = {}
    for j in RATIO_WINDING_OFFSETS:
        values = np.stack([out["ratios"][j] for out in outputs])
        rows, stats = ratio_stationarity(values, positions)
        for row in rows:
            results.append(
                {
                    "winding_offset": int(j),
                    "position": row["offset"],
                    "mean": row["mean"],
                    "mean_std_error": row["mean_std_error"],
                    "variance": row["variance"],
                    "variance_std_error": row["variance_std_error"],
                }
            )
        per_offset[f"winding_{j}"] = stats
    summary = {
        "per_offset": per_offset,
        "mean_discrepancy_se": max(s["max_mean_discrepancy_se"] for s in per_offset.values()),
        "variance_discrepancy_se": max(
            s["max_variance_discrepancy_se"] for s in per_offset.values()
        ),
    }
    return results, replica_rows, summary


def _agg_moments(config, outputs):
    replica_rows = _flat_rows(outputs)
    offsets = outputs[0]["offsets"]
    units = _moment_units(config.n_units)
    meta = {"config_hash": config.config_hash(), "seed": config.seed}
    results = []
    stationarity = {}
    for exponent in (1.0, 2.0):
        values = []
        ses = []
        for unit in units:
            laws = np.stack([out["laws"][unit] for out in outputs])
            report = increment_moment(laws, offsets, exponent, **meta)
            results.append(
                {
                    "unit_index": unit,
                    "exponent": exponent,
                    "value": report.value,
                    "std_error": report.std_error,
                    "replicas_used": report.replicas,
                }
            )
            values.append(report.value)
            ses.append(report.std_error)
        stationarity[f"p{exponent:g}_discrepancy_se"] = _discrepancy_se(values, ses)
    summary = {"stationarity": stationarity, "unit_indices": units}
    return results, replica_rows, summary


def _agg_cf(config, outputs):
    rows = _flat_rows(outputs)
    meta = {"config_hash": config.config_hash(), "seed": config.seed}
    frequencies = []
    for freq in CF_FREQUENCIES:
        reports = {}
        complex_means = {}
        for mode in ("pinned", "stationary"):
            values = np.array(
                [
                    complex(r["cf_real"], r["cf_imag"])
                    for r in rows
                    if r["boundary"] == mode and r["freq"] == freq
                ]
            )
            report = char_fn(values, freq, **meta)
            reports[mode] = report
            complex_means[mode] = complex(report.value, report.extras["imag"])
        diff = abs(complex_means["pinned"] - complex_means["stationary"])
        joint = math.hypot(reports["pinned"].std_error, reports["stationary"].std_error)
        if diff == 0.0:
            diff_se = 0.0
        elif joint == 0.0:
            diff_se = float("inf")
        else:
            diff_se = diff / joint
        frequencies.append(
            {
                "freq": freq,
                "pinned": _report_json(reports["pinned"]),
                "stationary": _report_json(reports["stationary"]),
                "discrepancy": diff,
                "joint_std_error": joint,
                "discrepancy_se": diff_se,
            }
        )
    summary = {
        "frequencies": frequencies,
        "discrepancy_se_max": max(f["discrepancy_se"] for f in frequencies),
    }
    return rows, None, summary


def _agg_sweep(config, outputs):
    replica_rows = _flat_rows(outputs)
    meta = {"config_hash": config.config_hash(), "seed": config.seed}
    results = []
    for mult in SWEEP_MULTIPLIERS:
        circumference = config.circumference * mult
        leg = [r for r in replica_rows if r["circumference"] == circumference]
        # Legs are comparable only in displacement units: one turn advances
        # the endpoint by one circumference, so the reported diffusivity is
        # circumference^2 times the per-unit winding second moment (the two
        # conventions coincide at circumference 1).
        seconds = np.array([r["second_moment"] for r in leg]) * float(circumference) ** 2
        totals = np.array([r["winding_total"] for r in leg], dtype=float) * circumference
        report = sigma_annealed(seconds, config.n_units, totals, **meta)
        results.append(
            {
                "circumference": circumference,
                "sigma": report.value,
                "sigma_std_error": report.std_error,
                "sigma_sampled": report.extras["value_sampled"],
                "sigma_sampled_std_error": report.extras["std_error_sampled"],
                "replicas_used": report.replicas,
                "n_units": config.n_units,
            }
        )
    summary = {"sweep": results}
    return results, replica_rows, summary


def _aggregate(config: ExperimentConfig, outputs: list):
    """Reduce worker outputs to (results rows, replica rows or None, summary)."""
    experiment = config.experiment
    if experiment == "kernel-check":
        return _agg_kernel_check(config, outputs)
    if experiment == "sigma":
        return _agg_sigma(config, outputs, with_clt=False)
    if experiment == "clt":
        return _agg_sigma(config, outputs, with_clt=True)
    if experiment == "sigma-stationary":
        return _agg_sigma_stationary(config, outputs)
    if experiment == "mixing":
        return _agg_mixing(config, outputs)
    if experiment == "stationary-check":
        return _agg_stationary_check(config, outputs)
    if experiment == "tails":
        return _agg_tails(config, outputs)
    if experiment == "ratio-stationarity":
        return _agg_ratio(config, outputs)
    if experiment == "moments":
        return _agg_moments(config, outputs)
    if experiment == "cf-compare":
        return _agg_cf(config, outputs)
    if experiment == "sweep-L":
        return _agg_sweep(config, outputs)
    raise ConfigError(f"unknown experiment {experiment!r}")


# ---------------------------------------------------------------------------
# Gate evaluation under --assert.


def _gate(name, observed, threshold, passed):
    return {
        "gate": name,
        "observed": observed,
        "threshold": threshold,
        "passed": bool(passed),
    }


def _sigma_gates(config, summary, limits):
    gates = []
    report = summary["sigma_annealed"]
    slack = limits["sigma_lower_slack"]
    upper = report["value"] + 3.0 * report["std_error"]
    gates.append(_gate("sigma_lower", upper, 1.0 - slack, upper >= 1.0 - slack))
    if config.beta == 0:
        window = limits["flat_sigma_window"]
        deviation = abs(report["value"] - 1.0)
        gates.append(_gate("flat_sigma_window", deviation, window, deviation <= window))
    return gates


def _evaluate_gates(config: ExperimentConfig, summary: dict, limits: dict) -> list:
    experiment = config.experiment
    gates = []
    if experiment == "kernel-check":
        observed = summary["periodization_error_max"]
        bound = limits["periodization_error_max"]
        gates.append(_gate("periodization_error_max", observed, bound, observed < bound))
    elif experiment in ("sigma", "clt"):
        gates.extend(_sigma_gates(config, summary, limits))
        if experiment == "clt":
            bound = limits["ks_statistic_flat"] if config.beta == 0 else limits["ks_statistic"]
            stat = summary["ks"].get("statistic")
            gates.append(
                _gate("ks_statistic", stat, bound, stat is not None and stat < bound)
            )
    elif experiment == "sigma-stationary":
        report = summary["increment_mean"]
        bound = limits["increment_mean_se"]
        if report["std_error"] == 0.0:
            observed = 0.0 if report["value"] == 0.0 else float("inf")
        else:
            observed = abs(report["value"]) / report["std_error"]
        gates.append(_gate("increment_mean_se", observed, bound, observed <= bound))
    elif experiment == "mixing":
        report = summary.get("mixing_rate")
        if report is None:
            gates.append(_gate("rate_positive", None, 0.0, False))
        else:
            confidence = limits["rate_confidence"]
            margin = report["value"] - confidence * report["std_error"]
            gates.append(_gate("rate_positive", margin, 0.0, margin > 0.0))
            r_squared = report["extras"]["r_squared"]
            bound = limits["fit_r_squared"]
            gates.append(_gate("fit_r_squared", r_squared, bound, r_squared > bound))
            if config.beta == 0:
                reference = summary["flat_rate_reference"]
                relative = abs(report["value"] - reference) / reference
                bound = limits["flat_rate_tolerance"]
                gates.append(_gate("flat_rate_match", relative, bound, relative <= bound))
    elif experiment == "stationary-check":
        observed = summary["discrepancy_se"]
        bound = limits["discrepancy_se"]
        gates.append(_gate("discrepancy_se", observed, bound, observed <= bound))
    elif experiment == "tails":
        report = summary["tail_profile"]
        r_squared = report["extras"]["r_squared"]
        bound = limits["fit_r_squared"]
        gates.append(_gate("fit_r_squared", r_squared, bound, r_squared > bound))
        gates.append(_gate("quadratic_decay", report["value"], 0.0, report["value"] < 0.0))
    elif experiment == "ratio-stationarity":
        for key in ("mean_discrepancy_se", "variance_discrepancy_se"):
            observed = summary[key]
            bound = limits[key]
            gates.append(_gate(key, observed, bound, observed <= bound))
    elif experiment == "moments":
        bound = limits["stationarity_se"]
        for key, observed in summary["stationarity"].items():
            gates.append(_gate(key, observed, bound, observed <= bound))
    elif experiment == "cf-compare":
        observed = summary["discrepancy_se_max"]
        bound = limits["discrepancy_se"]
        gates.append(_gate("discrepancy_se_max", observed, bound, observed <= bound))
    elif experiment == "sweep-L":
        bound = limits["sigma_positive"]
        for row in summary["sweep"]:
            gates.append(
                _gate(
                    f"sigma_positive_L{row['circumference']}",
                    row["sigma"],
                    bound,
                    row["sigma"] > bound,
                )
            )
    return gates


# ---------------------------------------------------------------------------
# File output.


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, fields: list, rows: list, config_hash: str):
    columns = fields + ["config_hash"]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join([_fmt(row[name]) for name in fields] + [config_hash]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        out = float(value)
        return out if math.isfinite(out) else repr(out)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    return value


def _write_json(path: Path, payload: dict):
    path.write_text(
        json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _manifest(config, tasks, status, started, finished=None, wall=None, warning_count=0, files=()):
    return {
        "experiment": config.experiment,
        "config": asdict(config),
        "config_hash": config.config_hash(),
        "version": __version__,
        "backend": backend_name(),
        "gates_version": GATES_VERSION,
        "status": status,
        "started_at": started,
        "finished_at": finished,
        "wall_time_seconds": wall,
        "replica_seed_rule": SEED_RULE,
        "tasks": [
            {
                "replica": replica,
                "seed_entry": [config.seed, replica],
                "variant": None if extra is None else str(extra),
            }
            for replica, extra in tasks
        ],
        "warning_count": warning_count,
        "files": list(files),
    }


def _preflight(config: ExperimentConfig):
    if config.experiment == "sigma-stationary" and config.n_units < 4:
        raise ConfigError("sigma-stationary needs N >= 4 for a lag cutoff of at least 1")
    if config.experiment == "tails" and config.winding_blocks < 3:
        raise ConfigError("tails needs J >= 3 to fit a quadratic over at least 4 offsets")
    if config.experiment == "clt" and config.replicas < 500:
        raise ConfigError("clt needs at least 500 replicas for the distribution test")
    if config.experiment == "mixing" and config.beta == 0 and config.steps_per_unit % 4:
        raise ConfigError(
            "mixing at beta=0 snapshots quarter units; steps must be divisible by 4"
        )


def run_dir_for(config: ExperimentConfig) -> Path:
    return Path(config.output_dir) / f"{config.experiment}-{config.config_hash()}"


def run(config: ExperimentConfig, gate_overrides: dict | None = None) -> RunOutcome:
    """Execute one experiment end to end; return status and the run directory.

    Status 0: completed (and, with assert_gates, all gates passed);
    status 1: a gate failed or a replica failed numerically.  Configuration
    errors raise ConfigError before anything is written.
    """
    _preflight(config)
    tasks = _tasks(config)
    out_dir = run_dir_for(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_hash = config.config_hash()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    clock = time.monotonic()
    _write_json(out_dir / "manifest.json", _manifest(config, tasks, "running", started))

    try:
        outputs = _execute(config, tasks)
    except ReplicaFailure as failure:
        record = {
            "config_hash": config_hash,
            "experiment": config.experiment,
            "error": {
                "kind": "replica-failure",
                "replica": failure.replica,
                "seed_entry": [failure.master_seed, failure.replica],
                "message": failure.message,
                "replay": f"polywind replay {out_dir} --replica {failure.replica}",
            },
        }
        _write_json(out_dir / "failure.json", record)
        wall = time.monotonic() - clock
        finished = datetime.now(timezone.utc).isoformat(timespec="seconds")
        _write_json(
            out_dir / "manifest.json",
            _manifest(config, tasks, "failed", started, finished, wall, files=["failure.json"]),
        )
        return RunOutcome(status=1, run_dir=out_dir, summary=record)

    results, replica_rows, summary = _aggregate(config, outputs)
    summary = {
        "experiment": config.experiment,
        "config_hash": config_hash,
        "beta": config.beta,
        "n_units": config.n_units,
        "replicas": config.replicas,
        "seed": config.seed,
        **summary,
    }

    files = ["results.csv", "summary.json", "manifest.json", "warnings.log"]
    _write_csv(out_dir / "results.csv", _RESULT_FIELDS[config.experiment], results, config_hash)
    if replica_rows is not None:
        _write_csv(
            out_dir / "replicas.csv", _REPLICA_FIELDS[config.experiment], replica_rows, config_hash
        )
        files.insert(1, "replicas.csv")

    notes = []
    for out in outputs:
        notes.extend(out.get("warnings", []))
    warning_lines = [f"config_hash={config_hash}"] + notes
    (out_dir / "warnings.log").write_text("\n".join(warning_lines) + "\n", encoding="utf-8")

    status = 0
    if config.assert_gates:
        limits = dict(DEFAULT_GATES.get(config.experiment, {}))
        limits.update(gate_overrides or {})
        gates = _evaluate_gates(config, summary, limits)
        summary["gates"] = gates
        summary["gates_version"] = GATES_VERSION
        failed = [g for g in gates if not g["passed"]]
        if failed:
            status = 1
            _write_json(
                out_dir / "failure.json",
                {
                    "config_hash": config_hash,
                    "experiment": config.experiment,
                    "gates_version": GATES_VERSION,
                    "failed_gates": failed,
                },
            )
            files.append("failure.json")

    _write_json(out_dir / "summary.json", summary)
    wall = time.monotonic() - clock
    finished = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _write_json(
        out_dir / "manifest.json",
        _manifest(config, tasks, "complete", started, finished, wall, len(notes), files),
    )
    return RunOutcome(status=status, run_dir=out_dir, summary=summary)


# ---------------------------------------------------------------------------
# Replay: recompute one replica from its logged seed and check it against
# the stored per-replica rows.


def replay(run_path, replica: int | None = None) -> int:
    """Recompute one replica of a finished run and compare to its stored rows.

    Prints the recomputed rows as CSV; returns 0 when they match the stored
    file byte for byte, 1 on any mismatch.
    """
    run_path = Path(run_path)
    manifest = json.loads((run_path / "manifest.json").read_text(encoding="utf-8"))
    config = ExperimentConfig(**manifest["config"])
    tasks = _tasks(config)
    if replica is None:
        replica = tasks[0][0]
    chosen = [(r, extra) for r, extra in tasks if r == replica]
    if not chosen:
        print(f"replica {replica} is not part of this run (indices 0..{tasks[-1][0]})")
        return 1
    out = _worker((config, chosen[0][0], chosen[0][1]))

    experiment = config.experiment
    stored_name = _REPLICA_FILE[experiment]
    if stored_name == "results.csv":
        fields = _RESULT_FIELDS[experiment]
    else:
        fields = _REPLICA_FIELDS[experiment]
    config_hash = config.config_hash()
    computed = [",".join(fields + ["config_hash"])]
    for row in out["rows"]:
        computed.append(",".join([_fmt(row[name]) for name in fields] + [config_hash]))
    print("\n".join(computed))

    stored_path = run_path / stored_name
    if not stored_path.exists():
        print(f"stored file {stored_name} not found; nothing to compare")
        return 1
    stored_lines = stored_path.read_text(encoding="utf-8").splitlines()
    header = stored_lines[0].split(",")
    replica_col = header.index("replica")
    matching = [
        line for line in stored_lines[1:] if line.split(",")[replica_col] == str(replica)
    ]
    if matching == computed[1:]:
        print(f"replay matches {len(matching)} stored row(s) in {stored_name}")
        return 0
    print(f"replay MISMATCH against {stored_name}:")
    for line in matching:
        print(f"  stored:   {line}")
    for line in computed[1:]:
        print(f"  computed: {line}")
    return 1
