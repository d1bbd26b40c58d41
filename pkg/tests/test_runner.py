"""Experiment runner: outputs, determinism, gates, failure paths, replay."""

import json
import math

import numpy as np
import pytest

from polywind.config import ConfigError, build_config
from polywind import runner
from polywind.runner import run


def _config(**overrides):
    flags = {
        "experiment": "sigma",
        "beta": 0.0,
        "N": 8,
        "M": 16,
        "J": 2,
        "steps": 100,
        "replicas": 4,
        "seed": 7,
        "threads": 1,
    }
    flags.update(overrides)
    return build_config(None, flags)


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    return header, rows


class TestTaskPlan:
    def test_plain_experiments_use_contiguous_indices(self):
        tasks = runner._tasks(_config(experiment="sigma", replicas=5))
        assert tasks == [(i, None) for i in range(5)]

    def test_two_leg_experiments_use_disjoint_halves(self):
        for experiment, legs in [
            ("stationary-check", ("bridge", "flow")),
            ("cf-compare", ("pinned", "stationary")),
        ]:
            tasks = runner._tasks(_config(experiment=experiment, replicas=3))
            assert tasks[:3] == [(i, legs[0]) for i in range(3)]
            assert tasks[3:] == [(3 + i, legs[1]) for i in range(3)]

    def test_sweep_legs_scale_circumference(self):
        tasks = runner._tasks(_config(experiment="sweep-L", replicas=2, L=1))
        assert tasks == [(0, 1), (1, 1), (2, 2), (3, 2), (4, 4), (5, 4)]
        indices = [r for r, _ in tasks]
        assert len(set(indices)) == len(indices)

    def test_mixing_times_depend_on_coupling(self):
        assert runner.mixing_times(0.0) == (0.25, 0.5, 0.75, 1.0)
        assert runner.mixing_times(1.0) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)


class TestHelpers:
    def test_fmt_types(self):
        assert runner._fmt(3) == "3"
        assert runner._fmt(np.int64(3)) == "3"
        assert runner._fmt(0.5) == "0.5"
        assert runner._fmt(np.float64(0.1)) == repr(0.1)
        assert runner._fmt(True) == "true"
        assert runner._fmt("bridge") == "bridge"

    def test_json_safe_handles_nonfinite(self):
        out = runner._json_safe({"a": float("inf"), "b": float("nan"), "c": 1.5})
        assert out["a"] == "inf"
        assert out["b"] == "nan"
        assert out["c"] == 1.5

    def test_json_safe_handles_numpy(self):
        out = runner._json_safe({"a": np.float64(2.0), "b": np.arange(3), "c": np.bool_(True)})
        assert out == {"a": 2.0, "b": [0, 1, 2], "c": True}

    def test_discrepancy_se(self):
        assert runner._discrepancy_se([1.0, 1.0], [0.0, 0.0]) == 0.0
        assert runner._discrepancy_se([1.0, 2.0], [0.0, 0.0]) == math.inf
        assert runner._discrepancy_se([1.0, 2.0], [3.0, 4.0]) == pytest.approx(0.2)


class TestSigmaRun:
    def test_outputs_and_summary(self, tmp_path):
        config = _config(out=str(tmp_path))
        outcome = run(config)
        assert outcome.status == 0
        run_dir = outcome.run_dir
        assert run_dir == tmp_path / f"sigma-{config.config_hash()}"

        header, rows = _read_csv(run_dir / "results.csv")
        assert header == runner._RESULT_FIELDS["sigma"] + ["config_hash"]
        assert len(rows) == 4
        assert all(row["config_hash"] == config.config_hash() for row in rows)

        seconds = np.array([float(r["second_moment"]) for r in rows])
        report = outcome.summary["sigma_annealed"]
        assert report["value"] == pytest.approx(seconds.mean() / 8, rel=1e-12)
        assert "value_sampled" in report["extras"]

        for row in rows:
            total = int(row["winding_total"])
            assert float(row["Y_over_sqrtN"]) == pytest.approx(total / math.sqrt(8))

    def test_same_config_twice_is_byte_identical(self, tmp_path):
        config = _config(out=str(tmp_path))
        first = run(config).run_dir / "results.csv"
        before = first.read_bytes()
        run(config)
        assert first.read_bytes() == before

    def test_manifest_contract(self, tmp_path):
        config = _config(out=str(tmp_path), replicas=3)
        outcome = run(config)
        manifest = json.loads((outcome.run_dir / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert manifest["config_hash"] == config.config_hash()
        assert manifest["config"]["experiment"] == "sigma"
        assert manifest["backend"] in ("c", "py")
        assert manifest["wall_time_seconds"] >= 0
        assert manifest["tasks"] == [
            {"replica": i, "seed_entry": [7, i], "variant": None} for i in range(3)
        ]
        assert "results.csv" in manifest["files"]

    def test_warnings_log_carries_hash(self, tmp_path):
        config = _config(out=str(tmp_path))
        outcome = run(config)
        lines = (outcome.run_dir / "warnings.log").read_text().splitlines()
        assert lines[0] == f"config_hash={config.config_hash()}"


class TestSigmaStationaryRun:
    def test_lag_series_and_reports(self, tmp_path):
        config = _config(experiment="sigma-stationary", out=str(tmp_path), replicas=5)
        outcome = run(config)
        assert outcome.status == 0
        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert header == ["lag", "covariance", "std_error", "config_hash"]
        assert [int(r["lag"]) for r in rows] == [0, 1, 2, 3]
        assert float(rows[0]["covariance"]) > 0

        _, replica_rows = _read_csv(outcome.run_dir / "replicas.csv")
        assert len(replica_rows) == 5

        summary = outcome.summary
        assert summary["lag_cutoff"] == 3
        assert 0.5 < summary["sigma_stationary"]["value"] < 1.5
        zero = summary["increment_mean"]
        assert abs(zero["value"]) < 6 * zero["std_error"] + 0.05


class TestMixingRun:
    def test_flat_rate_matches_heat_decay(self, tmp_path):
        config = _config(experiment="mixing", out=str(tmp_path), replicas=2)
        outcome = run(config)
        assert outcome.status == 0
        rate = outcome.summary["mixing_rate"]
        reference = outcome.summary["flat_rate_reference"]
        assert reference == pytest.approx(2 * math.pi**2)
        assert rate["value"] == pytest.approx(reference, rel=1e-5)
        assert rate["extras"]["r_squared"] > 0.999999

        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert [float(r["time"]) for r in rows] == [0.25, 0.5, 0.75, 1.0]
        gaps = [float(r["gap_two_points"]) for r in rows]
        assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))

        _, replica_rows = _read_csv(outcome.run_dir / "replicas.csv")
        assert len(replica_rows) == 8

    def test_noisy_fit_degenerates_honestly(self, tmp_path):
        # Quenched coupling at this coarse grid floors the gaps within a
        # couple of units, leaving too few usable points for a decay fit;
        # the run still completes and records why.
        config = _config(experiment="mixing", beta=0.6, out=str(tmp_path), replicas=2)
        outcome = run(config)
        assert outcome.status == 0
        assert "mixing_rate_error" in outcome.summary


class TestStationaryCheckRun:
    def test_flat_legs_agree_exactly(self, tmp_path):
        config = _config(experiment="stationary-check", out=str(tmp_path), replicas=3)
        outcome = run(config)
        assert outcome.status == 0
        summary = outcome.summary
        assert summary["rho_square_bridge"]["value"] == pytest.approx(1.0, abs=1e-12)
        assert summary["rho_square_flow"]["value"] == pytest.approx(1.0, abs=1e-12)
        assert summary["discrepancy_se"] == 0.0

        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert len(rows) == 6
        assert {r["method"] for r in rows} == {"bridge", "flow"}

    def test_noisy_legs_agree_statistically(self, tmp_path):
        config = _config(
            experiment="stationary-check", beta=0.4, out=str(tmp_path), replicas=6
        )
        outcome = run(config)
        assert outcome.status == 0
        assert outcome.summary["discrepancy_se"] < 5.0


class TestTailsRun:
    def test_flat_profile_is_quadratic(self, tmp_path):
        config = _config(experiment="tails", J=3, out=str(tmp_path), replicas=2)
        outcome = run(config)
        assert outcome.status == 0
        report = outcome.summary["tail_profile"]
        assert report["value"] == pytest.approx(-1.0, rel=2e-2)
        assert report["extras"]["r_squared"] > 0.999

        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert [int(r["winding_offset"]) for r in rows] == [0, 1, 2, 3]
        squares = [float(r["mean_square"]) for r in rows]
        assert all(a > b > 0 for a, b in zip(squares, squares[1:]))


class TestRatioRun:
    def test_noisy_ratios_are_stationary(self, tmp_path):
        config = _config(
            experiment="ratio-stationarity", beta=0.3, J=3, out=str(tmp_path), replicas=4
        )
        outcome = run(config)
        assert outcome.status == 0
        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert len(rows) == 6  # two winding offsets x three positions
        for row in rows:
            assert float(row["mean"]) == pytest.approx(1.0, abs=0.5)
        assert outcome.summary["mean_discrepancy_se"] >= 0.0

        _, replica_rows = _read_csv(outcome.run_dir / "replicas.csv")
        assert len(replica_rows) == 24


class TestMomentsRun:
    def test_rows_and_stationarity(self, tmp_path):
        config = _config(experiment="moments", out=str(tmp_path), replicas=3)
        outcome = run(config)
        assert outcome.status == 0
        assert outcome.summary["unit_indices"] == [1, 4, 8]
        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert len(rows) == 6  # two exponents x three unit indices
        for row in rows:
            assert 0.2 < float(row["value"]) < 2.0
        _, replica_rows = _read_csv(outcome.run_dir / "replicas.csv")
        assert len(replica_rows) == 9


class TestCfCompareRun:
    def test_rows_and_agreement(self, tmp_path):
        config = _config(experiment="cf-compare", out=str(tmp_path), replicas=3)
        outcome = run(config)
        assert outcome.status == 0
        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert len(rows) == 18  # two boundary modes x three replicas x three freqs
        for row in rows:
            modulus = math.hypot(float(row["cf_real"]), float(row["cf_imag"]))
            assert modulus <= 1.0 + 1e-12
        frequencies = outcome.summary["frequencies"]
        assert [f["freq"] for f in frequencies] == [0.5, 1.0, 2.0]
        for entry in frequencies:
            assert entry["joint_std_error"] >= 0.0


class TestSweepRun:
    def test_legs_and_sigma(self, tmp_path):
        # The strip widens with the circumference, so keep the grid fine
        # enough that the far field stays resolved on every leg.
        config = _config(experiment="sweep-L", M=32, out=str(tmp_path), replicas=3)
        outcome = run(config)
        assert outcome.status == 0
        header, rows = _read_csv(outcome.run_dir / "results.csv")
        assert [int(r["circumference"]) for r in rows] == [1, 2, 4]
        for row in rows:
            assert float(row["sigma"]) > 0
        _, replica_rows = _read_csv(outcome.run_dir / "replicas.csv")
        assert len(replica_rows) == 9

    def test_sigma_reported_in_displacement_units(self):
        # Feed the aggregator identical per-winding second moments on every
        # leg; the reported diffusivity must then scale as circumference
        # squared, the displacement-unit convention that makes legs
        # comparable on one axis.
        config = _config(experiment="sweep-L", replicas=2)
        outputs = []
        for leg, mult in enumerate(runner.SWEEP_MULTIPLIERS):
            for replica in range(2):
                outputs.append(
                    {
                        "rows": [
                            {
                                "replica": leg * 2 + replica,
                                "circumference": mult,
                                "winding_total": 1 + replica,
                                "Y_over_sqrtN": 0.0,
                                "second_moment": 4.0,
                            }
                        ],
                        "warnings": [],
                    }
                )
        results, _, _ = runner._agg_sweep(config, outputs)
        for row, mult in zip(results, runner.SWEEP_MULTIPLIERS):
            assert row["sigma"] == pytest.approx(mult**2 * 4.0 / config.n_units)
            # Sampled windings 1 and 2 -> mean squared displacement
            # (mult^2 * 1 + mult^2 * 4) / 2 over n_units.
            assert row["sigma_sampled"] == pytest.approx(
                mult**2 * 2.5 / config.n_units
            )


class TestGates:
    def test_kernel_check_gates_pass(self, tmp_path):
        config = _config(
            experiment="kernel-check", beta=0.5, out=str(tmp_path), replicas=2
        )
        config = build_config(
            None,
            {
                "experiment": "kernel-check",
                "beta": 0.5,
                "M": 16,
                "J": 2,
                "steps": 100,
                "replicas": 2,
                "seed": 7,
                "threads": 1,
                "out": str(tmp_path),
                "assert": True,
            },
        )
        outcome = run(config)
        assert outcome.status == 0
        gates = outcome.summary["gates"]
        assert gates and all(g["passed"] for g in gates)
        assert not (outcome.run_dir / "failure.json").exists()

    def test_gate_override_forces_failure(self, tmp_path):
        config = build_config(
            None,
            {
                "experiment": "kernel-check",
                "beta": 0.5,
                "M": 16,
                "J": 2,
                "steps": 100,
                "replicas": 2,
                "seed": 7,
                "threads": 1,
                "out": str(tmp_path),
                "assert": True,
            },
        )
        outcome = run(config, gate_overrides={"periodization_error_max": 1e-30})
        assert outcome.status == 1
        record = json.loads((outcome.run_dir / "failure.json").read_text())
        assert record["failed_gates"]
        assert record["failed_gates"][0]["gate"] == "periodization_error_max"

    def test_sigma_flat_gates_pass(self, tmp_path):
        config = build_config(
            None,
            {
                "experiment": "sigma",
                "beta": 0.0,
                "N": 8,
                "M": 16,
                "J": 4,
                "steps": 100,
                "replicas": 30,
                "seed": 3,
                "threads": 1,
                "out": str(tmp_path),
                "assert": True,
            },
        )
        outcome = run(config)
        assert outcome.status == 0
        names = {g["gate"] for g in outcome.summary["gates"]}
        assert names == {"sigma_lower", "flat_sigma_window"}


class TestDeterminism:
    def test_thread_count_does_not_change_bytes(self, tmp_path):
        # Streaming (noisy) chains exercise the worker pool; the aggregation
        # must consume outputs in replica order regardless of which process
        # finished first.
        base = {
            "experiment": "sigma-stationary",
            "beta": 0.5,
            "N": 8,
            "M": 16,
            "J": 2,
            "steps": 100,
            "replicas": 5,
            "seed": 11,
        }
        serial = build_config(None, {**base, "threads": 1, "out": str(tmp_path / "a")})
        pooled = build_config(None, {**base, "threads": 3, "out": str(tmp_path / "b")})
        out_serial = run(serial)
        out_pooled = run(pooled)
        assert serial.config_hash() == pooled.config_hash()
        for name in ("results.csv", "replicas.csv", "summary.json", "warnings.log"):
            left = (out_serial.run_dir / name).read_bytes()
            right = (out_pooled.run_dir / name).read_bytes()
            assert left == right, f"{name} differs between thread counts"


class TestReplay:
    def test_replay_matches_stored_rows(self, tmp_path, capsys):
        config = _config(out=str(tmp_path))
        outcome = run(config)
        assert runner.replay(outcome.run_dir, 2) == 0
        assert "matches 1 stored row" in capsys.readouterr().out

    def test_replay_detects_tampering(self, tmp_path, capsys):
        config = _config(out=str(tmp_path))
        outcome = run(config)
        path = outcome.run_dir / "results.csv"
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(lines[2].split(",")[1], "999", 1)
        path.write_text("\n".join(lines) + "\n")
        assert runner.replay(outcome.run_dir, 1) == 1
        assert "MISMATCH" in capsys.readouterr().out

    def test_replay_unknown_replica(self, tmp_path, capsys):
        config = _config(out=str(tmp_path))
        outcome = run(config)
        assert runner.replay(outcome.run_dir, 99) == 1


class TestReplicaFailure:
    def test_instability_records_seed_for_replay(self, tmp_path):
        # At this coarse grid the widened strip of the doubled circumference
        # leg has an empty far field below the band-limit ripple, so the
        # solve aborts; the run must record the failing replica and its seed.
        config = _config(
            experiment="sweep-L", beta=0.4, J=3, out=str(tmp_path), replicas=2
        )
        outcome = run(config)
        assert outcome.status == 1
        record = json.loads((outcome.run_dir / "failure.json").read_text())
        error = record["error"]
        assert error["kind"] == "replica-failure"
        assert error["replica"] >= 2
        assert error["seed_entry"] == [7, error["replica"]]
        assert "replay" in error
        manifest = json.loads((outcome.run_dir / "manifest.json").read_text())
        assert manifest["status"] == "failed"


class TestPreflight:
    def test_clt_needs_enough_replicas(self, tmp_path):
        config = _config(experiment="clt", out=str(tmp_path), replicas=10)
        with pytest.raises(ConfigError, match="500"):
            run(config)

    def test_sigma_stationary_needs_horizon(self, tmp_path):
        config = _config(experiment="sigma-stationary", N=2, out=str(tmp_path))
        with pytest.raises(ConfigError, match="N >= 4"):
            run(config)

    def test_tails_needs_winding_blocks(self, tmp_path):
        config = _config(experiment="tails", J=2, out=str(tmp_path))
        with pytest.raises(ConfigError, match="J >= 3"):
            run(config)

    def test_flat_mixing_needs_quarter_units(self, tmp_path):
        config = _config(experiment="mixing", steps=102, out=str(tmp_path))
        with pytest.raises(ConfigError, match="divisible by 4"):
            run(config)
