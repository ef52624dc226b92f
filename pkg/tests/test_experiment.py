from __future__ import annotations

import json

import numpy as np
import pytest

from steertile.bootstrap import BootstrapArtifacts, BootstrapConfig, bootstrap, history_frame_count
from steertile.distribution import LocalDistribution
from steertile.experiment import (
    FIXED_MODE,
    RESULT_COLUMNS,
    ExperimentSpec,
    ResultRow,
    at_slo,
    build_sequence,
    emit_report,
    fixed_baselines,
    gnuplot_series,
    parse_results,
    results_csv,
    run_experiment,
    series,
    sort_rows,
    summary,
)
from steertile.planner import CONSERVATIVE, NON_CONSERVATIVE, downsample_plan, uniform_plan
from steertile.profile import percentile_99
from steertile.runtime import FrameSequence, RuntimeConfig, run_sequence
from steertile.scenario import default_scene_spec, generate_scenario, generate_scene

SLOS = (50.0, 1500.0, 7000.0)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(default_scene_spec(seed=0, frame_count=60))


@pytest.fixture(scope="module")
def scenario():
    return generate_scenario(60, 1)


@pytest.fixture(scope="module")
def artifacts(scene):
    return bootstrap(scene, BootstrapConfig(SLOS, (NON_CONSERVATIVE, CONSERVATIVE), analytic_profiles=True))


@pytest.fixture(scope="module")
def rows(artifacts, scene, scenario):
    return run_experiment(artifacts, scene, scenario, ExperimentSpec(SLOS, seeds=(3,)))


class TestBootstrap:
    def test_oracle_history_is_ground_truth(self, artifacts, scene):
        n = history_frame_count(len(scene), 0.1)
        assert n == 10
        assert np.array_equal(artifacts.history.boxes, np.concatenate(scene[:n]))

    def test_overhead_is_scaled_p99(self, artifacts):
        for mode, per_slo in artifacts.planning_times_ms.items():
            for key, times in per_slo.items():
                assert len(times) == 10
                assert artifacts.overhead_ms[mode][key] == pytest.approx(1.1 * percentile_99(times))

    def test_artifact_files_round_trip(self, artifacts, tmp_path):
        paths = artifacts.save(tmp_path)
        assert sorted(p.name for p in paths.values()) == ["history.json", "overhead.json", "profiles.json"]
        back = BootstrapArtifacts.load(tmp_path)
        assert back.overhead_ms == artifacts.overhead_ms
        assert np.array_equal(back.history.boxes, artifacts.history.boxes)
        assert [m.name for m in back.family] == [m.name for m in artifacts.family]

    def test_missing_artifacts(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="profiles.json"):
            BootstrapArtifacts.load(tmp_path)

    def test_unknown_slo(self, artifacts):
        with pytest.raises(KeyError, match="rerun bootstrap"):
            artifacts.overhead(NON_CONSERVATIVE, 1234.0)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            BootstrapConfig(history_fraction=0.0)
        with pytest.raises(ValueError):
            BootstrapConfig(extractor="yolo")

    def test_detector_extractor(self, scene):
        art = bootstrap(scene[:20], BootstrapConfig((1500.0,), extractor="detector", analytic_profiles=True))
        truth = sum(len(f) for f in scene[:10])
        assert 0 < len(art.history) <= truth
        assert set(art.history.frame_ids.tolist()) <= set(range(10))

    def test_measured_profiles(self, scene):
        art = bootstrap(scene, BootstrapConfig((1500.0,), profiling_frames=8, latency_samples=200))
        for m in art.family:
            assert 0.0 <= min(m.accuracy) and max(m.accuracy) <= 1.0
            assert m.latency_p99 >= m.latency_mean > 0

    @pytest.mark.slow
    def test_history_fraction_barely_matters(self):
        frames = generate_scene(default_scene_spec(seed=2, frame_count=150))
        sc = generate_scenario(150, 2)
        seq = build_sequence(frames, sc)
        scores = []
        for fraction in (0.1, 0.3):
            art = bootstrap(frames, BootstrapConfig((2000.0,), history_fraction=fraction, analytic_profiles=True))
            m = run_sequence(seq, RuntimeConfig(slo_ms=2000.0, rng_seed=0), art.family, art.history,
                             art.overhead(NON_CONSERVATIVE, 2000.0))
            scores.append(m.mean_score)
        assert abs(scores[0] - scores[1]) < 0.02


class TestExperimentSpec:
    def test_requires_slos(self):
        with pytest.raises(ValueError):
            ExperimentSpec(())

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            ExperimentSpec(strategies=("remix",))
        with pytest.raises(ValueError):
            ExperimentSpec.from_dict({"slo": [1.0]})

    def test_dict_round_trip(self):
        spec = ExperimentSpec((100.0, 200.0), seeds=(1, 2))
        assert ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


class TestRunExperiment:
    def test_points(self, rows, artifacts):
        keys = {r.series_key for r in rows}
        assert {"adaptive[non_conservative]", "adaptive[conservative]",
                "static[non_conservative]", "static[conservative]"} <= keys
        assert {f"uniform:{m.name}" for m in artifacts.family} <= keys
        assert {f"downsample:{m.name}" for m in artifacts.family} <= keys
        assert all(r.frames == 60 for r in rows)

    def test_series_lengths(self, rows):
        for s in series(rows).values():
            assert s["slo_ms"] == list(SLOS)
            assert len(s["mean_score"]) == len(SLOS)

    def test_low_slo_is_degenerate_fallback(self, rows):
        low = [r for r in rows if r.strategy == "adaptive" and r.slo_ms == 50.0]
        assert low and all(r.frac_fallback == 1.0 and r.degenerate_frames == r.frames for r in low)
        flagged = {(p["series"], p["slo_ms"]) for p in summary(rows)["degenerate_points"]}
        assert ("adaptive[conservative]", 50.0) in flagged

    def test_fixed_rows_share_simulation(self, rows):
        d0 = [r for r in rows if r.strategy == "uniform:D0"]
        assert len({(r.mean_score, r.mean_latency_ms) for r in d0}) == 1
        assert all(r.mode == FIXED_MODE for r in d0)
        # misses can only fall as the SLO grows
        rates = [r.miss_rate_pct for r in sorted(d0, key=lambda r: r.slo_ms)]
        assert rates == sorted(rates, reverse=True)

    def test_row_fractions(self, rows):
        for r in rows:
            total = r.frac_adaptive + r.frac_uniform + r.frac_downsample + r.frac_fallback
            assert total == pytest.approx(1.0)

    def test_conservative_misses_less(self, rows):
        by = {(r.strategy, r.mode, r.slo_ms): r for r in rows}
        for slo in SLOS[1:]:
            assert by["adaptive", CONSERVATIVE, slo].miss_rate_pct <= by["adaptive", NON_CONSERVATIVE, slo].miss_rate_pct

    def test_parallel_matches_serial(self, artifacts, scene, scenario):
        spec = ExperimentSpec((1500.0,), modes=(NON_CONSERVATIVE,), seeds=(1,), strategies=("adaptive", "static"))
        serial = run_experiment(artifacts, scene, scenario, spec, jobs=1)
        parallel = run_experiment(artifacts, scene, scenario, spec, jobs=2)
        assert results_csv(serial) == results_csv(parallel)

    def test_scene_too_short(self, scene, scenario):
        with pytest.raises(ValueError):
            build_sequence(scene[:30], scenario)


class TestBaselines:
    def test_downsample_is_one_tile_uniform(self, artifacts, scene, scenario):
        local = LocalDistribution(scene[0])
        seq = build_sequence(scene, scenario)
        for m in artifacts.family:
            d = downsample_plan(m, local, NON_CONSERVATIVE)
            u = uniform_plan(m, local, NON_CONSERVATIVE, frame_width=m.input_side)
            assert u == d
            a = run_sequence(seq, RuntimeConfig(slo_ms=1000.0, rng_seed=4), artifacts.family, artifacts.history,
                             0.0, fixed_plan=d)
            b = run_sequence(seq, RuntimeConfig(slo_ms=1000.0, rng_seed=4), artifacts.family, artifacts.history,
                             0.0, fixed_plan=u)
            assert a.frames_csv() == b.frames_csv()

    def test_fixed_baselines_follow_strategies(self, artifacts):
        n = len(artifacts.family)
        assert len(fixed_baselines(artifacts, ExperimentSpec(SLOS))) == 2 * n
        assert len(fixed_baselines(artifacts, ExperimentSpec(SLOS, strategies=("uniform",)))) == n

    def test_at_slo_reaccounts(self, artifacts, scene, scenario):
        seq = FrameSequence(tuple(scene[:5]), tuple(scenario.deltas()[:5]))
        plan = downsample_plan(artifacts.family["D0"], LocalDistribution(scene[0]), NON_CONSERVATIVE)
        m = run_sequence(seq, RuntimeConfig(slo_ms=1e6), artifacts.family, artifacts.history, 0.0, fixed_plan=plan)
        assert not any(f.slo_missed for f in m.frames)
        assert all(f.slo_missed for f in at_slo(m.frames, 1e-3))


class TestReport:
    def test_empty_results_header_only(self, tmp_path):
        assert results_csv([]) == ",".join(RESULT_COLUMNS) + "\n"
        emit_report([], tmp_path)
        assert (tmp_path / "results.csv").read_text() == ",".join(RESULT_COLUMNS) + "\n"
        assert parse_results(results_csv([])) == []

    def test_round_trip(self, rows):
        assert parse_results(results_csv(rows)) == rows

    def test_round_trip_awkward_floats(self):
        r = ResultRow("uniform:D1", FIXED_MODE, 0.1 + 0.2, 7, 3, 100.0 / 3, 1e-17, 2 / 3, 0.0, 1.0, 0.0, 0.0, 0, 1)
        assert parse_results(results_csv([r])) == [r]

    def test_bad_header(self):
        with pytest.raises(ValueError):
            parse_results("a,b\n1,2\n")

    def test_emit_files(self, rows, tmp_path):
        written = emit_report(rows, tmp_path, ExperimentSpec(SLOS))
        dat = [n for n in written if n.endswith(".dat")]
        assert len(dat) == len(series(rows))
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["points"] == len(rows) and s["spec"]["slo_list_ms"] == list(SLOS)
        text = gnuplot_series(rows)["series_adaptive_conservative.dat"]
        assert len([ln for ln in text.splitlines() if not ln.startswith("#")]) == len(SLOS)

    def test_row_order_is_canonical(self, rows, tmp_path):
        emit_report(rows, tmp_path / "a")
        emit_report(sort_rows(list(reversed(rows))), tmp_path / "b")
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
