from __future__ import annotations

import itertools

import numpy as np
import pytest

from steertile.distribution import extract_history
from steertile.geometry import ActuationDelta
from steertile.planner import CONSERVATIVE, NON_CONSERVATIVE, budget_units, uniform_plan
from steertile.profile import ModelFamily
from steertile.runtime import (
    FRAME_COLUMNS,
    FrameSequence,
    RuntimeConfig,
    RuntimeState,
    aggregate,
    estimate_plan_overhead,
    overhead_from_times,
    run_frame,
    run_sequence,
)
from steertile.scenario import default_scene_spec, generate_scenario, generate_scene

from conftest import flat_profile


@pytest.fixture(scope="module")
def scene():
    return generate_scene(default_scene_spec(seed=5, frame_count=90))


@pytest.fixture(scope="module")
def history(scene):
    return extract_history(list(enumerate(scene[:10])))


@pytest.fixture(scope="module")
def sequence(scene):
    sc = generate_scenario(90, 4)
    return FrameSequence(tuple(scene), tuple(sc.deltas()))


def fake_clock(times_ms):
    """Clock whose successive start/stop pairs are ``times_ms`` apart."""
    ticks = []
    t = 0.0
    for d in times_ms:
        ticks += [t, t + d / 1e3]
        t += 1.0
    it = iter(ticks)
    return lambda: next(it)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"slo_ms": 0}, {"slo_ms": 10, "padding_fraction": 0.3},
                                    {"slo_ms": 10, "nms_iou_threshold": 1.0}, {"slo_ms": 10, "mode": "x"},
                                    {"slo_ms": 10, "planning_charge": "x"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RuntimeConfig(**kw)


class TestOverhead:
    def test_one_to_hundred(self):
        assert overhead_from_times(range(1, 101)) == pytest.approx(110.0)

    def test_constant(self):
        assert overhead_from_times([7.0] * 20) == pytest.approx(7.7)

    def test_measures_each_historical_frame(self, family, history):
        times = [float(t) for t in range(1, 21)]
        value, raw = estimate_plan_overhead(list(range(20)), history, family, RuntimeConfig(slo_ms=1000.0),
                                            clock=fake_clock(times))
        assert raw == pytest.approx(times)
        assert value == pytest.approx(20.0 * 1.1)

    def test_needs_ten_frames(self, family, history):
        with pytest.raises(ValueError):
            estimate_plan_overhead(list(range(9)), history, family, RuntimeConfig(slo_ms=1000.0))


class TestRunFrame:
    def test_full_coverage_with_perfect_models(self, history):
        # well separated objects so NMS cannot merge distinct ground truth
        c = np.stack(np.meshgrid(np.linspace(0.1, 0.9, 5), np.linspace(0.1, 0.9, 5)), -1).reshape(-1, 2)
        gt = np.concatenate([c - 0.02, c + 0.02], axis=1)
        fam = ModelFamily((flat_profile("p", 512, 1.0, 10.0, 12.0),))
        cfg = RuntimeConfig(slo_ms=1000.0, tree_depth=1)
        state = RuntimeState.create(fam, 5.0, cfg)
        r = run_frame(history, ActuationDelta(), gt, cfg, state)
        assert r.score == 1.0
        assert r.plan.kind in ("adaptive", "uniform")

    def test_empty_view_scores_one(self, family, history):
        cfg = RuntimeConfig(slo_ms=1000.0)
        state = RuntimeState.create(family, 5.0, cfg)
        r = run_frame(history, ActuationDelta(), np.zeros((0, 4)), cfg, state)
        assert r.score == 1.0 and r.n_objects == 0 and len(r.detections) == 0

    def test_budget_safety(self, family, history, sequence):
        cfg = RuntimeConfig(slo_ms=2000.0)
        state = RuntimeState.create(family, 25.0, cfg)
        for gt, d in itertools.islice(zip(sequence.ground_truth, sequence.deltas), 30):
            r = run_frame(history, d, gt, cfg, state)
            assert r.plan.latency_units <= budget_units(2000.0 - 25.0, cfg.step_ms)
            assert r.slo_missed == (r.simulated_latency_ms > cfg.slo_ms)

    def test_overhead_above_slo_falls_back(self, family, history, sequence):
        cfg = RuntimeConfig(slo_ms=100.0)
        m = run_sequence(sequence, cfg, family, history, overhead_ms=150.0)
        assert m.breakdown == {"fallback": 1.0}
        assert m.degenerate_frames == m.n_frames
        assert all(f.planning_ms == 0.0 for f in m.frames)
        assert all(f.plan.source == f"fallback:{family.cheapest().name}" for f in m.frames)

    def test_budget_below_cheapest_model_is_degenerate(self, family, history, sequence):
        cfg = RuntimeConfig(slo_ms=60.0)
        m = run_sequence(FrameSequence(sequence.ground_truth[:5], sequence.deltas[:5]), cfg, family, history, 5.0)
        assert m.degenerate_frames == 5

    def test_planning_time_is_charged(self, family, history, sequence):
        cfg = RuntimeConfig(slo_ms=1500.0)
        m = run_sequence(FrameSequence(sequence.ground_truth[:5], sequence.deltas[:5]), cfg, family, history, 40.0)
        assert all(f.planning_ms == 40.0 for f in m.frames)
        measured = run_sequence(FrameSequence(sequence.ground_truth[:5], sequence.deltas[:5]),
                                RuntimeConfig(slo_ms=1500.0, planning_charge="measured"), family, history, 40.0)
        assert all(0.0 < f.planning_ms < 40_000.0 for f in measured.frames)

    def test_fixed_plan_bypasses_planner(self, family, history, sequence):
        from steertile.distribution import LocalDistribution

        plan = uniform_plan(family["D3"], LocalDistribution(np.zeros((0, 4))), NON_CONSERVATIVE)
        m = run_sequence(FrameSequence(sequence.ground_truth[:5], sequence.deltas[:5]), RuntimeConfig(slo_ms=500.0),
                         family, history, 40.0, fixed_plan=plan)
        assert all(f.plan.assignments == plan.assignments for f in m.frames)
        assert all(f.planning_ms == 0.0 for f in m.frames)


class TestSequence:
    def test_empty_sequence(self, family, history):
        m = run_sequence(FrameSequence((), ()), RuntimeConfig(slo_ms=100.0), family, history, 5.0)
        assert m.n_frames == 0 and m.miss_rate_pct == 0.0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            FrameSequence((np.zeros((0, 4)),), ())

    def test_reproducible(self, family, history, sequence):
        cfg = RuntimeConfig(slo_ms=1500.0, rng_seed=9)
        a = run_sequence(sequence, cfg, family, history, 30.0)
        b = run_sequence(sequence, cfg, family, history, 30.0)
        assert a.frames_csv() == b.frames_csv() and a.summary_json() == b.summary_json()

    def test_metrics_invariants(self, family, history, sequence):
        m = run_sequence(sequence, RuntimeConfig(slo_ms=1500.0), family, history, 30.0)
        assert 0.0 <= m.miss_rate_pct <= 100.0
        assert sum(m.breakdown.values()) == pytest.approx(1.0)
        header = m.frames_csv().splitlines()[0].split(",")
        assert tuple(header) == FRAME_COLUMNS
        assert len(m.frames_csv().splitlines()) == m.n_frames + 1
        assert set(m.summary()) >= {"miss_rate_pct", "mean_latency_ms", "mean_score", "breakdown"}

    def test_conservative_misses_no_more_often(self, family, history, sequence):
        rates = {}
        for mode in (CONSERVATIVE, NON_CONSERVATIVE):
            rates[mode] = run_sequence(sequence, RuntimeConfig(slo_ms=1000.0, mode=mode, rng_seed=2),
                                       family, history, 30.0).miss_rate_pct
        assert rates[CONSERVATIVE] <= rates[NON_CONSERVATIVE]

    def test_aggregate_counts(self, family, history, sequence):
        m = run_sequence(FrameSequence(sequence.ground_truth[:4], sequence.deltas[:4]), RuntimeConfig(slo_ms=1e5),
                         family, history, 1.0)
        again = aggregate(m.frames)
        assert again.summary() == m.summary()
