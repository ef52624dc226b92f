"""
SLO sweeps over one scene and one PTZ scenario, with the baselines the
adaptive planner is compared against, plus report emission and parsing.

Strategies
    adaptive       per-frame planning (elected plan), one series per mode
    static         the frame-0 adaptive plan frozen for the whole sequence
    uniform:<M>    equal grid sized to model M, fixed for all frames
    downsample:<M> whole frame resized into model M, fixed for all frames
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bootstrap import BootstrapArtifacts
from .distribution import LocalDistribution, localize
from .geometry import CameraPose, accumulate
from .planner import CONSERVATIVE, MODES, NON_CONSERVATIVE, TilePlan, build_tree, downsample_plan, uniform_plan
from .runtime import (
    CHARGE_OVERHEAD,
    FrameResult,
    FrameSequence,
    RuntimeConfig,
    aggregate,
    fallback_plan,
    plan_frame,
    run_sequence,
)
from .scenario import ScenarioSpec

STRATEGY_KINDS = ("adaptive", "static", "uniform", "downsample")
FIXED_MODE = "fixed"
PLAN_KINDS = ("adaptive", "uniform", "downsample", "fallback")

# Xavier-class SLO list used for the sweep by default
DEFAULT_SLO_LIST_MS = (500.0, 750.0, 1000.0, 1250.0, 1500.0, 2000.0, 2500.0,
                       3000.0, 3500.0, 5000.0, 6500.0, 7000.0)


@dataclass(frozen=True)
class ExperimentSpec:
    slo_list_ms: tuple[float, ...] = DEFAULT_SLO_LIST_MS
    modes: tuple[str, ...] = (NON_CONSERVATIVE, CONSERVATIVE)
    seeds: tuple[int, ...] = (0,)
    strategies: tuple[str, ...] = STRATEGY_KINDS
    tree_depth: int = 3
    padding_fraction: float = 0.05
    nms_iou_threshold: float = 0.5
    step_ms: float = 1.0
    frame_width: int = 3840
    planning_charge: str = CHARGE_OVERHEAD

    def __post_init__(self) -> None:
        if not self.slo_list_ms:
            raise ValueError("slo_list_ms must not be empty")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        for s in self.strategies:
            if s not in STRATEGY_KINDS:
                raise ValueError(f"unknown strategy {s!r}")

    def runtime_config(self, slo_ms: float, mode: str, seed: int) -> RuntimeConfig:
        return RuntimeConfig(
            slo_ms=slo_ms, mode=mode, tree_depth=self.tree_depth, padding_fraction=self.padding_fraction,
            nms_iou_threshold=self.nms_iou_threshold, rng_seed=seed, step_ms=self.step_ms,
            frame_width=self.frame_width, planning_charge=self.planning_charge,
        )

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    mode: str
    slo_ms: float
    seed: int
    frames: int
    miss_rate_pct: float
    mean_latency_ms: float
    mean_score: float
    frac_adaptive: float
    frac_uniform: float
    frac_downsample: float
    frac_fallback: float
    degenerate_frames: int
    empty_frames: int

    @property
    def series_key(self) -> str:
        return self.strategy if self.mode == FIXED_MODE else f"{self.strategy}[{self.mode}]"


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow))
_INT_COLUMNS = {"seed", "frames", "degenerate_frames", "empty_frames"}
_FLOAT_COLUMNS = set(RESULT_COLUMNS) - _INT_COLUMNS - {"strategy", "mode"}


def _row(strategy: str, mode: str, slo_ms: float, seed: int, frames: Sequence[FrameResult]) -> ResultRow:
    m = aggregate(frames)
    return ResultRow(
        strategy, mode, float(slo_ms), int(seed), m.n_frames, m.miss_rate_pct, m.mean_latency_ms, m.mean_score,
        *(float(m.breakdown.get(k, 0.0)) for k in PLAN_KINDS),
        m.degenerate_frames, m.empty_frames,
    )


def at_slo(frames: Sequence[FrameResult], slo_ms: float) -> list[FrameResult]:
    """Re-account SLO misses of a fixed-plan run against another SLO."""
    return [replace(f, slo_missed=f.simulated_latency_ms > slo_ms) for f in frames]


def build_sequence(frames: Sequence[np.ndarray], scenario: ScenarioSpec) -> FrameSequence:
    if len(frames) < scenario.frame_count:
        raise ValueError(f"scene has {len(frames)} frames but the scenario needs {scenario.frame_count}")
    return FrameSequence(tuple(frames[: scenario.frame_count]), tuple(scenario.deltas()))


def static_plan(
    artifacts: BootstrapArtifacts,
    sequence: FrameSequence,
    config: RuntimeConfig,
    start_pose: Optional[CameraPose] = None,
) -> TilePlan:
    """The adaptive planner's choice for frame 0, later frozen."""
    pose = accumulate(start_pose or CameraPose(), sequence.deltas[0])
    local = localize(artifacts.history, pose, config.cull_threshold)
    budget = config.slo_ms - artifacts.overhead(config.mode, config.slo_ms)
    adaptive, _ = plan_frame(local, artifacts.family, build_tree(config.tree_depth), config, budget)
    return adaptive


def fixed_baselines(artifacts: BootstrapArtifacts, spec: ExperimentSpec) -> list[TilePlan]:
    """Uniform and down-sampling plans per model; accuracy is re-estimated every frame."""
    empty = LocalDistribution(np.zeros((0, 4)))
    plans = []
    for model in artifacts.family:
        if "uniform" in spec.strategies:
            plans.append(uniform_plan(model, empty, NON_CONSERVATIVE, step_ms=spec.step_ms,
                                      frame_width=spec.frame_width))
        if "downsample" in spec.strategies:
            plans.append(downsample_plan(model, empty, NON_CONSERVATIVE, spec.step_ms))
    return plans


# -- jobs -------------------------------------------------------------------------
# Each job is isolated and deterministic; results are merged in a fixed order.

def _adaptive_job(args) -> list[ResultRow]:
    artifacts, sequence, spec, slo, mode, seed = args
    cfg = spec.runtime_config(slo, mode, seed)
    m = run_sequence(sequence, cfg, artifacts.family, artifacts.history, artifacts.overhead(mode, slo))
    return [_row("adaptive", mode, slo, seed, m.frames)]


def _static_job(args) -> list[ResultRow]:
    artifacts, sequence, spec, slo, mode, seed = args
    cfg = spec.runtime_config(slo, mode, seed)
    plan = static_plan(artifacts, sequence, cfg)
    if plan.is_empty:
        # nothing fits: freeze the runtime's fallback instead
        plan = fallback_plan(artifacts.family, LocalDistribution(np.zeros((0, 4))), mode, spec.step_ms)
    m = run_sequence(sequence, cfg, artifacts.family, artifacts.history, 0.0, fixed_plan=plan)
    return [_row("static", mode, slo, seed, m.frames)]


def _fixed_job(args) -> list[ResultRow]:
    artifacts, sequence, spec, plan, seed = args
    # the simulation does not depend on the SLO; misses are re-accounted per SLO
    cfg = spec.runtime_config(max(spec.slo_list_ms), NON_CONSERVATIVE, seed)
    m = run_sequence(sequence, cfg, artifacts.family, artifacts.history, 0.0, fixed_plan=plan)
    return [_row(plan.source, FIXED_MODE, slo, seed, at_slo(m.frames, slo)) for slo in spec.slo_list_ms]


def _jobs(artifacts, sequence, spec):
    for seed in spec.seeds:
        for mode in spec.modes:
            for slo in spec.slo_list_ms:
                if "adaptive" in spec.strategies:
                    yield _adaptive_job, (artifacts, sequence, spec, slo, mode, seed)
                if "static" in spec.strategies:
                    yield _static_job, (artifacts, sequence, spec, slo, mode, seed)
        for plan in fixed_baselines(artifacts, spec):
            yield _fixed_job, (artifacts, sequence, spec, plan, seed)


def _call(job):
    fn, args = job
    return fn(args)


def run_experiment(
    artifacts: BootstrapArtifacts,
    frames: Sequence[np.ndarray],
    scenario: ScenarioSpec,
    spec: ExperimentSpec,
    jobs: int = 1,
) -> list[ResultRow]:
    """Every (strategy, mode, SLO, seed) point, in a stable order."""
    sequence = build_sequence(frames, scenario)
    work = list(_jobs(artifacts, sequence, spec))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_call, work))
    else:
        batches = [_call(j) for j in work]
    rows = [r for batch in batches for r in batch]
    return sort_rows(rows)


def sort_rows(rows: Sequence[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=lambda r: (r.strategy, r.mode, r.seed, r.slo_ms))


# -- reports ---------------------------------------------------------------------

def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in RESULT_COLUMNS)])
    return buf.getvalue()


def parse_results(text: str) -> list[ResultRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise ValueError(f"unexpected results header: {reader.fieldnames}")
    out = []
    for rec in reader:
        kw = {}
        for c in RESULT_COLUMNS:
            v = rec[c]
            kw[c] = int(v) if c in _INT_COLUMNS else float(v) if c in _FLOAT_COLUMNS else v
        out.append(ResultRow(**kw))
    return out


def series(rows: Sequence[ResultRow]) -> dict[str, dict[str, list[float]]]:
    """Seed-averaged metrics per strategy, one entry per SLO (ascending)."""
    grouped: dict[str, dict[float, list[ResultRow]]] = {}
    for r in rows:
        grouped.setdefault(r.series_key, {}).setdefault(r.slo_ms, []).append(r)
    out = {}
    for key in sorted(grouped):
        slos = sorted(grouped[key])
        pts = [grouped[key][s] for s in slos]
        out[key] = {
            "slo_ms": slos,
            "mean_score": [float(np.mean([r.mean_score for r in p])) for p in pts],
            "miss_rate_pct": [float(np.mean([r.miss_rate_pct for r in p])) for p in pts],
            "mean_latency_ms": [float(np.mean([r.mean_latency_ms for r in p])) for p in pts],
        }
    return out


def summary(rows: Sequence[ResultRow], spec: Optional[ExperimentSpec] = None) -> dict:
    out = {"points": len(rows), "series": series(rows)}
    if spec is not None:
        out["spec"] = spec.to_dict()
    degenerate = sorted({(r.series_key, r.slo_ms) for r in rows if r.degenerate_frames})
    out["degenerate_points"] = [{"series": k, "slo_ms": s} for k, s in degenerate]
    return out


def _dat_name(key: str) -> str:
    return "series_" + "".join(c if c.isalnum() else "_" for c in key).strip("_") + ".dat"


def gnuplot_series(rows: Sequence[ResultRow]) -> dict[str, str]:
    """One whitespace-separated data file per strategy (accuracy vs SLO)."""
    files = {}
    for key, s in series(rows).items():
        lines = [f"# {key}", "# slo_ms mean_score miss_rate_pct mean_latency_ms"]
        for vals in zip(s["slo_ms"], s["mean_score"], s["miss_rate_pct"], s["mean_latency_ms"]):
            lines.append(" ".join(repr(v) for v in vals))
        files[_dat_name(key)] = "\n".join(lines) + "\n"
    return files


def emit_report(
    rows: Sequence[ResultRow],
    out_dir: str | Path,
    spec: Optional[ExperimentSpec] = None,
    gnuplot: bool = True,
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {"results.csv": out / "results.csv", "summary.json": out / "summary.json"}
    written["results.csv"].write_text(results_csv(rows))
    written["summary.json"].write_text(json.dumps(summary(rows, spec), indent=2, sort_keys=True))
    if gnuplot:
        for name, text in gnuplot_series(rows).items():
            (out / name).write_text(text)
            written[name] = out / name
    return written
