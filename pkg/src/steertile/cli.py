"""
Command-line entry point.

    steertile gen-scene     --out scene.json --seed 0
    steertile gen-scenario  --out scenario.json --frames 300 --seed 1
    steertile bootstrap     --scene scene.json --out-dir artifacts
    steertile plan          --artifacts artifacts --slo 1500 --zoom 2
    steertile simulate      --artifacts artifacts --scene scene.json --scenario scenario.json --slo 1500 --seed 0
    steertile sweep         --artifacts artifacts --scene scene.json --scenario scenario.json --seed 0 --out-dir out
    steertile report        --results out/results.csv --out-dir out

Every subcommand accepts ``--config file.json``; explicit flags override the
file. Failures exit nonzero with a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bootstrap import BootstrapArtifacts, BootstrapConfig, bootstrap
from .distribution import localize
from .experiment import (
    DEFAULT_SLO_LIST_MS,
    ExperimentSpec,
    build_sequence,
    emit_report,
    parse_results,
    run_experiment,
)
from .geometry import CameraPose
from .planner import MODES, NON_CONSERVATIVE, build_tree
from .runtime import RuntimeConfig, plan_frame, run_sequence
from .scenario import (
    ScenarioSpec,
    SceneSpec,
    default_scene_spec,
    generate_scenario,
    generate_scene,
    load_scene,
    save_scene,
)


class CLIError(Exception):
    pass


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise CLIError("config file must hold a JSON object")
    return cfg


def _merged(args: argparse.Namespace, keys: Sequence[str], defaults: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = _load_config(getattr(args, "config", None))
    out = dict(defaults)
    for k in keys:
        if k in cfg:
            out[k] = cfg[k]
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise CLIError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _floats(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _write_json(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# -- subcommands ----------------------------------------------------------------

def cmd_gen_scene(args) -> int:
    opts = _merged(args, ("out", "seed", "frames"), {"seed": 0, "frames": 300})
    _require(opts, "out")
    cfg = _load_config(args.config)
    if "scene" in cfg:
        spec = SceneSpec.from_dict({**cfg["scene"], "rng_seed": opts["seed"], "frame_count": opts["frames"]})
    else:
        spec = default_scene_spec(int(opts["seed"]), int(opts["frames"]))
    frames = generate_scene(spec)
    save_scene(spec, frames, opts["out"])
    print(json.dumps({"scene": opts["out"], "frames": len(frames), "objects": int(frames[0].shape[0])}))
    return 0


def cmd_gen_scenario(args) -> int:
    opts = _merged(args, ("out", "seed", "frames"), {"seed": 0, "frames": 300})
    _require(opts, "out")
    sc = generate_scenario(int(opts["frames"]), int(opts["seed"]))
    sc.save(opts["out"])
    print(json.dumps({"scenario": opts["out"], "actuations": [a.type for a in sc.actuations]}))
    return 0


def cmd_bootstrap(args) -> int:
    keys = ("scene", "out_dir", "slo", "modes", "history_fraction", "extractor", "analytic_profiles",
            "profiling_frames", "seed", "tree_depth", "step_ms")
    opts = _merged(args, keys, {"slo": list(DEFAULT_SLO_LIST_MS), "modes": list(MODES)})
    _require(opts, "scene", "out_dir")
    _, frames = load_scene(opts["scene"])
    fields = {
        "slo_list_ms": _floats(opts["slo"]),
        "modes": tuple(opts["modes"]),
        **{k: opts[k] for k in ("history_fraction", "extractor", "analytic_profiles", "profiling_frames", "seed",
                                "tree_depth", "step_ms") if k in opts},
    }
    art = bootstrap(frames, BootstrapConfig.from_dict(fields))
    paths = art.save(opts["out_dir"])
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def cmd_plan(args) -> int:
    keys = ("artifacts", "slo", "mode", "pan_deg", "tilt_deg", "zoom", "scenario", "frame", "tree_depth", "step_ms",
            "out")
    opts = _merged(args, keys, {"mode": NON_CONSERVATIVE, "pan_deg": 0.0, "tilt_deg": 0.0, "zoom": 1.0,
                                "tree_depth": 3, "step_ms": 1.0})
    _require(opts, "artifacts", "slo")
    art = BootstrapArtifacts.load(opts["artifacts"])
    slo = float(opts["slo"])
    if opts.get("scenario") is not None:
        poses = ScenarioSpec.load(opts["scenario"]).poses()
        frame = int(opts.get("frame") or 0)
        if not 0 <= frame < len(poses):
            raise CLIError(f"frame {frame} outside the scenario (0..{len(poses) - 1})")
        pose = poses[frame]
    else:
        pose = CameraPose(math.radians(float(opts["pan_deg"])), math.radians(float(opts["tilt_deg"])),
                          float(opts["zoom"]))
    cfg = RuntimeConfig(slo_ms=slo, mode=opts["mode"], tree_depth=int(opts["tree_depth"]),
                        step_ms=float(opts["step_ms"]))
    overhead = art.overhead(cfg.mode, slo)
    local = localize(art.history, pose, cfg.cull_threshold)
    adaptive, elected = plan_frame(local, art.family, build_tree(cfg.tree_depth), cfg, slo - overhead)
    _write_json({"pose": pose.to_dict(), "overhead_ms": overhead, "budget_ms": slo - overhead,
                 "adaptive": adaptive.to_dict(), "elected": elected.to_dict()}, opts.get("out"))
    return 0


def cmd_simulate(args) -> int:
    keys = ("artifacts", "scene", "scenario", "slo", "mode", "seed", "tree_depth", "step_ms", "padding_fraction",
            "out_dir")
    opts = _merged(args, keys, {"mode": NON_CONSERVATIVE, "tree_depth": 3, "step_ms": 1.0, "padding_fraction": 0.05})
    _require(opts, "artifacts", "scene", "scenario", "slo", "seed")
    art = BootstrapArtifacts.load(opts["artifacts"])
    _, frames = load_scene(opts["scene"])
    sequence = build_sequence(frames, ScenarioSpec.load(opts["scenario"]))
    cfg = RuntimeConfig(slo_ms=float(opts["slo"]), mode=opts["mode"], tree_depth=int(opts["tree_depth"]),
                        step_ms=float(opts["step_ms"]), padding_fraction=float(opts["padding_fraction"]),
                        rng_seed=int(opts["seed"]))
    metrics = run_sequence(sequence, cfg, art.family, art.history, art.overhead(cfg.mode, cfg.slo_ms))
    if opts.get("out_dir"):
        out = Path(opts["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "frames.csv").write_text(metrics.frames_csv())
        (out / "summary.json").write_text(metrics.summary_json() + "\n")
    print(metrics.summary_json())
    return 0


def cmd_sweep(args) -> int:
    keys = ("artifacts", "scene", "scenario", "slo", "modes", "seed", "strategies", "tree_depth", "step_ms",
            "padding_fraction", "out_dir", "jobs", "gnuplot")
    opts = _merged(args, keys, {"slo": list(DEFAULT_SLO_LIST_MS), "modes": list(MODES), "jobs": 1,
                                "gnuplot": True})
    _require(opts, "artifacts", "scene", "scenario", "seed", "out_dir")
    seeds = opts["seed"] if isinstance(opts["seed"], list) else [opts["seed"]]
    spec_fields = {"slo_list_ms": _floats(opts["slo"]), "modes": tuple(opts["modes"]),
                   "seeds": tuple(int(s) for s in seeds)}
    for k in ("strategies", "tree_depth", "step_ms", "padding_fraction"):
        if opts.get(k) is not None:
            spec_fields[k] = tuple(opts[k]) if isinstance(opts[k], list) else opts[k]
    spec = ExperimentSpec(**spec_fields)
    art = BootstrapArtifacts.load(opts["artifacts"])
    _, frames = load_scene(opts["scene"])
    rows = run_experiment(art, frames, ScenarioSpec.load(opts["scenario"]), spec, jobs=int(opts["jobs"]))
    paths = emit_report(rows, opts["out_dir"], spec, gnuplot=bool(opts["gnuplot"]))
    print(json.dumps({"points": len(rows), "files": sorted(paths)}))
    return 0


def cmd_report(args) -> int:
    opts = _merged(args, ("results", "out_dir", "gnuplot"), {"gnuplot": True})
    _require(opts, "results", "out_dir")
    rows = parse_results(Path(opts["results"]).read_text())
    paths = emit_report(rows, opts["out_dir"], gnuplot=bool(opts["gnuplot"]))
    print(json.dumps({"points": len(rows), "files": sorted(paths)}))
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steertile", description="Per-frame tile planning for steerable cameras.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON file with option values; flags override it")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-scene", cmd_gen_scene, "generate a synthetic global scene")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--frames", type=int)

    sp = add("gen-scenario", cmd_gen_scenario, "generate a random PTZ actuation script")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--frames", type=int)

    sp = add("bootstrap", cmd_bootstrap, "profile models, extract history, estimate overhead")
    sp.add_argument("--scene")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--slo", type=float, nargs="+")
    sp.add_argument("--modes", nargs="+", choices=MODES)
    sp.add_argument("--history-fraction", dest="history_fraction", type=float)
    sp.add_argument("--extractor", choices=("oracle", "detector"))
    sp.add_argument("--analytic-profiles", dest="analytic_profiles", action="store_true", default=None)
    sp.add_argument("--profiling-frames", dest="profiling_frames", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--tree-depth", dest="tree_depth", type=int)
    sp.add_argument("--step-ms", dest="step_ms", type=float)

    sp = add("plan", cmd_plan, "plan a single frame and print the plan as JSON")
    sp.add_argument("--artifacts")
    sp.add_argument("--slo", type=float)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--pan-deg", dest="pan_deg", type=float)
    sp.add_argument("--tilt-deg", dest="tilt_deg", type=float)
    sp.add_argument("--zoom", type=float)
    sp.add_argument("--scenario", help="take the pose from this scenario at --frame")
    sp.add_argument("--frame", type=int)
    sp.add_argument("--tree-depth", dest="tree_depth", type=int)
    sp.add_argument("--step-ms", dest="step_ms", type=float)
    sp.add_argument("--out")

    sp = add("simulate", cmd_simulate, "run one scenario at one SLO")
    sp.add_argument("--artifacts")
    sp.add_argument("--scene")
    sp.add_argument("--scenario")
    sp.add_argument("--slo", type=float)
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--tree-depth", dest="tree_depth", type=int)
    sp.add_argument("--step-ms", dest="step_ms", type=float)
    sp.add_argument("--padding-fraction", dest="padding_fraction", type=float)
    sp.add_argument("--out-dir", dest="out_dir")

    sp = add("sweep", cmd_sweep, "SLO sweep with baselines; writes results.csv and summary.json")
    sp.add_argument("--artifacts")
    sp.add_argument("--scene")
    sp.add_argument("--scenario")
    sp.add_argument("--slo", type=float, nargs="+")
    sp.add_argument("--modes", nargs="+", choices=MODES)
    sp.add_argument("--seed", type=int, nargs="+")
    sp.add_argument("--strategies", nargs="+", choices=("adaptive", "static", "uniform", "downsample"))
    sp.add_argument("--tree-depth", dest="tree_depth", type=int)
    sp.add_argument("--step-ms", dest="step_ms", type=float)
    sp.add_argument("--padding-fraction", dest="padding_fraction", type=float)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--no-gnuplot", dest="gnuplot", action="store_false", default=None)
    sp.add_argument("--out-dir", dest="out_dir")

    sp = add("report", cmd_report, "rebuild summary.json and series files from results.csv")
    sp.add_argument("--results")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--no-gnuplot", dest="gnuplot", action="store_false", default=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": message, "command": args.command}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
