"""
Bootstrap phase: profile the model family, collect the object history from
the first frames of a scene, and estimate the plan-creation overhead for each
SLO the experiments will use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detector import SimulatedDetector, nms_merge
from .distribution import ObjectHistory, extract_history, oracle_extractor
from .planner import MODES, NON_CONSERVATIVE, grid_regions, grid_size
from .profile import ModelFamily, load_profiles, save_profiles
from .runtime import MIN_OVERHEAD_FRAMES, RuntimeConfig, estimate_plan_overhead
from .synthetic import LatentModel, analytic_family, default_latent_family, profile_family

EXTRACTORS = ("oracle", "detector")

PROFILES_FILE = "profiles.json"
HISTORY_FILE = "history.json"
OVERHEAD_FILE = "overhead.json"


@dataclass(frozen=True)
class BootstrapConfig:
    slo_list_ms: tuple[float, ...] = (1000.0,)
    modes: tuple[str, ...] = (NON_CONSERVATIVE,)
    history_fraction: float = 0.10
    extractor: str = "oracle"
    # frames (from the start of the scene) used to build profiles
    profiling_frames: int = 30
    # skip measurement and evaluate the latent curves directly
    analytic_profiles: bool = False
    latency_samples: int = 1000
    seed: int = 0
    tree_depth: int = 3
    step_ms: float = 1.0
    frame_width: int = 3840

    def __post_init__(self) -> None:
        if not self.slo_list_ms:
            raise ValueError("slo_list_ms must not be empty")
        if not 0 < self.history_fraction <= 1:
            raise ValueError("history_fraction must lie in (0, 1]")
        if self.extractor not in EXTRACTORS:
            raise ValueError(f"unknown extractor {self.extractor!r}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapConfig":
        d = dict(d)
        for key in ("slo_list_ms", "modes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _slo_key(slo_ms: float) -> str:
    return repr(float(slo_ms))


@dataclass
class BootstrapArtifacts:
    family: ModelFamily
    history: ObjectHistory
    # mode -> slo key -> overhead ms
    overhead_ms: dict[str, dict[str, float]]
    planning_times_ms: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    @property
    def binning(self):
        return self.family.binning

    def overhead(self, mode: str, slo_ms: float) -> float:
        try:
            return self.overhead_ms[mode][_slo_key(slo_ms)]
        except KeyError:
            raise KeyError(f"no overhead estimate for mode {mode!r} at SLO {slo_ms} ms; rerun bootstrap") from None

    def save(self, directory: str | Path) -> dict[str, Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in (PROFILES_FILE, HISTORY_FILE, OVERHEAD_FILE)}
        save_profiles(self.family, paths[PROFILES_FILE])
        self.history.save(paths[HISTORY_FILE])
        payload = {"overhead_ms": self.overhead_ms, "planning_times_ms": self.planning_times_ms}
        paths[OVERHEAD_FILE].write_text(json.dumps(payload, indent=1, sort_keys=True))
        return paths

    @classmethod
    def load(cls, directory: str | Path) -> "BootstrapArtifacts":
        d = Path(directory)
        missing = [n for n in (PROFILES_FILE, HISTORY_FILE, OVERHEAD_FILE) if not (d / n).is_file()]
        if missing:
            raise FileNotFoundError(f"bootstrap artifacts missing in {d}: {', '.join(missing)}")
        payload = json.loads((d / OVERHEAD_FILE).read_text())
        return cls(
            load_profiles(d / PROFILES_FILE),
            ObjectHistory.load(d / HISTORY_FILE),
            payload["overhead_ms"],
            payload.get("planning_times_ms", {}),
        )


def detector_extractor(family: ModelFamily, seed: int, frame_width: int = 3840, padding_fraction: float = 0.05):
    """History from the most accurate model run uniformly over the full frame."""
    model = family.most_accurate()
    detector = SimulatedDetector(family, seed, padding_fraction)
    regions = grid_regions(grid_size(model, frame_width))

    def extract(frame_id: int, objects: np.ndarray) -> np.ndarray:
        found = [detector.simulate_tile(r, model.name, objects)[0] for r in regions]
        return nms_merge(np.concatenate(found), 0.5)

    return extract


def history_frame_count(n_frames: int, fraction: float) -> int:
    return max(MIN_OVERHEAD_FRAMES, math.ceil(n_frames * fraction))


def bootstrap(
    frames: Sequence[np.ndarray],
    config: BootstrapConfig,
    latent: Optional[Sequence[LatentModel]] = None,
) -> BootstrapArtifacts:
    """Run the three bootstrap steps over a scene's ground-truth frames."""
    latent = tuple(latent or default_latent_family())
    if len(frames) < MIN_OVERHEAD_FRAMES:
        raise ValueError(f"scene needs at least {MIN_OVERHEAD_FRAMES} frames")
    if config.analytic_profiles:
        family = analytic_family(latent)
    else:
        family = profile_family(
            latent, frames[: config.profiling_frames], config.seed, config.latency_samples,
            frame_width=config.frame_width,
        )

    n_hist = min(len(frames), history_frame_count(len(frames), config.history_fraction))
    extractor = oracle_extractor
    if config.extractor == "detector":
        extractor = detector_extractor(family, config.seed, config.frame_width)
    history = extract_history(list(enumerate(frames[:n_hist])), extractor)

    overhead: dict[str, dict[str, float]] = {}
    times: dict[str, dict[str, list[float]]] = {}
    hist_ids = list(range(n_hist))
    for mode in config.modes:
        overhead[mode], times[mode] = {}, {}
        for slo in config.slo_list_ms:
            rc = RuntimeConfig(slo_ms=slo, mode=mode, tree_depth=config.tree_depth, step_ms=config.step_ms,
                               frame_width=config.frame_width)
            value, raw = estimate_plan_overhead(hist_ids, history, family, rc)
            overhead[mode][_slo_key(slo)] = value
            times[mode][_slo_key(slo)] = raw
    return BootstrapArtifacts(family, history, overhead, times)
