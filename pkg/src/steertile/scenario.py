"""
Synthetic global scenes and random PTZ actuation scripts.

A scene is a sequence of ground-truth frames seen from the identity pose.
A scenario scripts pan, tilt and zoom movements over those frames: each
movement lasts 15 to 50 frames, consecutive movements are separated by a
15-frame pause, and the camera never looks outside the global view.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import (
    DEFAULT_ASPECT,
    DEFAULT_HFOV,
    MAX_ZOOM,
    ActuationDelta,
    CameraPose,
    accumulate,
    view_within_global,
)

MIN_DURATION = 15
MAX_DURATION = 50
PAUSE = 15
MIN_FRAMES = MIN_DURATION + 2 * PAUSE
ACTUATION_TYPES = ("pan", "tilt", "zoom")

PAN_RANGE_DEG = (5.0, 25.0)
ZOOM_RANGE = (1.5, 3.0)


# -- scenes -----------------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    center: tuple[float, float]
    spread: tuple[float, float]
    object_count: int
    # log-normal over the object's area relative to the global frame
    median_area: float = 3e-4
    sigma: float = 0.5
    # width / height in pixels
    aspect: float = 0.45

    def bounds(self) -> tuple[float, float, float, float]:
        (cx, cy), (sx, sy) = self.center, self.spread
        return (max(0.0, cx - sx), max(0.0, cy - sy), min(1.0, cx + sx), min(1.0, cy + sy))


@dataclass(frozen=True)
class SceneSpec:
    clusters: tuple[Cluster, ...]
    frame_count: int = 300
    rng_seed: int = 0
    # per-frame random-walk step, as a fraction of the cluster spread
    jitter: float = 0.01
    frame_aspect: float = DEFAULT_ASPECT

    def __post_init__(self) -> None:
        if not self.clusters:
            raise ValueError("scene needs at least one cluster")
        if any(c.object_count <= 0 for c in self.clusters):
            raise ValueError("cluster object counts must be positive")
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clusters"] = [asdict(c) for c in self.clusters]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        clusters = tuple(
            Cluster(**{**c, "center": tuple(c["center"]), "spread": tuple(c["spread"])}) for c in d["clusters"]
        )
        return cls(clusters, int(d["frame_count"]), int(d["rng_seed"]), float(d["jitter"]), float(d["frame_aspect"]))


def default_scene_spec(seed: int = 0, frame_count: int = 300) -> SceneSpec:
    """A crowded plaza: a few dense groups of small people plus sparse walkers."""
    clusters = (
        Cluster((0.30, 0.55), (0.12, 0.10), 40, 2.5e-4),
        Cluster((0.68, 0.42), (0.10, 0.08), 35, 2.0e-4),
        Cluster((0.50, 0.75), (0.15, 0.08), 30, 5.0e-4),
        Cluster((0.20, 0.30), (0.08, 0.06), 15, 1.5e-4),
        Cluster((0.50, 0.50), (0.45, 0.40), 30, 3.0e-4, 0.7),
    )
    return SceneSpec(clusters, frame_count, seed)


def sample_sizes(cluster: Cluster, n: int, rng: np.random.Generator, frame_aspect: float) -> np.ndarray:
    """(n, 2) normalized width/height pairs."""
    areas = rng.lognormal(math.log(cluster.median_area), cluster.sigma, size=n)
    # w_norm / h_norm = aspect_px / frame_aspect
    ratio = cluster.aspect / frame_aspect
    h = np.sqrt(areas / ratio)
    w = areas / h
    return np.stack([w, h], axis=1)


def generate_scene(spec: SceneSpec) -> list[np.ndarray]:
    """Ground-truth boxes for every frame, as (N, 4) arrays in global coordinates.

    Object identity is stable across frames (row k is the same object);
    objects random-walk inside their cluster's bounds.
    """
    rng = np.random.default_rng(spec.rng_seed)
    sizes, lows, highs, centers = [], [], [], []
    for c in spec.clusters:
        wh = sample_sizes(c, c.object_count, rng, spec.frame_aspect)
        bx0, by0, bx1, by1 = c.bounds()
        # boxes larger than their cluster are shrunk to fit
        wh[:, 0] = np.minimum(wh[:, 0], 0.99 * (bx1 - bx0))
        wh[:, 1] = np.minimum(wh[:, 1], 0.99 * (by1 - by0))
        lo = np.stack([bx0 + wh[:, 0] / 2, by0 + wh[:, 1] / 2], axis=1)
        hi = np.stack([bx1 - wh[:, 0] / 2, by1 - wh[:, 1] / 2], axis=1)
        centers.append(rng.uniform(lo, hi))
        sizes.append(wh)
        lows.append(lo)
        highs.append(hi)
    wh, lo, hi, ctr = (np.concatenate(v) for v in (sizes, lows, highs, centers))
    steps = np.concatenate([np.tile(np.array(c.spread) * spec.jitter, (c.object_count, 1)) for c in spec.clusters])
    frames = []
    for _ in range(spec.frame_count):
        frames.append(np.concatenate([ctr - wh / 2, ctr + wh / 2], axis=1))
        ctr = np.clip(ctr + rng.normal(0.0, 1.0, size=ctr.shape) * steps, lo, hi)
    return frames


def save_scene(spec: SceneSpec, frames: Sequence[np.ndarray], path: str | Path) -> None:
    payload = {
        "spec": spec.to_dict(),
        "frames": [{"frame_id": i, "boxes": np.round(f, 12).tolist()} for i, f in enumerate(frames)],
    }
    Path(path).write_text(json.dumps(payload))


def load_scene(path: str | Path) -> tuple[SceneSpec, list[np.ndarray]]:
    payload = json.loads(Path(path).read_text())
    spec = SceneSpec.from_dict(payload["spec"])
    frames = [np.asarray(f["boxes"], dtype=float).reshape(-1, 4) for f in payload["frames"]]
    return spec, frames


# -- scenarios -----------------------------------------------------------------------

@dataclass(frozen=True)
class Actuation:
    type: str
    magnitude: float  # radians for pan/tilt, total zoom ratio for zoom
    start_frame: int
    duration_frames: int

    def per_frame(self) -> ActuationDelta:
        d = self.duration_frames
        if self.type == "pan":
            return ActuationDelta(d_pan=self.magnitude / d)
        if self.type == "tilt":
            return ActuationDelta(d_tilt=self.magnitude / d)
        return ActuationDelta(zoom_ratio=self.magnitude ** (1.0 / d))

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.duration_frames


@dataclass(frozen=True)
class ScenarioSpec:
    frame_count: int
    actuations: tuple[Actuation, ...]
    rng_seed: int = 0
    base_hfov: float = DEFAULT_HFOV
    aspect: float = DEFAULT_ASPECT

    @property
    def types(self) -> set[str]:
        return {a.type for a in self.actuations}

    def deltas(self) -> list[ActuationDelta]:
        out = [ActuationDelta() for _ in range(self.frame_count)]
        for a in self.actuations:
            step = a.per_frame()
            for t in range(a.start_frame, min(a.end_frame, self.frame_count)):
                out[t] = step
        return out

    def poses(self) -> list[CameraPose]:
        pose = CameraPose(base_hfov=self.base_hfov, aspect=self.aspect)
        out = []
        for d in self.deltas():
            pose = accumulate(pose, d)
            out.append(pose)
        return out

    def to_dict(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "rng_seed": self.rng_seed,
            "base_hfov_rad": self.base_hfov,
            "aspect": self.aspect,
            "actuations": [asdict(a) for a in self.actuations],
            "deltas": [d.to_dict() for d in self.deltas()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        acts = tuple(Actuation(**a) for a in d["actuations"])
        return cls(int(d["frame_count"]), acts, int(d.get("rng_seed", 0)),
                   float(d.get("base_hfov_rad", DEFAULT_HFOV)), float(d.get("aspect", DEFAULT_ASPECT)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _replay_ok(pose: CameraPose, act: Actuation) -> tuple[bool, CameraPose]:
    step = act.per_frame()
    for _ in range(act.duration_frames):
        pose = accumulate(pose, step)
        if pose.clamped or not view_within_global(pose):
            return False, pose
    return True, pose


def _sample_actuation(kind: str, start: int, duration: int, pose: CameraPose, rng) -> Actuation:
    if kind == "zoom":
        ratio = rng.uniform(*ZOOM_RANGE)
        zoom_in = pose.zoom * ratio <= MAX_ZOOM and (pose.zoom / ratio < 1.0 or rng.random() < 0.5)
        return Actuation("zoom", ratio if zoom_in else 1.0 / ratio, start, duration)
    deg = rng.uniform(*PAN_RANGE_DEG) * (1 if rng.random() < 0.5 else -1)
    return Actuation(kind, math.radians(deg), start, duration)


def generate_scenario(
    frame_count: int,
    rng_seed: int,
    base_hfov: float = DEFAULT_HFOV,
    aspect: float = DEFAULT_ASPECT,
    max_tries: int = 200,
) -> ScenarioSpec:
    """Random actuation script respecting duration, pause and boundary rules.

    The camera rests for the first pause, then alternates actuations and
    pauses. Types and magnitudes that would look outside the global view are
    resampled; a zoom-in is always possible and serves as the last resort.
    """
    if frame_count < MIN_FRAMES:
        raise ValueError(f"frame_count must be at least {MIN_FRAMES}, got {frame_count}")
    rng = np.random.default_rng(rng_seed)
    pose = CameraPose(base_hfov=base_hfov, aspect=aspect)
    acts: list[Actuation] = []
    t = PAUSE
    while t + MIN_DURATION + PAUSE <= frame_count:
        duration = int(rng.integers(MIN_DURATION, min(MAX_DURATION, frame_count - t - PAUSE) + 1))
        chosen = None
        for _ in range(max_tries):
            kind = ACTUATION_TYPES[int(rng.integers(len(ACTUATION_TYPES)))]
            act = _sample_actuation(kind, t, duration, pose, rng)
            ok, end = _replay_ok(pose, act)
            if ok:
                chosen, pose = act, end
                break
        if chosen is None:
            ratio = ZOOM_RANGE[0]
            chosen = Actuation("zoom", ratio if pose.zoom * ratio <= MAX_ZOOM else 1.0 / ratio, t, duration)
            ok, pose = _replay_ok(pose, chosen)
            if not ok:
                raise RuntimeError("no feasible actuation found")
        acts.append(chosen)
        t += duration + PAUSE
    return ScenarioSpec(frame_count, tuple(acts), rng_seed, base_hfov, aspect)


def validate_scenario(scenario: ScenarioSpec) -> list[str]:
    """Return the list of violated rules (empty when the scenario is valid)."""
    problems = []
    acts = sorted(scenario.actuations, key=lambda a: a.start_frame)
    if not acts:
        problems.append("no actuation")
    for a in acts:
        if a.type not in ACTUATION_TYPES:
            problems.append(f"unknown actuation type {a.type!r}")
        if not MIN_DURATION <= a.duration_frames <= MAX_DURATION:
            problems.append(f"duration {a.duration_frames} outside [{MIN_DURATION}, {MAX_DURATION}]")
        if a.start_frame < 0 or a.end_frame > scenario.frame_count:
            problems.append(f"actuation at {a.start_frame} does not fit the sequence")
    for a, b in zip(acts, acts[1:]):
        if b.start_frame - a.end_frame != PAUSE:
            problems.append(f"gap of {b.start_frame - a.end_frame} frames between actuations, expected {PAUSE}")
    for t, pose in enumerate(scenario.poses()):
        if pose.clamped or not view_within_global(pose):
            problems.append(f"frame {t} looks outside the global view")
            break
    return problems
