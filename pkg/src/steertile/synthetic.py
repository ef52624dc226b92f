"""
Synthetic detector family and the profiling pipeline that turns it into
relative-size profiles.

Each latent model has a smooth recall curve over the object's relative area
on the model input: small objects are missed, mid-sized ones found, and very
large ones (bigger than the tile) degrade again. Input sides mirror the
EfficientDet D0-D6 shapes; latencies are made up but ordered like real
edge-GPU timings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import lognormal_params
from .planner import grid_regions
from .profile import ModelFamily, ModelProfile, SizeBinning, build_profile, default_binning


@dataclass(frozen=True)
class LatentModel:
    name: str
    input_side: int
    latency_mean: float
    latency_p99: float
    peak: float
    # object side (px at model input) detected half the time
    half_side_px: float = 24.0
    # slope of the small-object ramp, in log relative-area units
    ramp: float = 0.8
    large_drop: float = 0.45

    def recall(self, rel_area) -> np.ndarray:
        a = np.maximum(np.asarray(rel_area, dtype=float), 1e-12)
        a50 = (self.half_side_px / self.input_side) ** 2
        small = 1.0 / (1.0 + np.exp(-(np.log(a) - math.log(a50)) / self.ramp))
        large = 1.0 - self.large_drop / (1.0 + np.exp(-(a - 0.8) / 0.15))
        return np.clip(self.peak * small * large, 0.0, 1.0)


# (name, input side, mean ms, p99 ms, peak recall)
_DEFAULT_MODELS = (
    ("D0", 512, 90.0, 112.0, 0.70),
    ("D1", 640, 130.0, 163.0, 0.75),
    ("D2", 768, 180.0, 226.0, 0.79),
    ("D3", 896, 250.0, 313.0, 0.83),
    ("D4", 1024, 360.0, 452.0, 0.86),
    ("D5", 1280, 560.0, 702.0, 0.89),
    ("D6", 1280, 700.0, 878.0, 0.92),
)


def default_latent_family() -> tuple[LatentModel, ...]:
    return tuple(LatentModel(*row) for row in _DEFAULT_MODELS)


def profiling_views(
    frames: Sequence[np.ndarray],
    rng: np.random.Generator,
    zooms: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
) -> list[np.ndarray]:
    """Frames plus random zoomed crops, re-normalized to the crop.

    Crops stand in for the wide range of apparent object sizes a steered
    camera produces.
    """
    views = []
    for boxes in frames:
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        for z in zooms:
            side = 1.0 / z
            x0, y0 = rng.uniform(0.0, 1.0 - side, size=2) if z > 1 else (0.0, 0.0)
            scaled = (boxes - np.array([x0, y0, x0, y0])) / side
            cx = 0.5 * (scaled[:, 0] + scaled[:, 2])
            cy = 0.5 * (scaled[:, 1] + scaled[:, 3])
            keep = (cx >= 0) & (cx <= 1) & (cy >= 0) & (cy <= 1)
            views.append(scaled[keep])
    return views


def collect_records(
    model: LatentModel,
    views: Sequence[np.ndarray],
    grids: Sequence[int],
    rng: np.random.Generator,
) -> list[tuple[float, bool]]:
    """(relative area, detected) pairs over every view partitioned into each grid."""
    records: list[tuple[float, bool]] = []
    for boxes in views:
        if boxes.shape[0] == 0:
            continue
        cx = 0.5 * (boxes[:, 0] + boxes[:, 2])
        cy = 0.5 * (boxes[:, 1] + boxes[:, 3])
        areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
        for k in grids:
            tile_area = 1.0 / (k * k)
            for x0, y0, x1, y1 in grid_regions(k):
                inside = (cx >= x0) & (cx < x1) & (cy >= y0) & (cy < y1)
                if not inside.any():
                    continue
                rel = areas[inside] / tile_area
                hit = rng.random(rel.shape[0]) < model.recall(rel)
                records.extend(zip(rel.tolist(), hit.tolist()))
    return records


def profile_family(
    latent: Sequence[LatentModel],
    profiling_frames: Sequence[np.ndarray],
    seed: int = 0,
    latency_samples: int = 1000,
    binning: SizeBinning | None = None,
    frame_width: int = 3840,
) -> ModelFamily:
    """Measure a profile for every latent model.

    Each view is partitioned uniformly for every model resolution in the
    family (plus the whole frame), so each model sees objects at all the
    relative sizes tiling can produce.
    """
    binning = binning or default_binning()
    rng = np.random.default_rng(seed)
    views = profiling_views(profiling_frames, rng)
    grids = sorted({1} | {max(1, math.ceil(frame_width / m.input_side)) for m in latent})
    profiles = []
    for model in latent:
        records = collect_records(model, views, grids, rng)
        mu, sigma = lognormal_params(model.latency_mean, model.latency_p99)
        samples = rng.lognormal(mu, sigma, size=latency_samples)
        profiles.append(build_profile(model.name, model.input_side, records, samples, binning))
    return ModelFamily(tuple(profiles))


def analytic_family(latent: Sequence[LatentModel] | None = None, binning: SizeBinning | None = None) -> ModelFamily:
    """Profiles evaluated directly from the latent curves at bin midpoints.

    Cheap and noise-free; convenient for tests that do not exercise the
    profiler itself.
    """
    latent = latent or default_latent_family()
    binning = binning or default_binning()
    edges = np.array(binning.edges[:-1] + (binning.edges[-2] * 2.0,))
    mids = 0.5 * (edges[:-1] + edges[1:])
    mids[0] = 0.5 * edges[1]
    return ModelFamily(
        tuple(
            ModelProfile(m.name, m.input_side, m.latency_mean, m.latency_p99, tuple(m.recall(mids)), binning)
            for m in latent
        )
    )
