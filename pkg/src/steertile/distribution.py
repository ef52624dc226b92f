"""
Object history in the global view and its per-frame local projection.

Boxes are carried as (N, 4) float arrays (x_min, y_min, x_max, y_max) so a
whole frame can be re-projected and binned in a few numpy calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import (
    BoundingBox,
    CameraPose,
    boxes_to_array,
    reproject_boxes,
    to_transform,
    visible_fractions,
)
from .profile import ModelProfile, SizeBinning

DEFAULT_CULL_THRESHOLD = 0.25

Rect = tuple[float, float, float, float]


def _as_boxes(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.reshape(-1, 4).astype(float)
    return boxes_to_array(list(boxes))


@dataclass(frozen=True)
class ObjectHistory:
    """Objects collected from historical frames, in global-view coordinates."""

    boxes: np.ndarray
    frame_ids: np.ndarray
    class_ids: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        if b.size and not ((b[:, 2] > b[:, 0]) & (b[:, 3] > b[:, 1])).all():
            raise ValueError("history contains degenerate boxes")
        object.__setattr__(self, "boxes", b)
        object.__setattr__(self, "frame_ids", np.asarray(self.frame_ids, dtype=int).reshape(-1))
        object.__setattr__(self, "class_ids", np.asarray(self.class_ids, dtype=int).reshape(-1))

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def to_json(self) -> list:
        out = []
        for fid in sorted(set(self.frame_ids.tolist())):
            sel = self.frame_ids == fid
            out.append(
                {
                    "frame_id": int(fid),
                    "boxes": [
                        BoundingBox(*map(float, b), class_id=int(c)).to_dict()
                        for b, c in zip(self.boxes[sel], self.class_ids[sel])
                    ],
                }
            )
        return out

    @classmethod
    def from_json(cls, payload: list) -> "ObjectHistory":
        boxes, fids, cids = [], [], []
        for entry in payload:
            for d in entry["boxes"]:
                b = BoundingBox.from_dict(d)
                boxes.append(b.as_tuple())
                fids.append(int(entry["frame_id"]))
                cids.append(b.class_id)
        return cls(np.array(boxes, dtype=float).reshape(-1, 4), np.array(fids), np.array(cids))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ObjectHistory":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LocalDistribution:
    boxes: np.ndarray
    class_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self) -> None:
        b = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        object.__setattr__(self, "boxes", b)
        c = np.asarray(self.class_ids, dtype=int).reshape(-1)
        if c.shape[0] != b.shape[0]:
            c = np.zeros(b.shape[0], dtype=int)
        object.__setattr__(self, "class_ids", c)

    def __len__(self) -> int:
        return self.boxes.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.boxes[:, :2] + self.boxes[:, 2:])

    @property
    def areas(self) -> np.ndarray:
        return (self.boxes[:, 2] - self.boxes[:, 0]) * (self.boxes[:, 3] - self.boxes[:, 1])

    def as_boxes(self) -> list[BoundingBox]:
        return [BoundingBox(*map(float, b), class_id=int(c)) for b, c in zip(self.boxes, self.class_ids)]


@dataclass(frozen=True)
class TileDistribution:
    phi: np.ndarray
    count: int
    binning: SizeBinning


# -- extraction -----------------------------------------------------------

# An extractor maps one frame's ground truth (N, 4) to the boxes it recovers.
ExtractionStrategy = Callable[[int, np.ndarray], np.ndarray]


def oracle_extractor(frame_id: int, objects: np.ndarray) -> np.ndarray:
    return objects


def extract_history(
    frames: Sequence[tuple[int, object]],
    extractor: ExtractionStrategy = oracle_extractor,
) -> ObjectHistory:
    """Union of the extractor's output over the historical frames."""
    if len(frames) == 0:
        raise ValueError("at least one historical frame is required")
    boxes, fids = [], []
    for frame_id, objects in frames:
        found = _as_boxes(extractor(frame_id, _as_boxes(objects)))
        boxes.append(found)
        fids.append(np.full(found.shape[0], frame_id, dtype=int))
    all_boxes = np.concatenate(boxes, axis=0) if boxes else np.zeros((0, 4))
    all_fids = np.concatenate(fids) if fids else np.zeros(0, dtype=int)
    return ObjectHistory(all_boxes, all_fids, np.zeros(all_boxes.shape[0], dtype=int))


# -- localization ---------------------------------------------------------

def localize_boxes(
    boxes: np.ndarray,
    pose: CameraPose,
    cull_threshold: float = DEFAULT_CULL_THRESHOLD,
    clip: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Re-project global boxes into the view of ``pose``.

    Returns the surviving local boxes and the indices of the originals they
    came from. Boxes below ``cull_threshold`` visibility are dropped;
    survivors are clipped to the frame unless ``clip`` is False.
    """
    boxes = _as_boxes(boxes)
    if boxes.shape[0] == 0:
        return np.zeros((0, 4)), np.zeros(0, dtype=int)
    hull, ok = reproject_boxes(boxes, to_transform(pose))
    idx = np.flatnonzero(ok)
    hull = hull[idx]
    keep = visible_fractions(hull) >= cull_threshold
    hull, idx = hull[keep], idx[keep]
    if clip:
        hull = np.clip(hull, 0.0, 1.0)
    return hull, idx


def localize(
    history: ObjectHistory,
    pose: CameraPose,
    cull_threshold: float = DEFAULT_CULL_THRESHOLD,
    clip: bool = True,
) -> LocalDistribution:
    boxes, idx = localize_boxes(history.boxes, pose, cull_threshold, clip)
    return LocalDistribution(boxes, history.class_ids[idx])


# -- per-tile statistics --------------------------------------------------

def _members(centers: np.ndarray, regions: np.ndarray) -> np.ndarray:
    """(R, N) mask of objects whose center lies in each region.

    Regions are half-open [x0, x1) x [y0, y1) except at the frame's far
    edge, so adjacent tiles never share an object.
    """
    x0, y0, x1, y1 = (regions[:, k][:, None] for k in range(4))
    cx, cy = centers[:, 0][None, :], centers[:, 1][None, :]
    in_x = (cx >= x0) & ((cx < x1) | ((x1 >= 1.0) & (cx <= x1)))
    in_y = (cy >= y0) & ((cy < y1) | ((y1 >= 1.0) & (cy <= y1)))
    return in_x & in_y


def region_histograms(
    local: LocalDistribution,
    regions: np.ndarray,
    binning: SizeBinning,
) -> np.ndarray:
    """Object counts per (region, size bin), relative to each region's area."""
    regions = np.asarray(regions, dtype=float).reshape(-1, 4)
    hist = np.zeros((regions.shape[0], binning.n_bins))
    if len(local) == 0 or regions.shape[0] == 0:
        return hist
    mask = _members(local.centers, regions)
    r_idx, o_idx = np.nonzero(mask)
    region_area = (regions[:, 2] - regions[:, 0]) * (regions[:, 3] - regions[:, 1])
    rel = local.areas[o_idx] / region_area[r_idx]
    np.add.at(hist, (r_idx, binning.bins(rel)), 1.0)
    return hist


def grid_histograms(local: LocalDistribution, k: int, binning: SizeBinning) -> np.ndarray:
    """region_histograms for the equal k x k grid (row-major), in O(N)."""
    hist = np.zeros((k * k, binning.n_bins))
    if len(local) == 0:
        return hist
    # floor(c * k) matches the half-open membership; the far edge folds inward
    col = np.minimum((local.centers[:, 0] * k).astype(np.int64), k - 1)
    row = np.minimum((local.centers[:, 1] * k).astype(np.int64), k - 1)
    inside = (local.centers >= 0).all(axis=1) & (local.centers <= 1).all(axis=1)
    rel = local.areas * (k * k)
    np.add.at(hist, ((row * k + col)[inside], binning.bins(rel[inside])), 1.0)
    return hist


def tile_distribution(local: LocalDistribution, tile: Rect, binning: SizeBinning) -> TileDistribution:
    x0, y0, x1, y1 = tile
    if not (x1 > x0 and y1 > y0):
        raise ValueError("tile must have positive area")
    if x0 < 0 or y0 < 0 or x1 > 1 or y1 > 1:
        raise ValueError("tile must lie within the unit frame")
    counts = region_histograms(local, np.array([tile]), binning)[0]
    n = int(counts.sum())
    phi = counts / n if n else counts
    return TileDistribution(phi, n, binning)


def estimated_accuracy(dist: TileDistribution, profile: ModelProfile) -> float:
    if dist.binning != profile.binning:
        raise ValueError("distribution and profile use different binnings")
    if dist.count == 0:
        return 0.0
    return float(dist.phi @ profile.accuracy_array)


def _overlap(a: Rect, b: Rect) -> bool:
    return min(a[2], b[2]) > max(a[0], b[0]) + 1e-12 and min(a[3], b[3]) > max(a[1], b[1]) + 1e-12


def check_non_overlapping(tiles: Sequence[Rect]) -> None:
    for i in range(len(tiles)):
        for j in range(i + 1, len(tiles)):
            if _overlap(tiles[i], tiles[j]):
                raise ValueError(f"plan tiles overlap: {tiles[i]} and {tiles[j]}")


def plan_estimated_accuracy(
    tiles: Iterable[tuple[Rect, str]],
    local: LocalDistribution,
    binning: SizeBinning,
    profiles: dict[str, ModelProfile] | Sequence[ModelProfile],
) -> float:
    """Sum over tiles of tile accuracy weighted by the tile's share of all objects.

    ``tiles`` is any iterable of (region, model name); a TilePlan works too.
    """
    if not isinstance(profiles, dict):
        profiles = {p.name: p for p in profiles}
    pairs = [(tuple(map(float, r)), m) for r, m in _tile_pairs(tiles)]
    check_non_overlapping([r for r, _ in pairs])
    total = len(local)
    if total == 0 or not pairs:
        return 0.0
    hist = region_histograms(local, np.array([r for r, _ in pairs]), binning)
    acc = np.array([profiles[m].accuracy_array for _, m in pairs])
    # count * (phi . A) / total == (hist . A) / total
    return float((hist * acc).sum() / total)


def _tile_pairs(tiles) -> list:
    if hasattr(tiles, "assignments"):
        return [(a.region, a.model) for a in tiles.assignments]
    return list(tiles)
