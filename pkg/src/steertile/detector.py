"""
Stand-in for per-tile DNN inference.

The simulated detector emits each ground-truth object whose center falls in
the (padded) tile with the probability its model profile assigns to the
object's relative size, and draws an inference latency from a log-normal
whose mean and 99th percentile match the profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .distribution import Rect
from .profile import ModelFamily, ModelProfile

Z99 = NormalDist().inv_cdf(0.99)


def lognormal_params(mean: float, p99: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal with the given mean and 99th percentile.

    Solves ln(p99) - ln(mean) = z*sigma - sigma^2/2 for the smaller root.
    """
    if not 0 < mean <= p99:
        raise ValueError("need 0 < mean <= p99")
    gap = math.log(p99 / mean)
    disc = Z99 * Z99 - 2.0 * gap
    if disc < 0:
        raise ValueError(f"p99/mean ratio {p99 / mean:.3f} is too skewed for a log-normal fit")
    sigma = Z99 - math.sqrt(disc)
    return math.log(mean) - 0.5 * sigma * sigma, sigma


def pad_tile(tile: Rect, padding_fraction: float) -> Rect:
    """Grow the tile by ``padding_fraction`` of its side on every edge, clipped to the frame."""
    x0, y0, x1, y1 = tile
    px, py = padding_fraction * (x1 - x0), padding_fraction * (y1 - y0)
    return (max(0.0, x0 - px), max(0.0, y0 - py), min(1.0, x1 + px), min(1.0, y1 + py))


def box_areas(boxes: np.ndarray) -> np.ndarray:
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ix = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    iy = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = ix * iy
    union = box_areas(a)[:, None] + box_areas(b)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def nms_order(boxes: np.ndarray) -> np.ndarray:
    """Larger boxes first, then lexicographic coordinates."""
    return np.lexsort((boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], -box_areas(boxes)))


def nms_merge(boxes: np.ndarray, iou_threshold: float = 0.5, provenance: Optional[np.ndarray] = None):
    """Greedy suppression of duplicates across tiles.

    Returns the kept boxes (and their provenance when given), in NMS order.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must lie in (0, 1)")
    order = nms_order(boxes)
    iou = iou_matrix(boxes, boxes)
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= iou[i] >= iou_threshold
    keep = np.array(keep, dtype=int)
    if provenance is None:
        return boxes[keep]
    return boxes[keep], np.asarray(provenance)[keep]


def match_score(detections: np.ndarray, ground_truth: np.ndarray, iou_threshold: float = 0.5) -> float:
    """Fraction of ground-truth objects matched one-to-one by a detection.

    Greedy: pairs are taken in decreasing IoU order. An empty ground truth
    scores 1.0.
    """
    gt = np.asarray(ground_truth, dtype=float).reshape(-1, 4)
    det = np.asarray(detections, dtype=float).reshape(-1, 4)
    if gt.shape[0] == 0:
        return 1.0
    if det.shape[0] == 0:
        return 0.0
    iou = iou_matrix(det, gt)
    d_idx, g_idx = np.nonzero(iou >= iou_threshold)
    if d_idx.size == 0:
        return 0.0
    order = np.lexsort((g_idx, d_idx, -iou[d_idx, g_idx]))
    used_d, used_g = set(), set()
    for k in order:
        d, g = int(d_idx[k]), int(g_idx[k])
        if d in used_d or g in used_g:
            continue
        used_d.add(d)
        used_g.add(g)
    return len(used_g) / gt.shape[0]


@dataclass
class SimulatedDetector:
    family: ModelFamily
    rng_seed: int = 0
    padding_fraction: float = 0.05
    # false positives per tile; off by default
    false_positive_rate: float = 0.0
    rng: np.random.Generator = field(init=False, repr=False)
    _lognormal: dict = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.padding_fraction <= 0.25:
            raise ValueError("padding_fraction must lie in [0, 0.25]")
        self.rng = np.random.default_rng(self.rng_seed)
        self._lognormal = {m.name: lognormal_params(m.latency_mean, m.latency_p99) for m in self.family}

    @property
    def binning(self):
        return self.family.binning

    def sample_latency(self, model: str, size=None):
        mu, sigma = self._lognormal[model]
        return self.rng.lognormal(mu, sigma, size)

    def simulate_tile(self, tile: Rect, model: str, ground_truth: np.ndarray) -> tuple[np.ndarray, float]:
        profile: ModelProfile = self.family[model]
        gt = np.asarray(ground_truth, dtype=float).reshape(-1, 4)
        px0, py0, px1, py1 = pad_tile(tile, self.padding_fraction)
        cx = 0.5 * (gt[:, 0] + gt[:, 2])
        cy = 0.5 * (gt[:, 1] + gt[:, 3])
        inside = (cx >= px0) & (cx <= px1) & (cy >= py0) & (cy <= py1)
        members = gt[inside]
        # reference area is the unpadded tile
        tile_area = (tile[2] - tile[0]) * (tile[3] - tile[1])
        p = profile.accuracy_array[self.binning.bins(box_areas(members) / tile_area)]
        hit = self.rng.random(members.shape[0]) < p
        detections = members[hit]
        if self.false_positive_rate > 0:
            detections = np.concatenate([detections, self._false_positives((px0, py0, px1, py1))])
        latency = float(self.sample_latency(model))
        return detections, latency

    def _false_positives(self, region: Rect) -> np.ndarray:
        n = self.rng.poisson(self.false_positive_rate)
        x0, y0, x1, y1 = region
        out = []
        for _ in range(n):
            w, h = self.rng.uniform(0.005, 0.02, size=2)
            cx, cy = self.rng.uniform(x0, x1), self.rng.uniform(y0, y1)
            out.append((cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        return np.array(out, dtype=float).reshape(-1, 4)


def simulate_tile(detector: SimulatedDetector, tile: Rect, model: str, ground_truth: np.ndarray):
    return detector.simulate_tile(tile, model, ground_truth)
