"""Relative-size accuracy profiles for a family of detectors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_BINS = 22

# anchor resolution for the absolute-size bins (largest model input)
REFERENCE_SIDE = 1280
# side lengths (px) of the absolute-size bins; the last one is open-ended
ABSOLUTE_SIDE_EDGES = (0.0,) + tuple(float(x) for x in np.linspace(64.0, 196.0, 11))


@dataclass(frozen=True)
class SizeBinning:
    edges: tuple[float, ...]

    def __post_init__(self) -> None:
        edges = tuple(float(e) for e in self.edges)
        if len(edges) != N_BINS + 1:
            raise ValueError(f"expected {N_BINS + 1} edges, got {len(edges)}")
        if edges[0] != 0.0 or not math.isinf(edges[-1]):
            raise ValueError("edges must start at 0 and end at +inf")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def bins(self, rel_areas) -> np.ndarray:
        """Vectorized :func:`bin_of`."""
        idx = np.searchsorted(np.asarray(self.edges), np.asarray(rel_areas, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)

    def to_list(self) -> list:
        # JSON has no infinity; the open last edge is written as null
        return [None if math.isinf(e) else e for e in self.edges]

    @classmethod
    def from_list(cls, edges: Sequence) -> "SizeBinning":
        return cls(tuple(math.inf if e is None else float(e) for e in edges))


def default_binning() -> SizeBinning:
    ref = float(REFERENCE_SIDE) ** 2
    small = [s * s / ref for s in ABSOLUTE_SIDE_EDGES]
    # 12 absolute bins, then 20-25%, 25-30%, then 10% steps up to 100%, then open
    edges = small + [0.20, 0.25] + [round(0.3 + 0.1 * k, 10) for k in range(8)] + [math.inf]
    return SizeBinning(tuple(edges))


def relative_area(object_area: float, reference_area: float) -> float:
    if object_area <= 0 or reference_area <= 0:
        raise ValueError("areas must be positive")
    return object_area / reference_area


def bin_of(binning: SizeBinning, rel_area: float) -> int:
    if rel_area < 0:
        raise ValueError("relative area must be non-negative")
    return int(binning.bins(rel_area))


def percentile_99(samples: Sequence[float]) -> float:
    """99th percentile, rank rounded up (numpy's ``higher`` method)."""
    if len(samples) == 0:
        raise ValueError("no samples")
    return float(np.percentile(np.asarray(samples, dtype=float), 99, method="higher"))


@dataclass(frozen=True)
class ModelProfile:
    name: str
    input_side: int
    latency_mean: float
    latency_p99: float
    accuracy: tuple[float, ...]
    binning: SizeBinning

    def __post_init__(self) -> None:
        acc = tuple(float(a) for a in self.accuracy)
        if len(acc) != self.binning.n_bins:
            raise ValueError(f"accuracy must have {self.binning.n_bins} entries")
        if any(a < 0 or a > 1 for a in acc):
            raise ValueError("accuracy entries must lie in [0, 1]")
        if not 0 < self.latency_mean <= self.latency_p99:
            raise ValueError("need 0 < latency_mean <= latency_p99")
        object.__setattr__(self, "accuracy", acc)

    @property
    def accuracy_array(self) -> np.ndarray:
        return np.asarray(self.accuracy)

    def latency(self, conservative: bool) -> float:
        return self.latency_p99 if conservative else self.latency_mean

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_side": self.input_side,
            "latency_mean_ms": self.latency_mean,
            "latency_p99_ms": self.latency_p99,
            "accuracy": list(self.accuracy),
            "binning_edges": self.binning.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelProfile":
        return cls(
            name=d["name"],
            input_side=int(d["input_side"]),
            latency_mean=float(d["latency_mean_ms"]),
            latency_p99=float(d["latency_p99_ms"]),
            accuracy=tuple(d["accuracy"]),
            binning=SizeBinning.from_list(d["binning_edges"]),
        )


def build_profile(
    name: str,
    input_side: int,
    detection_records: Iterable[tuple[float, bool]],
    latency_samples: Sequence[float],
    binning: SizeBinning | None = None,
) -> ModelProfile:
    """Per-bin detection rate plus mean / p99 latency.

    Bins without records get accuracy 0.
    """
    binning = binning or default_binning()
    if len(latency_samples) == 0:
        raise ValueError("at least one latency sample is required")
    records = list(detection_records)
    hits = np.zeros(binning.n_bins)
    totals = np.zeros(binning.n_bins)
    if records:
        areas = np.array([r[0] for r in records], dtype=float)
        detected = np.array([bool(r[1]) for r in records])
        idx = binning.bins(areas)
        np.add.at(totals, idx, 1.0)
        np.add.at(hits, idx, detected.astype(float))
    acc = np.divide(hits, totals, out=np.zeros_like(hits), where=totals > 0)
    samples = np.asarray(latency_samples, dtype=float)
    return ModelProfile(
        name=name,
        input_side=int(input_side),
        latency_mean=float(samples.mean()),
        latency_p99=percentile_99(samples),
        accuracy=tuple(acc),
        binning=binning,
    )


@dataclass(frozen=True)
class ModelFamily:
    models: tuple[ModelProfile, ...]

    def __post_init__(self) -> None:
        models = tuple(sorted(self.models, key=lambda m: m.input_side))
        if not models:
            raise ValueError("family must not be empty")
        names = [m.name for m in models]
        if len(set(names)) != len(names):
            raise ValueError("model names must be unique")
        if any(m.binning != models[0].binning for m in models):
            raise ValueError("all profiles must share one binning")
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, key):
        if isinstance(key, str):
            for m in self.models:
                if m.name == key:
                    return m
            raise KeyError(key)
        return self.models[key]

    @property
    def binning(self) -> SizeBinning:
        return self.models[0].binning

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.models]

    def cheapest(self) -> ModelProfile:
        return min(self.models, key=lambda m: (m.latency_mean, m.input_side))

    def most_accurate(self) -> ModelProfile:
        return max(self.models, key=lambda m: (float(np.mean(m.accuracy)), m.input_side))


def save_profiles(family: ModelFamily, path: str | Path) -> None:
    payload = {"binning_edges": family.binning.to_list(), "models": [m.to_dict() for m in family]}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_profiles(path: str | Path) -> ModelFamily:
    payload = json.loads(Path(path).read_text())
    # SizeBinning validates monotonicity
    SizeBinning.from_list(payload["binning_edges"])
    return ModelFamily(tuple(ModelProfile.from_dict(d) for d in payload["models"]))
