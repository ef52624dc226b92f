"""
Pinhole model of a pan-tilt-zoom camera.

Coordinates on a view plane are normalized: (0, 0) is the top-left corner of
the frame, (1, 1) the bottom-right, x grows to the right and y grows down.
The identity pose (pan=0, tilt=0, zoom=1) is the global view; every other
pose is a local view reached by rotating the camera about its optical center
and scaling the focal length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DEFAULT_HFOV = math.pi / 2
DEFAULT_ASPECT = 16.0 / 9.0
MIN_ZOOM = 1.0
MAX_ZOOM = 32.0
MAX_TILT = math.radians(80.0)

# corners closer than this to the camera plane count as "behind"
_MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: int = 0

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
            "class_id": self.class_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(
            float(d["x_min"]),
            float(d["y_min"]),
            float(d["x_max"]),
            float(d["y_max"]),
            int(d.get("class_id", 0)),
        )


@dataclass(frozen=True)
class CameraPose:
    """Accumulated camera state. Angles in radians."""

    pan: float = 0.0
    tilt: float = 0.0
    zoom: float = 1.0
    base_hfov: float = DEFAULT_HFOV
    aspect: float = DEFAULT_ASPECT
    # set by accumulate() when zoom or tilt hit a physical limit
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if self.zoom < MIN_ZOOM - 1e-12:
            raise ValueError(f"zoom must be >= 1, got {self.zoom}")
        if abs(self.tilt) >= math.pi / 2:
            raise ValueError(f"|tilt| must be < pi/2, got {self.tilt}")
        if not 0.0 < self.base_hfov < math.pi:
            raise ValueError(f"base_hfov out of range: {self.base_hfov}")
        if self.aspect <= 0:
            raise ValueError("aspect must be positive")

    def to_dict(self) -> dict:
        return {"pan_rad": self.pan, "tilt_rad": self.tilt, "zoom": self.zoom}

    @classmethod
    def from_dict(cls, d: dict, **intrinsics) -> "CameraPose":
        return cls(float(d["pan_rad"]), float(d["tilt_rad"]), float(d["zoom"]), **intrinsics)


@dataclass(frozen=True)
class ActuationDelta:
    """Per-frame change of the camera state."""

    d_pan: float = 0.0
    d_tilt: float = 0.0
    zoom_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.zoom_ratio <= 0:
            raise ValueError(f"zoom_ratio must be > 0, got {self.zoom_ratio}")

    @property
    def is_identity(self) -> bool:
        return self.d_pan == 0.0 and self.d_tilt == 0.0 and self.zoom_ratio == 1.0

    def to_dict(self) -> dict:
        return {"d_pan_rad": self.d_pan, "d_tilt_rad": self.d_tilt, "zoom_ratio": self.zoom_ratio}

    @classmethod
    def from_dict(cls, d: dict) -> "ActuationDelta":
        return cls(float(d["d_pan_rad"]), float(d["d_tilt_rad"]), float(d["zoom_ratio"]))


_EYE3 = np.eye(3)


@dataclass(frozen=True)
class ViewTransform:
    """World-to-camera rotation plus focal scale, with the intrinsics needed to project."""

    rotation: np.ndarray
    focal_scale: float = 1.0
    base_hfov: float = DEFAULT_HFOV
    aspect: float = DEFAULT_ASPECT

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(r.T @ r - _EYE3).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        if self.focal_scale <= 0:
            raise ValueError("focal_scale must be positive")
        object.__setattr__(self, "rotation", r)

    @property
    def half_width(self) -> float:
        # half extent of the image plane at unit depth, focal scale applied
        return math.tan(self.base_hfov / 2) / self.focal_scale

    @property
    def half_height(self) -> float:
        return self.half_width / self.aspect


def _wrap_angle(a: float) -> float:
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def accumulate(pose: CameraPose, delta: ActuationDelta) -> CameraPose:
    """Apply one frame's actuation to the running camera state."""
    if delta.is_identity:
        return replace(pose, clamped=False)
    pan = _wrap_angle(pose.pan + delta.d_pan)
    tilt = pose.tilt + delta.d_tilt
    zoom = pose.zoom * delta.zoom_ratio
    clamped = False
    if abs(tilt) > MAX_TILT:
        tilt = math.copysign(MAX_TILT, tilt)
        clamped = True
    if zoom < MIN_ZOOM or zoom > MAX_ZOOM:
        zoom = min(max(zoom, MIN_ZOOM), MAX_ZOOM)
        clamped = True
    return replace(pose, pan=pan, tilt=tilt, zoom=zoom, clamped=clamped)


def pan_matrix(pan: float) -> np.ndarray:
    # positive pan turns the camera to the right, so scene content moves left
    c, s = math.cos(pan), math.sin(pan)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def tilt_matrix(tilt: float) -> np.ndarray:
    # positive tilt raises the camera; with y pointing down, content moves down
    c, s = math.cos(tilt), math.sin(tilt)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def to_transform(pose: CameraPose) -> ViewTransform:
    rotation = tilt_matrix(pose.tilt) @ pan_matrix(pose.pan)
    return ViewTransform(rotation, pose.zoom, pose.base_hfov, pose.aspect)


def identity_transform(base_hfov: float = DEFAULT_HFOV, aspect: float = DEFAULT_ASPECT) -> ViewTransform:
    return ViewTransform(np.eye(3), 1.0, base_hfov, aspect)


def invert_transform(t: ViewTransform) -> ViewTransform:
    """Transform that maps the local view of ``t`` back onto the global view.

    Only meaningful together with :func:`reproject_points` when the source
    view is the identity; kept for symmetry in tests.
    """
    return ViewTransform(t.rotation.T, 1.0 / t.focal_scale, t.base_hfov, t.aspect)


def _lift(points: np.ndarray, t: ViewTransform) -> np.ndarray:
    """Normalized image points (N, 2) -> world-frame rays (N, 3)."""
    x = (points[:, 0] - 0.5) * 2.0 * t.half_width
    y = (points[:, 1] - 0.5) * 2.0 * t.half_height
    rays = np.stack([x, y, np.ones_like(x)], axis=1)
    return rays @ t.rotation  # R^T applied row-wise


def _project(rays: np.ndarray, t: ViewTransform) -> tuple[np.ndarray, np.ndarray]:
    """World rays (N, 3) -> normalized points (N, 2) and an in-front mask."""
    cam = rays @ t.rotation.T
    z = cam[:, 2]
    front = z > _MIN_DEPTH
    safe = np.where(front, z, 1.0)
    u = 0.5 + cam[:, 0] / safe / (2.0 * t.half_width)
    v = 0.5 + cam[:, 1] / safe / (2.0 * t.half_height)
    return np.stack([u, v], axis=1), front


def reproject_points(points: np.ndarray, src: ViewTransform, dst: ViewTransform) -> tuple[np.ndarray, np.ndarray]:
    """Map image points seen from ``src`` onto the image plane of ``dst``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return _project(_lift(pts, src), dst)


def reproject_boxes(
    boxes: np.ndarray,
    dst: ViewTransform,
    src: Optional[ViewTransform] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized box re-projection.

    ``boxes`` is (N, 4) as x_min, y_min, x_max, y_max on the ``src`` plane
    (identity view when omitted). Returns the axis-aligned hulls on the
    ``dst`` plane and a validity mask; a box is invalid when any corner falls
    behind the camera or the hull misses the unit frame.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if src is None:
        src = identity_transform(dst.base_hfov, dst.aspect)
    n = boxes.shape[0]
    corners = np.stack(
        [
            boxes[:, [0, 1]],
            boxes[:, [2, 1]],
            boxes[:, [0, 3]],
            boxes[:, [2, 3]],
        ],
        axis=1,
    ).reshape(-1, 2)
    proj, front = reproject_points(corners, src, dst)
    proj = proj.reshape(n, 4, 2)
    front = front.reshape(n, 4).all(axis=1)
    hull = np.concatenate([proj.min(axis=1), proj.max(axis=1)], axis=1)
    overlaps = (hull[:, 0] < 1.0) & (hull[:, 2] > 0.0) & (hull[:, 1] < 1.0) & (hull[:, 3] > 0.0)
    nondegenerate = (hull[:, 2] > hull[:, 0]) & (hull[:, 3] > hull[:, 1])
    return hull, front & overlaps & nondegenerate


def reproject_box(box: BoundingBox, pose: CameraPose) -> Optional[BoundingBox]:
    """Global-view box -> local-view box for ``pose``; None when out of view."""
    hull, ok = reproject_boxes(np.array([box.as_tuple()]), to_transform(pose))
    if not ok[0]:
        return None
    return BoundingBox(*map(float, hull[0]), class_id=box.class_id)


def reproject_box_between(box: BoundingBox, src: ViewTransform, dst: ViewTransform) -> Optional[BoundingBox]:
    hull, ok = reproject_boxes(np.array([box.as_tuple()]), dst, src=src)
    if not ok[0]:
        return None
    return BoundingBox(*map(float, hull[0]), class_id=box.class_id)


def visible_fractions(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    clipped = np.clip(boxes, 0.0, 1.0)
    inter = np.maximum(clipped[:, 2] - clipped[:, 0], 0.0) * np.maximum(clipped[:, 3] - clipped[:, 1], 0.0)
    area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    return inter / area


def visible_fraction(box: BoundingBox) -> float:
    return float(visible_fractions(np.array([box.as_tuple()]))[0])


def view_footprint(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Corners of the local frame projected onto the global plane.

    Returns the (4, 2) corner array and whether all of them are in front of
    the global camera.
    """
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    t = to_transform(pose)
    return reproject_points(corners, t, identity_transform(pose.base_hfov, pose.aspect))


def view_within_global(pose: CameraPose, eps: float = 1e-9) -> bool:
    """True when the whole local frame lies inside the global frame."""
    pts, front = view_footprint(pose)
    return bool(front.all() and (pts >= -eps).all() and (pts <= 1.0 + eps).all())


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=float)
