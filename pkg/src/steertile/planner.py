"""
Tile planning: hierarchical partitions, the tree-constrained knapsack and
plan election.

A plan selects a set of tree nodes, no two of which are in an
ancestor/descendant relation, and assigns exactly one model to each. The
knapsack value of a (node, model) pair is the model's estimated accuracy on
the node's objects weighted by the node's share of all objects, so the
knapsack objective equals the plan's estimated accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .distribution import LocalDistribution, Rect, grid_histograms, region_histograms
from .profile import ModelFamily, ModelProfile

CONSERVATIVE = "conservative"
NON_CONSERVATIVE = "non_conservative"
MODES = (CONSERVATIVE, NON_CONSERVATIVE)

DEFAULT_FRAME_WIDTH = 3840
MAX_DEPTH = 6

BRUTE_FORCE_MAX_NODES = 25
BRUTE_FORCE_MAX_MODELS = 4
BRUTE_FORCE_MAX_BUDGET = 64

# DP back-pointer codes; values >= 0 are model indices
_EMPTY = -1
_LEFT = -2
_CHILD = -3


def check_mode(mode: str) -> bool:
    """True for conservative mode; raises on unknown modes."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    return mode == CONSERVATIVE


# -- trees ------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTree:
    """Hierarchical partition of the unit frame, nodes indexed in post-order."""

    depth: int
    regions: np.ndarray
    children: tuple[tuple[int, ...], ...]
    parent: tuple[int, ...]
    level: tuple[int, ...]

    @property
    def root(self) -> int:
        return len(self.children) - 1

    def __len__(self) -> int:
        return len(self.children)

    def region(self, n: int) -> Rect:
        return tuple(float(v) for v in self.regions[n])

    def ancestors(self, n: int) -> list[int]:
        out = []
        while self.parent[n] >= 0:
            n = self.parent[n]
            out.append(n)
        return out

    def post_order(self) -> list[int]:
        out: list[int] = []

        def walk(n: int) -> None:
            for c in self.children[n]:
                walk(c)
            out.append(n)

        walk(self.root)
        return out


# QuadTree is the only partition the planner builds by default
QuadTree = SpaceTree


def _split(region: Rect, branching: int, level: int) -> list[Rect]:
    x0, y0, x1, y1 = region
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    if branching == 4:
        # NW, NE, SW, SE
        return [(x0, y0, xm, ym), (xm, y0, x1, ym), (x0, ym, xm, y1), (xm, ym, x1, y1)]
    if level % 2 == 0:
        return [(x0, y0, xm, y1), (xm, y0, x1, y1)]
    return [(x0, y0, x1, ym), (x0, ym, x1, y1)]


def build_tree(depth: int, branching: int = 4) -> SpaceTree:
    """Full partition tree of the unit frame.

    ``branching`` 4 gives a quad-tree; 2 gives a binary tree that alternates
    vertical and horizontal cuts.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [0, {MAX_DEPTH}], got {depth}")
    if branching not in (2, 4):
        raise ValueError("branching must be 2 or 4")
    regions: list[Rect] = []
    children: list[tuple[int, ...]] = []
    levels: list[int] = []

    def build(region: Rect, level: int) -> int:
        kids = ()
        if level < depth:
            kids = tuple(build(r, level + 1) for r in _split(region, branching, level))
        regions.append(region)
        children.append(kids)
        levels.append(level)
        return len(regions) - 1

    build((0.0, 0.0, 1.0, 1.0), 0)
    parent = [-1] * len(children)
    for n, kids in enumerate(children):
        for c in kids:
            parent[c] = n
    return SpaceTree(depth, np.array(regions, dtype=float), tuple(children), tuple(parent), tuple(levels))


# -- instances and plans ------------------------------------------------------

@dataclass(frozen=True)
class PlanningInstance:
    accuracy: np.ndarray  # (nodes, models)
    latency_units: tuple[int, ...]
    budget: int
    step_ms: float = 1.0
    model_names: tuple[str, ...] = ()
    latency_ms: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        a = np.asarray(self.accuracy, dtype=float)
        if a.ndim != 2:
            raise ValueError("accuracy must be a (nodes, models) matrix")
        if (a < 0).any():
            raise ValueError("accuracy entries must be non-negative")
        lat = tuple(int(v) for v in self.latency_units)
        if len(lat) != a.shape[1]:
            raise ValueError("one latency per model is required")
        if any(v < 1 for v in lat):
            raise ValueError("latencies must be at least one unit")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.step_ms <= 0:
            raise ValueError("step_ms must be positive")
        names = tuple(self.model_names) or tuple(f"M{k + 1}" for k in range(a.shape[1]))
        lat_ms = tuple(float(v) for v in self.latency_ms) or tuple(v * self.step_ms for v in lat)
        object.__setattr__(self, "accuracy", a)
        object.__setattr__(self, "latency_units", lat)
        object.__setattr__(self, "budget", int(self.budget))
        object.__setattr__(self, "model_names", names)
        object.__setattr__(self, "latency_ms", lat_ms)

    @property
    def n_nodes(self) -> int:
        return self.accuracy.shape[0]

    @property
    def n_models(self) -> int:
        return self.accuracy.shape[1]


@dataclass(frozen=True)
class TileAssignment:
    region: Rect
    model: str
    node: Optional[int] = None


@dataclass(frozen=True)
class TilePlan:
    assignments: tuple[TileAssignment, ...]
    estimated_accuracy: float
    estimated_latency_ms: float
    source: str
    latency_units: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.assignments

    @property
    def tile_count(self) -> int:
        return len(self.assignments)

    @property
    def kind(self) -> str:
        """adaptive, uniform, downsample or fallback."""
        return self.source.split(":", 1)[0]

    def mapping(self) -> dict[int, str]:
        return {a.node: a.model for a in self.assignments if a.node is not None}

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "estimated_accuracy": self.estimated_accuracy,
            "estimated_latency_ms": self.estimated_latency_ms,
            "tiles": [
                {
                    "x_min": a.region[0],
                    "y_min": a.region[1],
                    "x_max": a.region[2],
                    "y_max": a.region[3],
                    "model": a.model,
                }
                for a in self.assignments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TilePlan":
        tiles = tuple(
            TileAssignment((t["x_min"], t["y_min"], t["x_max"], t["y_max"]), t["model"]) for t in d["tiles"]
        )
        return cls(tiles, float(d["estimated_accuracy"]), float(d["estimated_latency_ms"]), d["source"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def empty_plan(source: str = "adaptive") -> TilePlan:
    return TilePlan((), 0.0, 0.0, source, 0)


def latency_units(latency_ms: float, step_ms: float) -> int:
    # rounded up so discretization never under-estimates a model's cost
    return max(1, math.ceil(round(latency_ms / step_ms, 9)))


def budget_units(budget_ms: float, step_ms: float) -> int:
    return max(0, math.floor(round(budget_ms / step_ms, 9)))


def assemble_instance(
    tree: SpaceTree,
    local: LocalDistribution,
    family: ModelFamily,
    mode: str,
    budget_ms: float,
    step_ms: float = 1.0,
) -> PlanningInstance:
    if budget_ms < 0:
        raise ValueError("budget must be non-negative")
    if step_ms <= 0:
        raise ValueError("step must be positive")
    conservative = check_mode(mode)
    hist = region_histograms(local, tree.regions, family.binning)
    acc = np.stack([m.accuracy_array for m in family], axis=1)  # (bins, models)
    total = len(local)
    values = hist @ acc / total if total else np.zeros((len(tree), len(family)))
    lat_ms = tuple(m.latency(conservative) for m in family)
    return PlanningInstance(
        accuracy=values,
        latency_units=tuple(latency_units(v, step_ms) for v in lat_ms),
        budget=budget_units(budget_ms, step_ms),
        step_ms=step_ms,
        model_names=tuple(family.names),
        latency_ms=lat_ms,
    )


def _plan_from_mapping(
    mapping: dict[int, int],
    instance: PlanningInstance,
    tree: SpaceTree,
    source: str,
) -> TilePlan:
    nodes = sorted(mapping)
    assignments = tuple(TileAssignment(tree.region(n), instance.model_names[mapping[n]], n) for n in nodes)
    value = 0.0
    for n in nodes:
        value += float(instance.accuracy[n, mapping[n]])
    units = sum(instance.latency_units[mapping[n]] for n in nodes)
    ms = sum(instance.latency_ms[mapping[n]] for n in nodes)
    return TilePlan(assignments, value, ms, source, units)


# -- DP-DP ---------------------------------------------------------------------

@dataclass
class _Row:
    value: np.ndarray
    used: np.ndarray
    choice: np.ndarray
    left: Optional[int]
    last_child: Optional[int]


@dataclass
class DPResult:
    objective: float
    mapping: dict[int, int]
    rows: dict[int, _Row] = field(repr=False)
    latency_units: tuple[int, ...] = ()

    def solution_at(self, node: int, budget: int) -> dict[int, int]:
        """Node-to-model mapping stored in ``node``'s row at ``budget``."""
        return _backtrack(self.rows, self.latency_units, node, budget)


def _backtrack(rows: dict[int, _Row], lat: Sequence[int], node: Optional[int], budget: int) -> dict[int, int]:
    mapping: dict[int, int] = {}
    n, i = node, budget
    while n is not None:
        row = rows[n]
        c = int(row.choice[i])
        if c == _EMPTY:
            break
        if c == _LEFT:
            n = row.left
        elif c == _CHILD:
            n = row.last_child
        else:
            mapping[n] = c
            i -= lat[c]
            n = row.left
    return mapping


def dp_dp_table(instance: PlanningInstance, tree: SpaceTree) -> DPResult:
    """Run the post-order DP and keep every node's row.

    Each row holds, for every latency budget 0..B, the best value over the
    nodes visited so far (the left context plus the node's subtree), the
    total latency of that solution, and a back-pointer: a model index, "take
    the left context's solution", or "take the last child's solution".
    Equal values are resolved towards the smaller total latency, then towards
    the earlier option in the order models, left context, children.
    """
    if instance.n_nodes != len(tree):
        raise ValueError("instance and tree disagree on node count")
    B = instance.budget
    A = instance.accuracy
    lat = instance.latency_units
    zero_val = np.zeros(B + 1)
    zero_used = np.zeros(B + 1, dtype=np.int64)
    rows: dict[int, _Row] = {}

    def visit(n: int, left: Optional[int]) -> None:
        left_val = rows[left].value if left is not None else zero_val
        left_used = rows[left].used if left is not None else zero_used
        prev = left
        for c in tree.children[n]:
            visit(c, prev)
            prev = c
        last_child = prev if tree.children[n] else None

        val = np.zeros(B + 1)
        used = np.zeros(B + 1, dtype=np.int64)
        choice = np.full(B + 1, _EMPTY, dtype=np.int64)

        def offer(cand_val, cand_used, code, lo=0):
            # candidates cover budgets lo..B; below lo they are infeasible
            v, u = val[lo:], used[lo:]
            better = (cand_val > v) | ((cand_val == v) & (cand_used < u))
            np.copyto(v, cand_val, where=better)
            np.copyto(u, cand_used, where=better)
            np.copyto(choice[lo:], code, where=better)

        for m in range(instance.n_models):
            a, l = A[n, m], lat[m]
            # zero-value items can never raise the objective
            if a <= 0 or l > B:
                continue
            offer(left_val[: B + 1 - l] + a, left_used[: B + 1 - l] + l, m, l)

        offer(left_val, left_used, _LEFT)
        if last_child is not None:
            offer(rows[last_child].value, rows[last_child].used, _CHILD)

        rows[n] = _Row(val, used, choice, left, last_child)

    visit(tree.root, None)
    mapping = _backtrack(rows, lat, tree.root, B)
    return DPResult(float(rows[tree.root].value[B]), mapping, rows, lat)


def dp_dp(instance: PlanningInstance, tree: SpaceTree) -> TilePlan:
    """Optimal tile/model selection under the latency budget."""
    result = dp_dp_table(instance, tree)
    return _plan_from_mapping(result.mapping, instance, tree, "adaptive")


# -- exhaustive oracle -----------------------------------------------------------

def brute_force_plan(instance: PlanningInstance, tree: SpaceTree) -> TilePlan:
    """Exhaustive search over antichains of the tree and their model choices.

    Only meant as a test oracle; guarded against instance sizes where the
    enumeration blows up. Pairs with zero value are never part of a unique
    maximum, so they are not enumerated.
    """
    if (
        len(tree) > BRUTE_FORCE_MAX_NODES
        or instance.n_models > BRUTE_FORCE_MAX_MODELS
        or instance.budget > BRUTE_FORCE_MAX_BUDGET
    ):
        raise ValueError("instance too large for exhaustive search")
    if instance.n_nodes != len(tree):
        raise ValueError("instance and tree disagree on node count")
    A = instance.accuracy
    lat = instance.latency_units
    options = [
        [(m, lat[m], float(A[n, m])) for m in range(instance.n_models) if A[n, m] > 0]
        for n in range(len(tree))
    ]
    best_val, best_used, best_map = 0.0, 0, {}
    chosen: dict[int, int] = {}

    def search(pending: tuple[int, ...], left: int, value: float, used: int) -> None:
        nonlocal best_val, best_used, best_map
        if not pending:
            if value > best_val or (value == best_val and used < best_used):
                best_val, best_used, best_map = value, used, dict(chosen)
            return
        n, rest = pending[0], pending[1:]
        for m, l, a in options[n]:
            if l <= left:
                chosen[n] = m
                # selecting n excludes its whole subtree
                search(rest, left - l, value + a, used + l)
                del chosen[n]
        search(tree.children[n] + rest, left, value, used)

    search((tree.root,), instance.budget, 0.0, 0)
    return _plan_from_mapping(best_map, instance, tree, "adaptive")


def check_plan(plan: TilePlan, tree: SpaceTree, instance: Optional[PlanningInstance] = None) -> None:
    """Raise if ``plan`` violates C1 (no nested nodes), C2 (one model per node) or the budget."""
    nodes = [a.node for a in plan.assignments]
    if any(n is None for n in nodes):
        raise ValueError("plan has tiles that are not tree nodes")
    if len(set(nodes)) != len(nodes):
        raise ValueError("a node carries more than one model")
    selected = set(nodes)
    for n in nodes:
        if selected.intersection(tree.ancestors(n)):
            raise ValueError(f"node {n} is selected together with an ancestor")
    if instance is not None:
        index = {name: k for k, name in enumerate(instance.model_names)}
        units = sum(instance.latency_units[index[a.model]] for a in plan.assignments)
        if units > instance.budget:
            raise ValueError(f"plan latency {units} exceeds budget {instance.budget}")


# -- uniform plans and election -------------------------------------------------

def grid_size(profile: ModelProfile, frame_width: int = DEFAULT_FRAME_WIDTH) -> int:
    return max(1, math.ceil(frame_width / profile.input_side))


def grid_regions(k: int) -> list[Rect]:
    edges = [i / k for i in range(k)] + [1.0]
    return [(edges[i], edges[j], edges[i + 1], edges[j + 1]) for j in range(k) for i in range(k)]


def uniform_plan(
    profile: ModelProfile,
    local: LocalDistribution,
    mode: str,
    grid: Optional[int] = None,
    step_ms: float = 1.0,
    frame_width: int = DEFAULT_FRAME_WIDTH,
) -> TilePlan:
    """Equal k x k grid with one model; k=1 is plain down-sampling."""
    conservative = check_mode(mode)
    k = grid if grid is not None else grid_size(profile, frame_width)
    tiles = tuple(TileAssignment(r, profile.name) for r in grid_regions(k))
    total = len(local)
    hist = grid_histograms(local, k, profile.binning)
    acc = float((hist @ profile.accuracy_array).sum() / total) if total else 0.0
    lat = profile.latency(conservative)
    source = f"downsample:{profile.name}" if k == 1 else f"uniform:{profile.name}"
    return TilePlan(tiles, acc, k * k * lat, source, k * k * latency_units(lat, step_ms))


def downsample_plan(profile: ModelProfile, local: LocalDistribution, mode: str, step_ms: float = 1.0) -> TilePlan:
    return uniform_plan(profile, local, mode, grid=1, step_ms=step_ms)


def uniform_plans(
    family: ModelFamily,
    local: LocalDistribution,
    budget_ms: float,
    mode: str,
    step_ms: float = 1.0,
    frame_width: int = DEFAULT_FRAME_WIDTH,
) -> list[TilePlan]:
    """One uniform grid per model, keeping only those that fit the budget."""
    limit = budget_units(budget_ms, step_ms)
    conservative = check_mode(mode)
    plans = []
    for m in family:
        k = grid_size(m, frame_width)
        if k * k * latency_units(m.latency(conservative), step_ms) <= limit:
            plans.append(uniform_plan(m, local, mode, grid=k, step_ms=step_ms))
    return plans


def elect(adaptive: TilePlan, uniforms: Sequence[TilePlan]) -> TilePlan:
    """Most accurate candidate; ties go to the faster plan, then to the adaptive one."""
    candidates = ([adaptive] if adaptive is not None else []) + list(uniforms)
    if not candidates:
        return empty_plan("fallback")
    # stable sort keeps the adaptive plan ahead of equal uniform ones
    return sorted(candidates, key=lambda p: (-p.estimated_accuracy, p.estimated_latency_ms))[0]
