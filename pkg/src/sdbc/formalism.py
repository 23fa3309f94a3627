"""Formal task-state model and per-step behaviour feature extraction.

A task state is an ordered list of entity groups plus a distance function.
Four kinds of features are read off a state each simulation step: relative
group sizes, per-group mean state vectors, within-group dispersion, and
mean pairwise distance between groups.  The feature schema is a pure
function of the group declarations, so every snapshot of one simulation
emits the same fixed-length vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

# Geometry tag stored as the first element of an entity's props tuple.
# Entities whose position lives in their mutable state (robots) use BODY;
# static entities encode their geometry entirely in props.
GEOM_BODY = 0.0      # position is theta[0], theta[1]
GEOM_POINT = 1.0     # props = (tag, x, y)
GEOM_SEGMENTS = 2.0  # props = (tag, x1, y1, x2, y2, ...) one or more segments
GEOM_CIRCLE = 3.0    # props = (tag, cx, cy, r); distance is to the circle line


class UndefinedFeatureError(ValueError):
    """A feature has no value for the current group contents (empty or
    singleton group, or degenerate size bounds)."""


@dataclass(frozen=True)
class EntityState:
    """One entity: a tuple of mutable attributes plus constant properties."""

    theta: tuple[float, ...]
    props: tuple[float, ...] = ()


@dataclass(frozen=True)
class GroupSpec:
    """Declaration of an entity group: name, attribute arity and size bounds.

    `attr_names` is optional and only feeds the human-readable feature
    schema; when absent, attributes are named positionally.
    """

    name: str
    kappa: int
    eta_min: int
    eta_max: int
    attr_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ValueError(f"group {self.name!r}: kappa must be >= 0")
        if self.eta_min < 0 or self.eta_max < 1 or self.eta_min > self.eta_max:
            raise ValueError(f"group {self.name!r}: need 0 <= eta_min <= eta_max, eta_max >= 1")
        if self.attr_names and len(self.attr_names) != self.kappa:
            raise ValueError(f"group {self.name!r}: attr_names length != kappa")

    def attr_name(self, j: int) -> str:
        return self.attr_names[j] if self.attr_names else f"state {j}"


@dataclass(frozen=True)
class EntityGroup:
    """A declared group together with its current members."""

    spec: GroupSpec
    entities: tuple[EntityState, ...]

    def __post_init__(self) -> None:
        if not (self.spec.eta_min <= len(self.entities) <= self.spec.eta_max):
            raise ValueError(
                f"group {self.spec.name!r}: {len(self.entities)} entities outside "
                f"[{self.spec.eta_min}, {self.spec.eta_max}]"
            )
        for e in self.entities:
            if len(e.theta) != self.spec.kappa:
                raise ValueError(f"group {self.spec.name!r}: entity arity != kappa")

    def __len__(self) -> int:
        return len(self.entities)


DistanceFunction = Callable[[EntityState, EntityState], float]


@dataclass(frozen=True)
class TaskStateSnapshot:
    """The full task state at one simulation step.

    `excluded_pairs` names group pairs whose mutual distance is left out of
    the feature set (used by task layouts that fold redundant static
    geometry, e.g. a gate that is physically part of the walls).
    """

    groups: tuple[EntityGroup, ...]
    distance: DistanceFunction
    excluded_pairs: frozenset[frozenset[str]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(self.groups) < 1:
            raise ValueError("a task state needs at least one entity group")


@dataclass(frozen=True)
class FeatureSnapshot:
    """Feature values extracted from one snapshot, bound to a shared schema."""

    values: tuple[float, ...]
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.schema):
            raise ValueError("feature values and schema lengths differ")


# ---------------------------------------------------------------------------
# geometry helpers shared by the bundled task distance functions


def point_point_distance(ax: float, ay: float, bx: float, by: float) -> float:
    return math.hypot(ax - bx, ay - by)


def point_segment_distance(
    px: float, py: float, x1: float, y1: float, x2: float, y2: float
) -> float:
    """Distance from a point to a line segment."""
    dx, dy = x2 - x1, y2 - y1
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        return math.hypot(px - x1, py - y1)
    t = ((px - x1) * dx + (py - y1) * dy) / seg_sq
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def _entity_point(e: EntityState) -> tuple[float, float] | None:
    if not e.props or e.props[0] == GEOM_BODY:
        if len(e.theta) < 2:
            return None
        return e.theta[0], e.theta[1]
    if e.props[0] == GEOM_POINT:
        return e.props[1], e.props[2]
    return None


def geometry_distance(a: EntityState, b: EntityState) -> float:
    """Physical distance between two entities under the props geometry tags.

    Symmetric and zero on identical entities.  Supported combinations are
    point-like vs point-like, point-like vs segment set, and point-like vs
    circle line; anything else is not a meaningful physical distance here.
    """
    if a is b or a == b:
        return 0.0
    pa, pb = _entity_point(a), _entity_point(b)
    if pa is not None and pb is not None:
        return point_point_distance(*pa, *pb)
    if pa is None and pb is None:
        raise ValueError("distance between two non-point entities is not defined")
    point, other = (pa, b) if pa is not None else (pb, a)
    tag = other.props[0]
    if tag == GEOM_SEGMENTS:
        segs = other.props[1:]
        return min(
            point_segment_distance(point[0], point[1], *segs[i : i + 4])
            for i in range(0, len(segs), 4)
        )
    if tag == GEOM_CIRCLE:
        cx, cy, r = other.props[1], other.props[2], other.props[3]
        return abs(point_point_distance(point[0], point[1], cx, cy) - r)
    raise ValueError(f"unsupported geometry tag {tag!r}")


# ---------------------------------------------------------------------------
# the four per-step feature extractors


def group_size_feature(g: EntityGroup) -> float:
    """Current group size, rescaled to [0, 1] by the declared bounds."""
    spec = g.spec
    if spec.eta_max == spec.eta_min:
        raise UndefinedFeatureError(f"group {spec.name!r} has fixed size")
    return (len(g) - spec.eta_min) / (spec.eta_max - spec.eta_min)


def group_mean_state(g: EntityGroup) -> tuple[float, ...]:
    """Arithmetic mean of each attribute over the group members."""
    if len(g) == 0:
        raise UndefinedFeatureError(f"group {g.spec.name!r} is empty")
    if g.spec.kappa < 1:
        raise UndefinedFeatureError(f"group {g.spec.name!r} has no attributes")
    n = len(g)
    return tuple(
        sum(e.theta[j] for e in g.entities) / n for j in range(g.spec.kappa)
    )


def group_dispersion(g: EntityGroup, f: DistanceFunction) -> float:
    """Within-group spread: sum of all ordered pair distances over (|g|-1)^2."""
    n = len(g)
    if n <= 1:
        raise UndefinedFeatureError(f"group {g.spec.name!r} has fewer than 2 entities")
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += f(g.entities[i], g.entities[j])
    return total / (n - 1) ** 2


def group_pair_distance(a: EntityGroup, b: EntityGroup, f: DistanceFunction) -> float:
    """Mean distance over all cross pairs of two groups."""
    if len(a) == 0 or len(b) == 0:
        raise UndefinedFeatureError("pair distance with an empty group")
    total = 0.0
    for ea in a.entities:
        for eb in b.entities:
            total += f(ea, eb)
    return total / (len(a) * len(b))


# ---------------------------------------------------------------------------
# schema and full-snapshot extraction


def feature_schema(
    specs: Sequence[GroupSpec],
    excluded_pairs: frozenset[frozenset[str]] = frozenset(),
) -> tuple[str, ...]:
    """Feature names implied by the group declarations alone.

    Order is fixed: group sizes, then per-group mean states, then
    dispersions, then pair distances for declaration-ordered pairs i < j.
    """
    names: list[str] = []
    for s in specs:
        if s.eta_max > s.eta_min:
            names.append(f"{s.name} group size")
    for s in specs:
        for j in range(s.kappa):
            names.append(f"{s.name} {s.attr_name(j)}")
    for s in specs:
        if s.eta_max > 1:
            names.append(f"{s.name} dispersion")
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            if frozenset((specs[i].name, specs[j].name)) in excluded_pairs:
                continue
            names.append(f"{specs[i].name}-{specs[j].name} distance")
    return tuple(names)


def extract_features(
    s: TaskStateSnapshot, previous: FeatureSnapshot | None = None
) -> FeatureSnapshot:
    """Extract the full feature vector from one snapshot.

    Features that are momentarily undefined (a group that is currently
    empty, or a lone member where dispersion needs two) take the value from
    `previous`; on the first step they take 0.
    """
    specs = tuple(g.spec for g in s.groups)
    schema = feature_schema(specs, s.excluded_pairs)
    if previous is not None and previous.schema != schema:
        raise ValueError("previous snapshot has a different schema")

    values: list[float] = []

    def emit(k: int, compute: Callable[[], float]) -> None:
        try:
            values.append(float(compute()))
        except UndefinedFeatureError:
            values.append(previous.values[k] if previous is not None else 0.0)

    for g in s.groups:
        if g.spec.eta_max > g.spec.eta_min:
            emit(len(values), lambda g=g: group_size_feature(g))
    for g in s.groups:
        if g.spec.kappa >= 1:
            try:
                mean = group_mean_state(g)
            except UndefinedFeatureError:
                mean = None
            for j in range(g.spec.kappa):
                k = len(values)
                if mean is not None:
                    values.append(float(mean[j]))
                else:
                    values.append(previous.values[k] if previous is not None else 0.0)
    for g in s.groups:
        if g.spec.eta_max > 1:
            emit(len(values), lambda g=g: group_dispersion(g, s.distance))
    for i in range(len(s.groups)):
        for j in range(i + 1, len(s.groups)):
            a, b = s.groups[i], s.groups[j]
            if frozenset((a.spec.name, b.spec.name)) in s.excluded_pairs:
                continue
            emit(len(values), lambda a=a, b=b: group_pair_distance(a, b, s.distance))

    return FeatureSnapshot(values=tuple(values), schema=schema)


def extract_feature_series(snapshots: Sequence[TaskStateSnapshot]) -> list[FeatureSnapshot]:
    """Extract features for a whole trial, threading the carry-forward rule."""
    out: list[FeatureSnapshot] = []
    prev: FeatureSnapshot | None = None
    for s in snapshots:
        prev = extract_features(s, prev)
        out.append(prev)
    return out
