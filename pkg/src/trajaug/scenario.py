"""Canonical in-memory scene representation and its validation rules.

Tracks are stored column-wise (one array per field over time) so that the
metric code can vectorize across agents and timesteps. :class:`AgentState`
is the row view used where a single timestep is handled on its own.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
import shapely

TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Map angles (scalar or array) into the half-open interval (-pi, pi]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(angle, dtype=float), TWO_PI)
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped <= -math.pi, math.pi, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


class Category(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    BICYCLE = "bicycle"
    STATIC = "static"


def _frozen(values, dtype=float, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgentState:
    position: tuple[float, float]
    heading: float
    velocity: tuple[float, float]
    bbox: tuple[float, float]  # (length, width)
    observed: bool = True

    @property
    def length(self) -> float:
        return self.bbox[0]

    @property
    def width(self) -> float:
        return self.bbox[1]


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Time series of one agent's states.

    Headings are wrapped into (-pi, pi] and every numeric field of an
    unobserved timestep is zeroed on construction.

    Attributes:
        position: ``(T, 2)`` world-frame positions in meters.
        heading: ``(T,)`` headings in radians.
        velocity: ``(T, 2)`` world-frame velocities in m/s.
        bbox: ``(T, 2)`` bounding box ``(length, width)`` in meters.
        observed: ``(T,)`` boolean observability mask.
    """

    agent_id: str
    category: Category
    position: np.ndarray
    heading: np.ndarray
    velocity: np.ndarray
    bbox: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        heading = np.array(self.heading, dtype=float).reshape(-1)
        n = heading.shape[0]
        observed = np.asarray(self.observed, dtype=bool)
        observed = observed.copy() if observed.shape == (n,) else np.broadcast_to(observed, (n,)).copy()
        position = np.array(self.position, dtype=float).reshape(n, 2)
        velocity = np.array(self.velocity, dtype=float).reshape(n, 2)
        bbox = np.asarray(self.bbox, dtype=float)
        bbox = bbox.copy() if bbox.shape == (n, 2) else np.broadcast_to(bbox, (n, 2)).copy()

        hidden = ~observed
        if hidden.any():
            heading[hidden] = 0.0
            position[hidden] = 0.0
            velocity[hidden] = 0.0
            bbox[hidden] = 0.0
        heading = np.asarray(wrap_angle(heading), dtype=float).reshape(n)

        object.__setattr__(self, "agent_id", str(self.agent_id))
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "heading", _frozen(heading))
        object.__setattr__(self, "position", _frozen(position))
        object.__setattr__(self, "velocity", _frozen(velocity))
        object.__setattr__(self, "bbox", _frozen(bbox))
        object.__setattr__(self, "observed", _frozen(observed, dtype=bool))

    @classmethod
    def _trusted(cls, agent_id: str, category: Category, position, heading, velocity, bbox,
                 observed) -> "AgentTrack":
        """Skip normalization for arrays already in canonical form (shapes,
        dtypes, wrapped headings, zeroed hidden rows). Arrays are frozen in place."""
        self = object.__new__(cls)
        for name, arr in (("position", position), ("heading", heading), ("velocity", velocity),
                          ("bbox", bbox), ("observed", observed)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "agent_id", agent_id)
        object.__setattr__(self, "category", category)
        return self

    def __len__(self) -> int:
        return self.heading.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AgentTrack):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and self.category == other.category
            and len(self) == len(other)
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.heading, other.heading)
            and np.array_equal(self.velocity, other.velocity)
            and np.array_equal(self.bbox, other.bbox)
            and np.array_equal(self.observed, other.observed)
        )

    __hash__ = None

    def state(self, t: int) -> AgentState:
        return AgentState(
            position=(float(self.position[t, 0]), float(self.position[t, 1])),
            heading=float(self.heading[t]),
            velocity=(float(self.velocity[t, 0]), float(self.velocity[t, 1])),
            bbox=(float(self.bbox[t, 0]), float(self.bbox[t, 1])),
            observed=bool(self.observed[t]),
        )

    @property
    def states(self) -> tuple[AgentState, ...]:
        return tuple(self.state(t) for t in range(len(self)))

    @classmethod
    def from_states(cls, agent_id: str, category, states: Sequence[AgentState]) -> "AgentTrack":
        return cls(
            agent_id=agent_id,
            category=category,
            position=[s.position for s in states],
            heading=[s.heading for s in states],
            velocity=[s.velocity for s in states],
            bbox=[s.bbox for s in states],
            observed=[s.observed for s in states],
        )

    def fully_observed(self, stop: int | None = None) -> bool:
        return bool(self.observed[:stop].all())


@dataclass(frozen=True)
class Obstacle:
    position: tuple[float, float]
    heading: float
    bbox: tuple[float, float]


@dataclass(frozen=True, eq=False)
class DrivableMap:
    """Drivable polygons plus optional lane centerlines, all in world frame."""

    polygons: tuple[np.ndarray, ...] = ()
    polylines: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "polygons", tuple(_frozen(p).reshape(-1, 2) for p in self.polygons)
        )
        object.__setattr__(
            self, "polylines", tuple(_frozen(p).reshape(-1, 2) for p in self.polylines)
        )

    def __eq__(self, other):
        if not isinstance(other, DrivableMap):
            return NotImplemented
        return _arrays_equal(self.polygons, other.polygons) and _arrays_equal(
            self.polylines, other.polylines
        )

    __hash__ = None


def _arrays_equal(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(
        x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b)
    )


@dataclass(frozen=True)
class Provenance:
    kind: str = "original"
    source_scene_id: str | None = None
    source_agent_id: str | None = None

    def __post_init__(self):
        if self.kind not in ("original", "augmented"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")

    @classmethod
    def augmented(cls, scene_id: str, agent_id: str) -> "Provenance":
        return cls("augmented", scene_id, agent_id)


ORIGINAL = Provenance()


@dataclass(frozen=True, eq=False)
class SceneRecord:
    scene_id: str
    dt: float
    history_len: int
    future_len: int
    ego: AgentTrack
    agents: tuple[AgentTrack, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()
    drivable: DrivableMap = field(default_factory=DrivableMap)
    context: Mapping[str, Any] = field(default_factory=dict)
    provenance: Provenance = ORIGINAL

    def __post_init__(self):
        object.__setattr__(self, "scene_id", str(self.scene_id))
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "context", dict(self.context))

    def __eq__(self, other):
        if not isinstance(other, SceneRecord):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.dt == other.dt
            and self.history_len == other.history_len
            and self.future_len == other.future_len
            and self.ego == other.ego
            and self.agents == other.agents
            and self.obstacles == other.obstacles
            and self.drivable == other.drivable
            and self.context == other.context
            and self.provenance == other.provenance
        )

    __hash__ = None

    @property
    def num_steps(self) -> int:
        return self.history_len + self.future_len

    @property
    def tracks(self) -> tuple[AgentTrack, ...]:
        """Ego first, then agents in record order."""
        return (self.ego, *self.agents)

    def track(self, agent_id: str) -> AgentTrack:
        for tr in self.tracks:
            if tr.agent_id == agent_id:
                return tr
        raise KeyError(agent_id)

    @cached_property
    def stacked(self) -> "StackedTracks":
        return StackedTracks.from_tracks(self.tracks)


@dataclass(frozen=True)
class StackedTracks:
    """All tracks of a scene as ``(N, T, ...)`` arrays; row 0 is the ego."""

    ids: tuple[str, ...]
    categories: tuple[Category, ...]
    position: np.ndarray
    heading: np.ndarray
    velocity: np.ndarray
    bbox: np.ndarray
    observed: np.ndarray

    @classmethod
    def from_tracks(cls, tracks: Sequence[AgentTrack]) -> "StackedTracks":
        return cls(
            ids=tuple(t.agent_id for t in tracks),
            categories=tuple(t.category for t in tracks),
            position=np.stack([t.position for t in tracks]),
            heading=np.stack([t.heading for t in tracks]),
            velocity=np.stack([t.velocity for t in tracks]),
            bbox=np.stack([t.bbox for t in tracks]),
            observed=np.stack([t.observed for t in tracks]),
        )

    def index(self, agent_id: str) -> int:
        return self.ids.index(agent_id)


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    message: str = ""


class ValidationReport(tuple):
    """Immutable sequence of :class:`Violation`; empty means valid."""

    def __new__(cls, violations=()):
        return super().__new__(cls, violations)

    @property
    def ok(self) -> bool:
        return len(self) == 0

    def codes(self) -> list[str]:
        return [v.code for v in self]


def _validate_track(track: AgentTrack, where: str, expected_len: int, out: list):
    if len(track) != expected_len:
        out.append(
            Violation(
                "track_length_mismatch",
                where,
                f"{len(track)} states, expected {expected_len}",
            )
        )
    obs = track.observed
    numeric = np.column_stack([track.position, track.heading, track.velocity, track.bbox])
    bad = obs & ~np.isfinite(numeric).all(axis=1)
    for t in np.flatnonzero(bad):
        out.append(Violation("nonfinite_value", f"{where}[t={t}]"))
    h = track.heading
    bad = obs & np.isfinite(h) & ((h <= -math.pi) | (h > math.pi))
    for t in np.flatnonzero(bad):
        out.append(Violation("heading_out_of_range", f"{where}[t={t}]", f"{h[t]!r}"))
    with np.errstate(invalid="ignore"):
        bad = obs & ~(track.bbox > 0).all(axis=1) & np.isfinite(track.bbox).all(axis=1)
    for t in np.flatnonzero(bad):
        out.append(Violation("nonpositive_bbox", f"{where}[t={t}]"))


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def validate_scene(scene: SceneRecord) -> ValidationReport:
    """Check every scene invariant and report all violations found."""
    out: list[Violation] = []
    if not (math.isfinite(scene.dt) and scene.dt > 0):
        out.append(Violation("nonpositive_timestep", "dt", f"dt={scene.dt!r}"))
    if scene.history_len < 2:
        out.append(Violation("history_too_short", "history_len", f"{scene.history_len}"))
    if scene.future_len < 0:
        out.append(Violation("negative_future_len", "future_len", f"{scene.future_len}"))

    expected = scene.history_len + scene.future_len
    _validate_track(scene.ego, "ego", expected, out)
    if not scene.ego.observed.all():
        missing = np.flatnonzero(~scene.ego.observed)
        out.append(Violation("ego_unobserved", "ego", f"timesteps {missing.tolist()}"))

    seen = {scene.ego.agent_id}
    for k, tr in enumerate(scene.agents):
        where = f"agents[{k}]"
        if tr.agent_id in seen:
            out.append(Violation("duplicate_agent_id", where, tr.agent_id))
        seen.add(tr.agent_id)
        _validate_track(tr, where, expected, out)

    for k, poly in enumerate(scene.drivable.polygons):
        where = f"drivable.polygons[{k}]"
        if poly.shape[0] < 3:
            out.append(Violation("polygon_too_few_vertices", where))
            continue
        if not np.isfinite(poly).all():
            out.append(Violation("nonfinite_value", where))
            continue
        if abs(_polygon_area(poly)) <= 1e-12:
            out.append(Violation("polygon_zero_area", where))
            continue
        if not shapely.LinearRing(poly).is_simple:
            out.append(Violation("polygon_not_simple", where))
    for k, line in enumerate(scene.drivable.polylines):
        if not np.isfinite(line).all():
            out.append(Violation("nonfinite_value", f"drivable.polylines[{k}]"))
    for k, ob in enumerate(scene.obstacles):
        vals = (*ob.position, ob.heading, *ob.bbox)
        if not all(math.isfinite(v) for v in vals):
            out.append(Violation("nonfinite_value", f"obstacles[{k}]"))
    return ValidationReport(out)


def history_window(track: AgentTrack, scene: SceneRecord) -> tuple[AgentState, ...]:
    return tuple(track.state(t) for t in range(scene.history_len))


def iter_vehicle_agents(scene: SceneRecord) -> Iterator[AgentTrack]:
    return (a for a in scene.agents if a.category is Category.VEHICLE)
