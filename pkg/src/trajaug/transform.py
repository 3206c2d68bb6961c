"""Re-expressing scenes in a selected agent's egocentric frame."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConsistencyError, NotAugmentableError, UnobservedStateError
from .scenario import (
    AgentState,
    AgentTrack,
    DrivableMap,
    Obstacle,
    Provenance,
    SceneRecord,
    wrap_angle,
)


@dataclass(frozen=True)
class RigidTransform2D:
    """Planar rigid motion ``x -> R(rotation) @ x + translation``."""

    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "rotation", float(self.rotation))
        object.__setattr__(self, "translation", (float(self.translation[0]), float(self.translation[1])))

    @property
    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation_matrix
        m[:2, 2] = self.translation
        return m

    def apply_vectors(self, v) -> np.ndarray:
        """Rotate only; for velocities and other free vectors."""
        v = np.asarray(v, dtype=float)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = v[..., 0], v[..., 1]
        return np.stack([c * x - s * y, s * x + c * y], axis=-1)

    def apply_points(self, p) -> np.ndarray:
        return self.apply_vectors(p) + np.asarray(self.translation)

    def apply_headings(self, heading):
        return wrap_angle(np.asarray(heading, dtype=float) + self.rotation)

    def apply_state(self, state: AgentState) -> AgentState:
        if not state.observed:
            return state
        p = self.apply_points(state.position)
        v = self.apply_vectors(state.velocity)
        return AgentState(
            position=(float(p[0]), float(p[1])),
            heading=float(self.apply_headings(state.heading)),
            velocity=(float(v[0]), float(v[1])),
            bbox=state.bbox,
            observed=True,
        )

    def inverse(self) -> "RigidTransform2D":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return RigidTransform2D(-self.rotation, (-(c * tx + s * ty), s * tx - c * ty))

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """``self ∘ other``: apply ``other`` first."""
        t = self.apply_points(other.translation)
        return RigidTransform2D(self.rotation + other.rotation, (float(t[0]), float(t[1])))


def se2_from_state(state: AgentState) -> RigidTransform2D:
    """World-to-agent transform sending the state to the origin with zero heading."""
    if not state.observed:
        raise UnobservedStateError("cannot build a reference frame from an unobserved state")
    rot = -state.heading
    c, s = math.cos(rot), math.sin(rot)
    x, y = state.position
    return RigidTransform2D(rot, (-(c * x - s * y), -(s * x + c * y)))


def reference_transform(scene: SceneRecord, agent_id: str) -> RigidTransform2D:
    """Frame of ``agent_id`` at the last history step."""
    return se2_from_state(scene.track(agent_id).state(scene.history_len - 1))


def transform_track(track: AgentTrack, T: RigidTransform2D) -> AgentTrack:
    obs = track.observed
    pos = np.where(obs[:, None], T.apply_points(track.position), 0.0)
    vel = np.where(obs[:, None], T.apply_vectors(track.velocity), 0.0)
    heading = np.where(obs, T.apply_headings(track.heading), 0.0)
    return AgentTrack(track.agent_id, track.category, pos, heading, vel, track.bbox, obs)


def _transform_tracks(scene: SceneRecord, order: list[str], T: RigidTransform2D) -> list[AgentTrack]:
    """Batched :func:`transform_track` over the scene's stacked arrays."""
    st = scene.stacked
    rows = [st.index(a) for a in order]
    obs = st.observed[rows]
    pos = np.where(obs[..., None], T.apply_points(st.position[rows]), 0.0)
    vel = np.where(obs[..., None], T.apply_vectors(st.velocity[rows]), 0.0)
    heading = np.where(obs, T.apply_headings(st.heading[rows]), 0.0)
    bbox = st.bbox[rows]
    return [
        AgentTrack._trusted(st.ids[r], st.categories[r], pos[k], heading[k], vel[k], bbox[k],
                            obs[k])
        for k, r in enumerate(rows)
    ]


def transform_obstacle(ob: Obstacle, T: RigidTransform2D) -> Obstacle:
    p = T.apply_points(ob.position)
    return Obstacle((float(p[0]), float(p[1])), float(T.apply_headings(ob.heading)), ob.bbox)


def transform_map(drivable: DrivableMap, T: RigidTransform2D) -> DrivableMap:
    return DrivableMap(
        polygons=tuple(T.apply_points(p) for p in drivable.polygons),
        polylines=tuple(T.apply_points(p) for p in drivable.polylines),
    )


def augmented_scene_id(scene_id: str, agent_id: str) -> str:
    return f"{scene_id}#{agent_id}"


def transform_scene(
    scene: SceneRecord,
    agent_id: str,
    T: RigidTransform2D | None = None,
    keep_original_ego: bool = True,
) -> SceneRecord:
    """Install ``agent_id`` as ego and move the whole scene into frame ``T``.

    ``T`` defaults to the agent's frame at the last history step. The former
    ego is appended to the agent list unless ``keep_original_ego`` is false.
    """
    try:
        selected = scene.track(agent_id)
    except KeyError:
        raise ConsistencyError(f"scene {scene.scene_id!r} has no agent {agent_id!r}") from None
    if not selected.observed.all():
        raise NotAugmentableError(
            f"scene {scene.scene_id!r}: agent {agent_id!r} is not observed over history and future"
        )
    if T is None:
        T = reference_transform(scene, agent_id)

    if agent_id == scene.ego.agent_id:
        ego, others = scene.ego, list(scene.agents)
    else:
        ego = selected
        others = [a for a in scene.agents if a.agent_id != agent_id]
        if keep_original_ego:
            others.append(scene.ego)

    if scene.provenance.kind == "original":
        provenance = Provenance.augmented(scene.scene_id, agent_id)
        new_id = augmented_scene_id(scene.scene_id, agent_id)
    else:
        provenance, new_id = scene.provenance, scene.scene_id
    tracks = _transform_tracks(scene, [ego.agent_id, *(a.agent_id for a in others)], T)
    return SceneRecord(
        scene_id=new_id,
        dt=scene.dt,
        history_len=scene.history_len,
        future_len=scene.future_len,
        ego=tracks[0],
        agents=tuple(tracks[1:]),
        obstacles=tuple(transform_obstacle(o, T) for o in scene.obstacles),
        drivable=transform_map(scene.drivable, T),
        context=scene.context,
        provenance=provenance,
    )


def check_plan(scene: SceneRecord, plan) -> None:
    if plan.scene_id != scene.scene_id:
        raise ConsistencyError(f"plan for {plan.scene_id!r} applied to scene {scene.scene_id!r}")
    ids = {a.agent_id for a in scene.agents}
    missing = [a for a in plan.agent_ids if a not in ids]
    if missing:
        raise ConsistencyError(f"scene {scene.scene_id!r}: plan references missing agents {missing}")


def augment_scene(scene: SceneRecord, plan, keep_original_ego: bool = True) -> list[SceneRecord]:
    check_plan(scene, plan)
    return [transform_scene(scene, a, keep_original_ego=keep_original_ego) for a in plan.agent_ids]


def augment_dataset(
    corpus: Sequence[SceneRecord],
    plans: Iterable | Mapping,
    keep_original_ego: bool = True,
) -> list[SceneRecord]:
    """Original scenes followed by one transformed scene per selection.

    Every plan is checked against its scene before anything is transformed.
    """
    if isinstance(plans, Mapping):
        by_scene = dict(plans)
    else:
        by_scene = {}
        for p in plans:
            if p.scene_id in by_scene:
                raise ConsistencyError(f"two plans for scene {p.scene_id!r}")
            by_scene[p.scene_id] = p
    scene_ids = {s.scene_id for s in corpus}
    unknown = sorted(set(by_scene) - scene_ids)
    if unknown:
        raise ConsistencyError(f"plans reference unknown scenes {unknown[:5]}")
    for scene in corpus:
        if scene.scene_id in by_scene:
            check_plan(scene, by_scene[scene.scene_id])

    out = list(corpus)
    for scene in corpus:
        plan = by_scene.get(scene.scene_id)
        if plan is not None:
            out.extend(augment_scene(scene, plan, keep_original_ego))
    return out


def iter_augmented(pairs: Iterable[tuple[SceneRecord, object]], keep_original_ego: bool = True,
                   ) -> Iterator[SceneRecord]:
    for scene, plan in pairs:
        yield from augment_scene(scene, plan, keep_original_ego)
