"""Candidate pool construction and the displacement / comfort / TTC filters."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ConsistencyError
from .interaction import TtcConfig, scene_ttc_violation_counts
from .kinematics import (
    ComfortThresholds,
    body_frame_kinematics_batch,
    comfort_violation_count,
    heading_deviation_sum_batch,
)
from .scenario import Category, DrivableMap, SceneRecord

FILTER_ORDER = ("disp", "comf", "ttc")
WINDOWS = ("history_only", "history_and_future")

# distance below which a point counts as lying on a polygon edge
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class FilterConfig:
    radius_r: float = 50.0
    active: frozenset = frozenset()
    d_min: float = 3.0
    kappa_comf: int = 5
    kappa_ttc: int = 0
    observability_window: str = "history_and_future"

    def __post_init__(self):
        active = frozenset(self.active)
        unknown = active - set(FILTER_ORDER)
        if unknown:
            raise ConfigError(f"unknown filters {sorted(unknown)}; choose from {FILTER_ORDER}")
        object.__setattr__(self, "active", active)
        if not self.radius_r > 0:
            raise ConfigError(f"radius_r must be > 0, got {self.radius_r!r}")
        if not self.d_min >= 0:
            raise ConfigError(f"d_min must be >= 0, got {self.d_min!r}")
        if self.kappa_comf < 0 or self.kappa_ttc < 0:
            raise ConfigError("kappa thresholds must be >= 0")
        if self.observability_window not in WINDOWS:
            raise ConfigError(f"observability_window must be one of {WINDOWS}")

    def window(self, scene: SceneRecord) -> int:
        if self.observability_window == "history_only":
            return scene.history_len
        return scene.num_steps


@dataclass(frozen=True)
class CandidateScore:
    agent_id: str
    h: float
    d: float
    v_comf: int
    v_ttc: int
    eligible: bool = True
    passes_filters: bool = False

    def __post_init__(self):
        if self.passes_filters and not self.eligible:
            raise ConsistencyError(f"{self.agent_id}: passes_filters implies eligible")


# --- drivable area ----------------------------------------------------------


def _points_in_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd crossing test with boundary points counted as inside."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    px, py = pts[:, 0:1], pts[:, 1:2]  # (M, 1)
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]  # (E,)

    ex, ey = bx - ax, by - ay
    rx, ry = px - ax, py - ay
    cross = ex * ry - ey * rx
    seg_len2 = ex * ex + ey * ey
    dot = ex * rx + ey * ry
    on_edge = (np.abs(cross) <= BOUNDARY_TOL * np.sqrt(seg_len2)) & (dot >= -BOUNDARY_TOL) & (
        dot <= seg_len2 + BOUNDARY_TOL
    )

    straddles = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (py - ay) * ex / ey
    crossings = straddles & (px < x_cross)
    inside = (crossings.sum(axis=1) % 2) == 1
    return inside | on_edge.any(axis=1)


def points_in_drivable(drivable: DrivableMap, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    result = np.zeros(pts.shape[0], dtype=bool)
    for poly in drivable.polygons:
        lo, hi = poly.min(axis=0) - BOUNDARY_TOL, poly.max(axis=0) + BOUNDARY_TOL
        near = ~result & (pts >= lo).all(axis=1) & (pts <= hi).all(axis=1)
        if near.any():
            result[near] = _points_in_polygon(poly, pts[near])
    return result


def point_in_drivable(drivable: DrivableMap, p) -> bool:
    return bool(points_in_drivable(drivable, p)[0])


# --- pools ------------------------------------------------------------------


def eligible_pool(scene: SceneRecord, cfg: FilterConfig) -> tuple[str, ...]:
    """Agent ids (in record order) that qualify as augmentation candidates.

    A candidate is a non-ego vehicle that is observed, within ``radius_r`` of
    the ego and inside the drivable area at every step of the configured window.
    """
    vehicles = [a for a in scene.agents if a.category is Category.VEHICLE]
    if not vehicles:
        return ()
    w = cfg.window(scene)
    observed = np.stack([a.observed[:w] for a in vehicles])
    pos = np.stack([a.position[:w] for a in vehicles])
    ok = observed.all(axis=1)
    rel = pos - scene.ego.position[None, :w]
    ok &= (np.einsum("ntk,ntk->nt", rel, rel) <= cfg.radius_r**2).all(axis=1)
    if ok.any():
        idx = np.flatnonzero(ok)
        inside = points_in_drivable(scene.drivable, pos[idx].reshape(-1, 2))
        ok[idx] = inside.reshape(len(idx), w).all(axis=1)
    return tuple(a.agent_id for a, keep in zip(vehicles, ok) if keep)


def score_candidates(
    scene: SceneRecord,
    pool: Iterable[str],
    thresholds: ComfortThresholds,
    ttc_cfg: TtcConfig,
) -> dict[str, CandidateScore]:
    pool = list(pool)
    if not pool:
        return {}
    st = scene.stacked
    h = scene.history_len
    rows = [st.index(a) for a in pool]
    heading = st.heading[rows, :h]
    hdev = heading_deviation_sum_batch(heading)
    pos = st.position[rows]
    disp = np.hypot(*(pos[:, h - 1] - pos[:, 0]).T)
    signals = body_frame_kinematics_batch(heading, st.velocity[rows, :h], scene.dt)
    comfort = comfort_violation_count(signals, thresholds)
    ttc = scene_ttc_violation_counts(scene, ttc_cfg)
    return {
        aid: CandidateScore(
            agent_id=aid,
            h=float(hdev[k]),
            d=float(disp[k]),
            v_comf=int(comfort[k]),
            v_ttc=ttc[aid],
        )
        for k, aid in enumerate(pool)
    }


def rejection_reason(score: CandidateScore, cfg: FilterConfig) -> str | None:
    """First active filter (in disp, comf, ttc order) the candidate fails."""
    if "disp" in cfg.active and not score.d >= cfg.d_min:
        return "disp"
    if "comf" in cfg.active and not score.v_comf <= cfg.kappa_comf:
        return "comf"
    if "ttc" in cfg.active and not score.v_ttc <= cfg.kappa_ttc:
        return "ttc"
    return None


def filtered_pool(
    scene: SceneRecord,
    pool: Sequence[str],
    scores: Mapping[str, CandidateScore],
    cfg: FilterConfig,
) -> tuple[str, ...]:
    missing = [a for a in pool if a not in scores]
    if missing:
        raise ConsistencyError(f"scene {scene.scene_id!r}: no score for pool members {missing}")
    return tuple(a for a in pool if rejection_reason(scores[a], cfg) is None)


def mark_verdicts(scores: Mapping[str, CandidateScore], survivors: Iterable[str]) -> dict:
    keep = set(survivors)
    return {a: replace(s, passes_filters=a in keep) for a, s in scores.items()}
