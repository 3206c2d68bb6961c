"""In-lane time-to-collision and per-agent TTC violation counts.

Geometry is measured along the follower's heading: agent ``i`` is the
follower, ``j`` the candidate leader. ``g0`` is the gap from i's front bumper
to j's rear bumper and ``delta_u`` the closing speed, with both speeds
projected onto i's heading.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, UnobservedStateError
from .kinematics import ComfortThresholds, body_frame_kinematics_batch, comfort_violation_count
from .scenario import AgentState, SceneRecord


@dataclass(frozen=True)
class TtcConfig:
    theta_ttc: float = 1.0
    epsilon: float = 1e-3
    lateral_margin: float = 0.5
    # coarse center-distance prefilter in meters; None scores every pair
    prefilter_radius: float | None = None

    def __post_init__(self):
        if not self.theta_ttc > 0:
            raise ConfigError(f"theta_ttc must be > 0, got {self.theta_ttc!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not self.lateral_margin >= 0:
            raise ConfigError(f"lateral_margin must be >= 0, got {self.lateral_margin!r}")
        if self.prefilter_radius is not None and not self.prefilter_radius > 0:
            raise ConfigError("prefilter_radius must be > 0 when set")


def longitudinal_geometry(state_i: AgentState, state_j: AgentState) -> tuple[float, float, float]:
    """Return ``(g0, delta_u, lateral_offset)`` of j relative to i."""
    if not (state_i.observed and state_j.observed):
        raise UnobservedStateError("longitudinal geometry needs two observed states")
    ex, ey = math.cos(state_i.heading), math.sin(state_i.heading)
    dx = state_j.position[0] - state_i.position[0]
    dy = state_j.position[1] - state_i.position[1]
    along = dx * ex + dy * ey
    lateral = -dx * ey + dy * ex
    g0 = along - state_i.length / 2 - state_j.length / 2
    u_i = state_i.velocity[0] * ex + state_i.velocity[1] * ey
    u_j = state_j.velocity[0] * ex + state_j.velocity[1] * ey
    return g0, u_i - u_j, lateral


def ttc_pair(state_i: AgentState, state_j: AgentState, cfg: TtcConfig) -> float:
    g0, du, lateral = longitudinal_geometry(state_i, state_j)
    gate = (state_i.width + state_j.width) / 2 + cfg.lateral_margin
    if g0 > 0 and du > 0 and abs(lateral) <= gate:
        return g0 / max(cfg.epsilon, du)
    return math.inf


def pairwise_ttc(
    position: np.ndarray,
    heading: np.ndarray,
    velocity: np.ndarray,
    bbox: np.ndarray,
    observed: np.ndarray,
    cfg: TtcConfig,
) -> np.ndarray:
    """Vectorized TTC for all ordered pairs.

    Inputs are ``(N, T, ...)`` stacks. Returns ``ttc[i, j, t]`` with ``+inf``
    on the diagonal and wherever either agent is unobserved.
    """
    ex, ey = np.cos(heading), np.sin(heading)  # (N, T)
    # relative position of j w.r.t. i: (N_i, N_j, T)
    dx = position[None, :, :, 0] - position[:, None, :, 0]
    dy = position[None, :, :, 1] - position[:, None, :, 1]
    exi, eyi = ex[:, None, :], ey[:, None, :]
    along = dx * exi + dy * eyi
    lateral = -dx * eyi + dy * exi
    length, width = bbox[..., 0], bbox[..., 1]
    g0 = along - length[:, None, :] / 2 - length[None, :, :] / 2
    u_i = velocity[:, None, :, 0] * exi + velocity[:, None, :, 1] * eyi
    u_j = velocity[None, :, :, 0] * exi + velocity[None, :, :, 1] * eyi
    du = u_i - u_j
    gate = (width[:, None, :] + width[None, :, :]) / 2 + cfg.lateral_margin

    valid = (g0 > 0) & (du > 0) & (np.abs(lateral) <= gate)
    valid &= observed[:, None, :] & observed[None, :, :]
    n = position.shape[0]
    valid &= ~np.eye(n, dtype=bool)[:, :, None]
    if cfg.prefilter_radius is not None:
        valid &= dx * dx + dy * dy <= cfg.prefilter_radius**2
    with np.errstate(divide="ignore", invalid="ignore"):
        ttc = np.where(valid, g0 / np.maximum(cfg.epsilon, du), np.inf)
    return ttc


def scene_ttc_violation_counts(scene: SceneRecord, cfg: TtcConfig) -> dict[str, int]:
    """TTC violation count for every track in the scene over the history window."""
    st = scene.stacked
    h = scene.history_len
    ttc = pairwise_ttc(
        st.position[:, :h], st.heading[:, :h], st.velocity[:, :h], st.bbox[:, :h],
        st.observed[:, :h], cfg,
    )
    closest = ttc.min(axis=1) if len(st.ids) > 1 else np.full((1, h), np.inf)
    hits = np.isfinite(closest) & (closest < cfg.theta_ttc) & st.observed[:, :h]
    counts = hits.sum(axis=1)
    return {aid: int(c) for aid, c in zip(st.ids, counts)}


def ttc_violation_count(scene: SceneRecord, agent_id: str, cfg: TtcConfig) -> int:
    counts = scene_ttc_violation_counts(scene, cfg)
    if agent_id not in counts:
        raise KeyError(agent_id)
    return counts[agent_id]


# --- ego vs others report ---------------------------------------------------

REPORT_CSV_COLUMNS = ("scene_id", "agent_id", "role", "ttc_violations", "comfort_violations")


@dataclass(frozen=True)
class SceneViolations:
    scene_id: str
    ego_id: str
    ego_ttc_violations: int
    ego_comfort_violations: int
    others_ttc_violations: tuple[tuple[str, int], ...] = ()
    others_comfort_violations: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class ViolationReport:
    rows: tuple[SceneViolations, ...] = ()
    aggregates: dict = field(default_factory=dict)

    def csv_rows(self) -> list[tuple]:
        out = []
        for row in self.rows:
            out.append((row.scene_id, row.ego_id, "ego", row.ego_ttc_violations,
                        row.ego_comfort_violations))
            comfort = dict(row.others_comfort_violations)
            for aid, ttc in row.others_ttc_violations:
                out.append((row.scene_id, aid, "other", ttc, comfort[aid]))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_CSV_COLUMNS)
        writer.writerows(self.csv_rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.aggregates, indent=2, sort_keys=True) + "\n"


def _summarize(values: Sequence[int]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "median": None}
    return {
        "count": len(values),
        "mean": statistics.fmean(values),
        "median": float(statistics.median(values)),
    }


def scene_violations(scene: SceneRecord, pool: Iterable[str], thresholds: ComfortThresholds,
                     cfg: TtcConfig) -> SceneViolations:
    st = scene.stacked
    h = scene.history_len
    ttc_counts = scene_ttc_violation_counts(scene, cfg)
    ids = [scene.ego.agent_id, *pool]
    rows = [st.index(a) for a in ids]
    signals = body_frame_kinematics_batch(st.heading[rows, :h], st.velocity[rows, :h], scene.dt)
    comfort = comfort_violation_count(signals, thresholds)
    return SceneViolations(
        scene_id=scene.scene_id,
        ego_id=scene.ego.agent_id,
        ego_ttc_violations=ttc_counts[ids[0]],
        ego_comfort_violations=int(comfort[0]),
        others_ttc_violations=tuple((a, ttc_counts[a]) for a in ids[1:]),
        others_comfort_violations=tuple((a, int(c)) for a, c in zip(ids[1:], comfort[1:])),
    )


def build_report(rows: Iterable[SceneViolations]) -> ViolationReport:
    """Merge per-scene rows in scene_id order and compute corpus aggregates."""
    rows = tuple(sorted(rows, key=lambda r: r.scene_id))
    ego_ttc = [r.ego_ttc_violations for r in rows]
    ego_comf = [r.ego_comfort_violations for r in rows]
    oth_ttc = [c for r in rows for _, c in r.others_ttc_violations]
    oth_comf = [c for r in rows for _, c in r.others_comfort_violations]
    aggregates = {
        "scenes": len(rows),
        "ego": {"ttc": _summarize(ego_ttc), "comfort": _summarize(ego_comf)},
        "others": {"ttc": _summarize(oth_ttc), "comfort": _summarize(oth_comf)},
    }
    return ViolationReport(rows=rows, aggregates=aggregates)


def ego_vs_others_report(corpus: Iterable[SceneRecord], thresholds: ComfortThresholds,
                         cfg: TtcConfig, filter_cfg=None) -> ViolationReport:
    """Compare violation counts of the ego against every eligible agent."""
    from .eligibility import FilterConfig, eligible_pool

    filter_cfg = filter_cfg or FilterConfig()
    rows = [
        scene_violations(scene, eligible_pool(scene, filter_cfg), thresholds, cfg)
        for scene in corpus
    ]
    return build_report(rows)
