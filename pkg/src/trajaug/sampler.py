"""Temperature-softmax candidate selection without replacement.

Draws use the Gumbel-top-k construction: perturb each log-weight with an
independent Gumbel variate and keep the ``k`` largest. Its output order has
the same law as sequential categorical draws with renormalization after
each removal.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ConsistencyError

UNIFORM = "uniform"
MODES = ("per_scene", "per_ego")


@dataclass(frozen=True)
class SamplingConfig:
    tau: float | str = 0.5
    n_s: int = 1
    mode: str = "per_scene"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.tau, str):
            if self.tau != UNIFORM:
                raise ConfigError(f"tau must be a positive number or {UNIFORM!r}, got {self.tau!r}")
        elif not (math.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be > 0, got {self.tau!r}")
        if int(self.n_s) != self.n_s or self.n_s < 1:
            raise ConfigError(f"n_s must be an integer >= 1, got {self.n_s!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")


def _logits(h: Sequence[float], tau) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("softmax needs a nonempty 1-D weight vector")
    if not np.isfinite(h).all():
        raise ValueError("softmax weights must be finite")
    if tau == UNIFORM:
        return np.zeros_like(h)
    if not (isinstance(tau, (int, float)) and tau > 0):
        raise ValueError(f"tau must be > 0 or {UNIFORM!r}")
    return h / tau


def softmax_weights(h: Sequence[float], tau) -> np.ndarray:
    """Selection probabilities ``exp(h_i / tau) / sum_j exp(h_j / tau)``."""
    z = _logits(h, tau)
    if tau == UNIFORM:
        return np.full(z.shape, 1.0 / z.size)
    e = np.exp(z - z.max())
    return e / e.sum()


def random_stream(seed: int, *parts: Hashable) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, *parts)``.

    The key is a keyed hash, so the stream for one scene never depends on
    which other scenes exist or in which order they are processed.
    """
    digest = hashlib.blake2b(digest_size=16, key=int(seed).to_bytes(8, "little"))
    for p in parts:
        digest.update(repr(p).encode("utf-8"))
        digest.update(b"\x00")
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest.digest(), "little")))


def _logsumexp(z: np.ndarray) -> float:
    m = z.max()
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.exp(z - m).sum()))


def _gumbel_top_k(logits: np.ndarray, k: int, rng: np.random.Generator):
    """Indices in draw order plus each pick's conditional probability."""
    n = logits.size
    k = min(k, n)
    if k == 0:
        return [], []
    keys = logits + rng.gumbel(size=n)
    order = np.argsort(-keys, kind="stable")[:k]

    # mass still available at draw j = never-drawn items + picks j..k-1
    untouched = np.ones(n, dtype=bool)
    untouched[order] = False
    rest = _logsumexp(logits[untouched]) if untouched.any() else -np.inf
    picked = logits[order]
    suffix = np.logaddexp.accumulate(np.append(picked, rest)[::-1])[::-1][:k]
    with np.errstate(invalid="ignore"):
        probs = np.where(np.isfinite(suffix), np.exp(picked - suffix), 0.0)
    return order.tolist(), probs.tolist()


def sample_without_replacement(pool: Sequence[Any], probs: Sequence[float], k: int,
                               stream: np.random.Generator) -> list[tuple[Any, float]]:
    """Draw ``min(k, len(pool))`` distinct items.

    Returns ``(item, probability_at_draw)`` pairs in draw order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pool) == 0:
        return []
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (len(pool),):
        raise ValueError("probs must align with pool")
    with np.errstate(divide="ignore"):
        logits = np.log(probs)
    idx, p = _gumbel_top_k(logits, k, stream)
    return [(pool[i], pi) for i, pi in zip(idx, p)]


@dataclass(frozen=True)
class Selection:
    agent_id: str
    probability: float


@dataclass(frozen=True)
class SelectionPlan:
    scene_id: str
    selected: tuple[Selection, ...] = ()
    pool_size: int = 0
    mode: str = "per_scene"
    tau: float | str = 0.5
    seed: int = 0
    skipped: bool = False

    def __post_init__(self):
        ids = [s.agent_id for s in self.selected]
        if len(ids) != len(set(ids)):
            raise ConsistencyError(f"scene {self.scene_id!r}: duplicate selection in plan")
        if len(ids) > self.pool_size:
            raise ConsistencyError(f"scene {self.scene_id!r}: more selections than pool members")

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(s.agent_id for s in self.selected)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "selected": [[s.agent_id, s.probability] for s in self.selected],
            "pool_size": self.pool_size,
            "skipped": self.skipped,
            "mode": self.mode,
            "tau": self.tau,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SelectionPlan":
        return cls(
            scene_id=d["scene_id"],
            selected=tuple(Selection(str(a), float(p)) for a, p in d["selected"]),
            pool_size=int(d["pool_size"]),
            mode=d.get("mode", "per_scene"),
            tau=d.get("tau", 0.5),
            seed=int(d.get("seed", 0)),
            skipped=bool(d.get("skipped", False)),
        )


def select_per_scene(scene, pool: Sequence[str], scores: Mapping, cfg: SamplingConfig,
                     ) -> SelectionPlan:
    """Draw ``min(n_s, |pool|)`` agents from one scene.

    ``scene`` may be a :class:`~trajaug.scenario.SceneRecord` or its id.
    """
    scene_id = getattr(scene, "scene_id", scene)
    pool = list(pool)
    if not pool:
        return SelectionPlan(scene_id, (), 0, "per_scene", cfg.tau, cfg.seed, skipped=True)
    logits = _logits([scores[a].h for a in pool], cfg.tau)
    idx, probs = _gumbel_top_k(logits, cfg.n_s, random_stream(cfg.seed, "scene", scene_id))
    return SelectionPlan(
        scene_id=scene_id,
        selected=tuple(Selection(pool[i], p) for i, p in zip(idx, probs)),
        pool_size=len(pool),
        mode="per_scene",
        tau=cfg.tau,
        seed=cfg.seed,
    )


def select_per_ego(corpus: Sequence[tuple[Any, Sequence[str], Mapping]],
                   cfg: SamplingConfig) -> list[SelectionPlan]:
    """One global softmax over every candidate in the corpus.

    Draws as many agents as there are scenes with a nonempty pool, without
    replacement across the whole corpus, so a scene may receive zero or
    several selections. Returns one plan per input scene, in input order;
    scenes without candidates come back marked ``skipped``.
    """
    scene_ids, flat, weights = [], [], []
    for scene, pool, scores in corpus:
        sid = getattr(scene, "scene_id", scene)
        scene_ids.append(sid)
        for a in pool:
            flat.append((sid, a))
            weights.append(scores[a].h)
    pool_sizes: dict[str, int] = {}
    for sid, _ in flat:
        pool_sizes[sid] = pool_sizes.get(sid, 0) + 1

    picks: dict[str, list[Selection]] = {sid: [] for sid in scene_ids}
    if flat:
        logits = _logits(weights, cfg.tau)
        n_draws = len(pool_sizes)
        idx, probs = _gumbel_top_k(logits, n_draws, random_stream(cfg.seed, "per_ego"))
        for i, p in zip(idx, probs):
            sid, aid = flat[i]
            picks[sid].append(Selection(aid, p))

    return [
        SelectionPlan(
            scene_id=sid,
            selected=tuple(picks[sid]),
            pool_size=pool_sizes.get(sid, 0),
            mode="per_ego",
            tau=cfg.tau,
            seed=cfg.seed,
            skipped=pool_sizes.get(sid, 0) == 0,
        )
        for sid in scene_ids
    ]
