"""Diagnostic artifacts: heading-deviation histogram and run summary."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConsistencyError
from .kinematics import heading_deviation_sum

HISTOGRAM_COLUMNS = ("bin_lo", "bin_hi", "base_count", "sampled_count")
SUMMARY_VERSION = 1


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts_base: np.ndarray
    counts_sampled: np.ndarray
    scale_hint: str = "log"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTOGRAM_COLUMNS)
        for k in range(len(self.counts_base)):
            w.writerow((repr(float(self.bin_edges[k])), repr(float(self.bin_edges[k + 1])),
                        int(self.counts_base[k]), int(self.counts_sampled[k])))
        return buf.getvalue()


def histogram_from_values(base_h: Sequence[float], sampled_h: Sequence[float], bins: int = 50,
                          scale_hint: str = "log") -> Histogram:
    """Bin both series on ``bins`` uniform bins spanning ``[0, max h]``."""
    if bins < 2:
        raise ValueError(f"histogram needs at least 2 bins, got {bins}")
    base = np.asarray(base_h, dtype=float)
    sampled = np.asarray(sampled_h, dtype=float)
    top = max(base.max(initial=0.0), sampled.max(initial=0.0))
    if top <= 0:
        top = 1.0
    edges = np.linspace(0.0, top, bins + 1)
    counts_base, _ = np.histogram(base, bins=edges)
    counts_sampled, _ = np.histogram(sampled, bins=edges)
    return Histogram(edges, counts_base, counts_sampled, scale_hint)


def heading_histogram(corpus, plans, bins: int = 50, cfg=None) -> Histogram:
    """Base series over every eligible agent, sampled series over plan members."""
    from .eligibility import FilterConfig, eligible_pool

    if bins < 2:
        raise ValueError(f"histogram needs at least 2 bins, got {bins}")
    cfg = cfg or FilterConfig()
    if not isinstance(plans, Mapping):
        plans = {p.scene_id: p for p in plans}
    base, sampled = [], []
    for scene in corpus:
        pool = eligible_pool(scene, cfg)
        h = {a: heading_deviation_sum(scene.track(a), scene.history_len) for a in pool}
        base.extend(h.values())
        plan = plans.get(scene.scene_id)
        if plan is None:
            continue
        for a in plan.agent_ids:
            if a not in h:
                h[a] = heading_deviation_sum(scene.track(a), scene.history_len)
            sampled.append(h[a])
    return histogram_from_values(base, sampled, bins)


def run_summary(n_in: int, n_out: int, plans: Iterable, *, eligible: int = 0, filtered: int = 0,
                rejections: Mapping[str, int] | None = None, config: Mapping | None = None,
                extra: Mapping | None = None) -> dict:
    """Counts, skip rate, rejection tallies and config echo for one run.

    Raises:
        ConsistencyError: if ``n_out`` is not ``n_in`` plus the number of selections.
    """
    plans = list(plans)
    selections = sum(len(p.selected) for p in plans)
    if n_out != n_in + selections:
        raise ConsistencyError(
            f"output has {n_out} scenes, expected {n_in} + {selections} = {n_in + selections}"
        )
    skipped = sum(1 for p in plans if p.skipped)
    rejections = dict(rejections or {})
    if rejections and sum(rejections.values()) != eligible - filtered:
        raise ConsistencyError("rejection tallies do not partition eligible minus filtered")
    summary = {
        "summary_version": SUMMARY_VERSION,
        "scenes_in": n_in,
        "scenes_out": n_out,
        "selections": selections,
        "scenes_skipped": skipped,
        "skip_rate": skipped / n_in if n_in else 0.0,
        "eligible_agents": eligible,
        "filtered_agents": filtered,
        "rejections": rejections,
    }
    if extra:
        summary.update(extra)
    summary["config"] = dict(config or {})
    return summary


def dump_summary(summary: Mapping) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
