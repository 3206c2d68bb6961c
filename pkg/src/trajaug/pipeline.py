"""End-to-end augmentation run: validate, score, filter, sample, transform, report.

Scenes are processed independently (optionally in worker processes) and
results are emitted in input order, so outputs never depend on the worker
count. Only one batch of scenes is held in memory at a time. Per-ego
sampling is the exception: its global draw needs a gather pass over the
candidate scores of the whole corpus before any scene can be transformed.

Output directory layout::

    corpus.jsonl    original scenes, then augmented scenes
    plans.jsonl     one SelectionPlan per input scene
    scores.csv      every eligible candidate with its metrics and verdict
    histogram.csv   heading-deviation histogram, base vs sampled
    summary.json    counts, skip rate, rejection tallies, config echo
"""

from __future__ import annotations

import contextlib
import csv
import io
import logging
import multiprocessing
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import orjson

from .config import RunConfig
from .corpus import AtomicWriter, CorpusReader, dumps_scene, parse_scene, write_text_atomic
from .eligibility import (
    FILTER_ORDER,
    CandidateScore,
    eligible_pool,
    filtered_pool,
    mark_verdicts,
    rejection_reason,
    score_candidates,
)
from .errors import AugmentError, ConfigError, ConsistencyError, CorpusFormatError, CorpusIOError, DataError
from .sampler import SelectionPlan, select_per_ego, select_per_scene
from .scenario import SceneRecord
from .stats import dump_summary, histogram_from_values, run_summary
from .transform import augment_scene

log = logging.getLogger(__name__)

CORPUS_FILE = "corpus.jsonl"
PLANS_FILE = "plans.jsonl"
SCORES_FILE = "scores.csv"
HISTOGRAM_FILE = "histogram.csv"
SUMMARY_FILE = "summary.json"
SCORE_COLUMNS = ("scene_id", "agent_id", "h", "d", "v_comf", "v_ttc", "eligible", "passes_filters")

BATCH_PER_WORKER = 32


@dataclass
class SceneEvaluation:
    eligible: tuple[str, ...]
    scores: dict[str, CandidateScore]
    candidates: tuple[str, ...]
    rejections: dict[str, int]


def evaluate_scene(scene: SceneRecord, cfg: RunConfig) -> SceneEvaluation:
    """Eligibility, scores, filter verdicts and the final sampling pool of one scene."""
    pool = eligible_pool(scene, cfg.filters)
    scores = score_candidates(scene, pool, cfg.comfort, cfg.ttc)
    survivors = filtered_pool(scene, pool, scores, cfg.filters)
    scores = mark_verdicts(scores, survivors)
    rejections = dict.fromkeys(FILTER_ORDER, 0)
    for a in pool:
        reason = rejection_reason(scores[a], cfg.filters)
        if reason:
            rejections[reason] += 1
    # history_only eligibility may admit agents that cannot become an ego
    candidates = tuple(a for a in survivors if scene.track(a).observed.all())
    return SceneEvaluation(pool, scores, candidates, rejections)


@dataclass
class SceneOutcome:
    lineno: int
    scene_id: str = ""
    horizon: tuple[int, int] = (0, 0)
    original: bytes = b""
    augmented: list[bytes] = field(default_factory=list)
    plan: SelectionPlan | None = None
    evaluation: SceneEvaluation | None = None
    error: tuple[str, str, bool] | None = None  # (stage, message, is_validation)


_WORKER_CFG: RunConfig | None = None
_WORKER_REPLAY: dict[str, SelectionPlan] | None = None


def _init_worker(cfg: RunConfig, replay=None) -> None:
    global _WORKER_CFG, _WORKER_REPLAY
    _WORKER_CFG = cfg
    _WORKER_REPLAY = replay


def _process(task) -> SceneOutcome:
    """Worker body. ``task = (lineno, line, mode, plan)`` with mode in
    ``{"sample", "replay", "evaluate", "transform"}``."""
    lineno, line, mode, plan = task
    cfg = _WORKER_CFG
    out = SceneOutcome(lineno)
    stage = "validate"
    try:
        scene = parse_scene(line, lineno)
        out.scene_id = scene.scene_id
        out.horizon = (scene.history_len, scene.future_len)
        if mode != "transform":
            out.original = dumps_scene(scene)
            stage = "score"
            out.evaluation = evaluate_scene(scene, cfg)
        if mode == "sample":
            stage = "sample"
            ev = out.evaluation
            plan = select_per_scene(scene, ev.candidates, ev.scores, cfg.sampling)
        elif mode == "replay":
            stage = "sample"
            plan = _WORKER_REPLAY.get(scene.scene_id)
            if plan is None:
                raise ConsistencyError(f"replay plan has no entry for scene {scene.scene_id!r}")
        if plan is not None and mode != "evaluate":
            stage = "transform"
            out.plan = plan
            out.augmented = [
                dumps_scene(s) for s in augment_scene(scene, plan, cfg.keep_original_ego)
            ]
    except AugmentError as exc:
        out.error = (stage, str(exc), isinstance(exc, CorpusFormatError))
    return out


class _Executor:
    def __init__(self, cfg: RunConfig, replay=None):
        self.cfg = cfg
        self.pool = None
        if cfg.workers > 1:
            self.pool = multiprocessing.get_context("fork").Pool(
                cfg.workers, initializer=_init_worker, initargs=(cfg, replay)
            )
        else:
            _init_worker(cfg, replay)

    def map(self, tasks: Iterable, batch: int) -> Iterator[SceneOutcome]:
        chunk = []
        for task in tasks:
            chunk.append(task)
            if len(chunk) >= batch:
                yield from self._run(chunk)
                chunk = []
        if chunk:
            yield from self._run(chunk)

    def _run(self, chunk):
        if self.pool is None:
            return [_process(t) for t in chunk]
        return self.pool.map(_process, chunk, chunksize=max(1, len(chunk) // (4 * self.cfg.workers)))

    def close(self):
        if self.pool is not None:
            self.pool.close()
            self.pool.join()


@dataclass
class RunResult:
    status: int
    summary: dict
    output_dir: Path | None = None


def load_plans(path) -> dict[str, SelectionPlan]:
    plans: dict[str, SelectionPlan] = {}
    try:
        with open(path, "rb") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    plan = SelectionPlan.from_dict(orjson.loads(line))
                except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise CorpusFormatError(f"bad plan record: {exc}", lineno) from None
                if plan.scene_id in plans:
                    raise ConsistencyError(f"plan file lists scene {plan.scene_id!r} twice")
                plans[plan.scene_id] = plan
    except OSError as exc:
        raise CorpusIOError(path, exc) from None
    return plans


def _plan_line(plan: SelectionPlan) -> bytes:
    return plan.to_json().encode("utf-8") + b"\n"


def _score_rows(scene_id: str, ev: SceneEvaluation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for a in ev.eligible:
        s = ev.scores[a]
        w.writerow((scene_id, a, repr(s.h), repr(s.d), s.v_comf, s.v_ttc, int(s.eligible),
                    int(s.passes_filters)))
    return buf.getvalue()


class _Run:
    """State of one augment invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.horizon: tuple[int, int] | None = None
        self.n_in = 0
        self.n_out = 0
        self.invalid = 0
        self.eligible = 0
        self.filtered = 0
        self.rejections = dict.fromkeys(FILTER_ORDER, 0)
        self.base_h: list[float] = []
        self.sampled_h: list[float] = []
        self.plans: list[SelectionPlan] = []

    def check(self, o: SceneOutcome) -> bool:
        """Raise on fatal errors; return False for a leniently skipped scene."""
        if o.error is not None:
            stage, message, is_validation = o.error
            if is_validation and not self.cfg.strict:
                self.invalid += 1
                log.warning("skipping scene: %s", message)
                return False
            exc = DataError(message if is_validation else f"line {o.lineno}: {message}")
            exc.stage = stage
            raise exc
        if self.horizon is None:
            self.horizon = o.horizon
        elif o.horizon != self.horizon:
            exc = DataError(
                f"line {o.lineno}: scene {o.scene_id!r} has horizons (T_H, T_F)={o.horizon}, "
                f"run requires {self.horizon}"
            )
            exc.stage = "validate"
            raise exc
        return True

    def record(self, o: SceneOutcome, scores_out) -> None:
        ev = o.evaluation
        self.n_in += 1
        self.eligible += len(ev.eligible)
        self.filtered += sum(1 for s in ev.scores.values() if s.passes_filters)
        for k, v in ev.rejections.items():
            self.rejections[k] += v
        self.base_h.extend(ev.scores[a].h for a in ev.eligible)
        scores_out.write(_score_rows(o.scene_id, ev).encode("utf-8"))

    def record_plan(self, plan: SelectionPlan, ev: SceneEvaluation, plans_out) -> None:
        self.plans.append(plan)
        for a in plan.agent_ids:
            if a in ev.scores:
                self.sampled_h.append(ev.scores[a].h)
        plans_out.write(_plan_line(plan))


def _tasks(reader: CorpusReader, mode: str) -> Iterator[tuple]:
    for lineno, line in reader.lines():
        yield lineno, line, mode, None


def run_augment(cfg: RunConfig) -> RunResult:
    """Execute the full pipeline described by ``cfg``.

    Errors propagate as :class:`~trajaug.errors.AugmentError` subclasses with
    ``stage`` set; nothing is written to the output directory unless the run
    completes.
    """
    if not cfg.io.input or not cfg.io.output:
        raise ConfigError("both io.input and io.output are required")
    out_dir = Path(cfg.io.output)
    reader = CorpusReader(cfg.io.input, strict=cfg.strict)
    replay = load_plans(cfg.io.replay_plan) if cfg.io.replay_plan else None

    run = _Run(cfg)
    executor = _Executor(cfg, replay)
    batch = BATCH_PER_WORKER * cfg.workers
    header = dict(reader.header)
    try:
        with contextlib.ExitStack() as stack:
            corpus_out = stack.enter_context(AtomicWriter(out_dir / CORPUS_FILE))
            plans_out = stack.enter_context(AtomicWriter(out_dir / PLANS_FILE))
            scores_out = stack.enter_context(AtomicWriter(out_dir / SCORES_FILE))
            spool = stack.enter_context(tempfile.TemporaryFile(dir=out_dir))
            corpus_out.write(orjson.dumps(header, option=orjson.OPT_SORT_KEYS) + b"\n")
            scores_out.write((",".join(SCORE_COLUMNS) + "\n").encode())

            if replay is not None:
                _run_replay(run, executor, reader, replay, batch, corpus_out, plans_out,
                            scores_out, spool)
            elif cfg.sampling.mode == "per_ego":
                _run_per_ego(run, executor, reader, batch, corpus_out, plans_out, scores_out,
                             spool)
            else:
                _run_per_scene(run, executor, reader, batch, corpus_out, plans_out, scores_out,
                               spool)

            spool.seek(0)
            shutil.copyfileobj(spool, corpus_out.fh)
            run.n_out = run.n_in + sum(len(p.selected) for p in run.plans)

            summary = run_summary(
                run.n_in, run.n_out, run.plans,
                eligible=run.eligible, filtered=run.filtered, rejections=run.rejections,
                config=cfg.echo(),
                extra={"scenes_invalid": run.invalid, "mode": cfg.sampling.mode,
                       "history_len": run.horizon[0] if run.horizon else None,
                       "future_len": run.horizon[1] if run.horizon else None},
            )
            hist = histogram_from_values(run.base_h, run.sampled_h, cfg.histogram_bins)
    except OSError as exc:
        if isinstance(exc, AugmentError):
            raise
        raise CorpusIOError(out_dir, exc) from None
    finally:
        executor.close()

    write_text_atomic(out_dir / HISTOGRAM_FILE, hist.to_csv())
    write_text_atomic(out_dir / SUMMARY_FILE, dump_summary(summary))
    return RunResult(0, summary, out_dir)


def _run_per_scene(run, executor, reader, batch, corpus_out, plans_out, scores_out, spool):
    for o in executor.map(_tasks(reader, "sample"), batch):
        if not run.check(o):
            continue
        run.record(o, scores_out)
        corpus_out.write(o.original + b"\n")
        for blob in o.augmented:
            spool.write(blob + b"\n")
        run.record_plan(o.plan, o.evaluation, plans_out)


def _run_replay(run, executor, reader, replay, batch, corpus_out, plans_out, scores_out, spool):
    seen = set()
    for o in executor.map(_tasks(reader, "replay"), batch):
        if not run.check(o):
            continue
        seen.add(o.scene_id)
        run.record(o, scores_out)
        corpus_out.write(o.original + b"\n")
        for blob in o.augmented:
            spool.write(blob + b"\n")
        run.record_plan(o.plan, o.evaluation, plans_out)
    extra = sorted(set(replay) - seen)
    if extra:
        exc = ConsistencyError(f"replay plan references scenes not in the corpus: {extra[:5]}")
        exc.stage = "sample"
        raise exc


def _run_per_ego(run, executor, reader, batch, corpus_out, plans_out, scores_out, spool):
    gathered = []
    evaluations = {}
    line_of = {}
    for o in executor.map(_tasks(reader, "evaluate"), batch):
        if not run.check(o):
            continue
        run.record(o, scores_out)
        corpus_out.write(o.original + b"\n")
        ev = o.evaluation
        # keep only what the global draw needs
        kept = {a: ev.scores[a] for a in ev.candidates}
        evaluations[o.scene_id] = SceneEvaluation((), kept, ev.candidates, {})
        gathered.append((o.scene_id, ev.candidates, kept))
        line_of[o.lineno] = o.scene_id

    plans = {p.scene_id: p for p in select_per_ego(gathered, run.cfg.sampling)}
    for sid, _, _ in gathered:
        run.record_plan(plans[sid], evaluations[sid], plans_out)

    def transform_tasks():
        for lineno, line in reader.lines():
            plan = plans.get(line_of.get(lineno))
            if plan is not None and plan.selected:
                yield lineno, line, "transform", plan

    for o in executor.map(transform_tasks(), batch):
        if o.error is not None:
            run.check(o)
        for blob in o.augmented:
            spool.write(blob + b"\n")
