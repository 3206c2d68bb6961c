"""JSON-lines corpus format.

Line 1 is a header object; every later line is one scene::

    {"format": "trajaug-corpus", "format_version": 1, "dt": 0.1, "T_H": 21, "T_F": 80, "tags": {}}
    {"scene_id": ..., "dt": ..., "history_len": ..., "future_len": ...,
     "ego": TRACK, "agents": [TRACK, ...],
     "obstacles": [{"x", "y", "heading", "length", "width"}, ...],
     "drivable": {"polygons": [[[x, y], ...], ...], "polylines": [[[x, y], ...], ...]},
     "context": {...}, "provenance": {"kind": "original"}}

    TRACK = {"id", "category", "x": [...], "y": [...], "heading": [...],
             "vx": [...], "vy": [...], "length", "width", "observed"}

``length``, ``width`` and ``observed`` are either a per-step array or a single
value shared by every step; the writer emits the scalar form when all steps
agree. Floats are written in shortest round-trip form, so reading a written
file reproduces every value exactly. Header ``dt``/``T_H``/``T_F`` are null for
heterogeneous corpora.
"""

from __future__ import annotations

import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np
import orjson

from .errors import CorpusFormatError, CorpusIOError, SceneValidationError
from .scenario import AgentTrack, DrivableMap, Obstacle, Provenance, SceneRecord, validate_scene

log = logging.getLogger(__name__)

FORMAT_NAME = "trajaug-corpus"
FORMAT_VERSION = 1
_DUMP_OPTS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_SORT_KEYS


# --- encoding ---------------------------------------------------------------


def _compact(values: np.ndarray):
    if values.size and (values == values[0]).all():
        return values[0].item()
    return np.ascontiguousarray(values)


def track_to_dict(track: AgentTrack) -> dict:
    return {
        "id": track.agent_id,
        "category": track.category.value,
        "x": np.ascontiguousarray(track.position[:, 0]),
        "y": np.ascontiguousarray(track.position[:, 1]),
        "heading": track.heading,
        "vx": np.ascontiguousarray(track.velocity[:, 0]),
        "vy": np.ascontiguousarray(track.velocity[:, 1]),
        "length": _compact(track.bbox[:, 0]),
        "width": _compact(track.bbox[:, 1]),
        "observed": _compact(track.observed),
    }


def scene_to_dict(scene: SceneRecord) -> dict:
    prov: dict[str, Any] = {"kind": scene.provenance.kind}
    if scene.provenance.kind == "augmented":
        prov["source_scene_id"] = scene.provenance.source_scene_id
        prov["source_agent_id"] = scene.provenance.source_agent_id
    return {
        "scene_id": scene.scene_id,
        "dt": scene.dt,
        "history_len": scene.history_len,
        "future_len": scene.future_len,
        "ego": track_to_dict(scene.ego),
        "agents": [track_to_dict(a) for a in scene.agents],
        "obstacles": [
            {"x": o.position[0], "y": o.position[1], "heading": o.heading,
             "length": o.bbox[0], "width": o.bbox[1]}
            for o in scene.obstacles
        ],
        "drivable": {
            "polygons": [np.ascontiguousarray(p) for p in scene.drivable.polygons],
            "polylines": [np.ascontiguousarray(p) for p in scene.drivable.polylines],
        },
        "context": scene.context,
        "provenance": prov,
    }


def dumps_scene(scene: SceneRecord) -> bytes:
    return orjson.dumps(scene_to_dict(scene), option=_DUMP_OPTS)


# --- decoding ---------------------------------------------------------------


def _per_step(value, n: int, dtype) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if arr.ndim == 0:
        return np.full(n, arr, dtype=dtype)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {arr.shape}")
    return arr


def _points(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected a list of [x, y] points, got shape {arr.shape}")
    return arr


def track_from_dict(d: Mapping) -> AgentTrack:
    heading = np.asarray(d["heading"], dtype=float)
    n = heading.shape[0]
    x = _per_step(d["x"], n, float)
    y = _per_step(d["y"], n, float)
    vx = _per_step(d["vx"], n, float)
    vy = _per_step(d["vy"], n, float)
    return AgentTrack(
        agent_id=d["id"],
        category=d["category"],
        position=np.column_stack([x, y]),
        heading=heading,
        velocity=np.column_stack([vx, vy]),
        bbox=np.column_stack([_per_step(d["length"], n, float), _per_step(d["width"], n, float)]),
        observed=_per_step(d["observed"], n, bool),
    )


def scene_from_dict(d: Mapping) -> SceneRecord:
    prov = d.get("provenance") or {"kind": "original"}
    drivable = d.get("drivable") or {}
    return SceneRecord(
        scene_id=d["scene_id"],
        dt=float(d["dt"]),
        history_len=int(d["history_len"]),
        future_len=int(d["future_len"]),
        ego=track_from_dict(d["ego"]),
        agents=tuple(track_from_dict(a) for a in d.get("agents", ())),
        obstacles=tuple(
            Obstacle((float(o["x"]), float(o["y"])), float(o["heading"]),
                     (float(o["length"]), float(o["width"])))
            for o in d.get("obstacles", ())
        ),
        drivable=DrivableMap(
            polygons=tuple(_points(p) for p in drivable.get("polygons", ())),
            polylines=tuple(_points(p) for p in drivable.get("polylines", ())),
        ),
        context=d.get("context") or {},
        provenance=Provenance(
            prov.get("kind", "original"), prov.get("source_scene_id"), prov.get("source_agent_id")
        ),
    )


def parse_scene(line: bytes | str, lineno: int | None = None, validate: bool = True) -> SceneRecord:
    """Decode one scene line; raises :class:`CorpusFormatError` citing ``lineno``."""
    try:
        scene = scene_from_dict(orjson.loads(line))
    except orjson.JSONDecodeError as exc:
        raise CorpusFormatError(f"malformed JSON ({exc})", lineno) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"bad scene record ({type(exc).__name__}: {exc})", lineno) from None
    if validate:
        report = validate_scene(scene)
        if report:
            raise SceneValidationError(scene.scene_id, report, lineno)
    return scene


def make_header(dt=None, history_len=None, future_len=None, tags: Mapping | None = None) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "dt": dt,
        "T_H": history_len,
        "T_F": future_len,
        "tags": dict(tags or {}),
    }


def parse_header(line: bytes | str) -> dict:
    try:
        header = orjson.loads(line)
    except orjson.JSONDecodeError as exc:
        raise CorpusFormatError(f"malformed header ({exc})", 1) from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise CorpusFormatError("missing corpus header", 1)
    if header.get("format_version") != FORMAT_VERSION:
        raise CorpusFormatError(
            f"unsupported format_version {header.get('format_version')!r} "
            f"(expected {FORMAT_VERSION})", 1
        )
    return header


# --- streaming reader / writer ----------------------------------------------


class CorpusReader:
    """Lazy iterator over the scenes of a corpus file.

    In strict mode the first invalid scene raises; in lenient mode invalid
    scenes are skipped and counted in :attr:`skipped`.
    """

    def __init__(self, path, strict: bool = True, validate: bool = True):
        self.path = Path(path)
        self.strict = strict
        self.validate = validate
        self.skipped = 0
        try:
            with open(self.path, "rb") as fh:
                first = fh.readline()
        except OSError as exc:
            raise CorpusIOError(self.path, exc) from None
        if not first.strip():
            raise CorpusFormatError("missing corpus header", 1)
        self.header = parse_header(first)

    def lines(self) -> Iterator[tuple[int, bytes]]:
        """Raw ``(line_number, bytes)`` scene lines, blank lines skipped."""
        try:
            with open(self.path, "rb") as fh:
                fh.readline()
                for lineno, line in enumerate(fh, start=2):
                    if line.strip():
                        yield lineno, line
        except OSError as exc:
            raise CorpusIOError(self.path, exc) from None

    def __iter__(self) -> Iterator[SceneRecord]:
        for lineno, line in self.lines():
            try:
                yield parse_scene(line, lineno, self.validate)
            except CorpusFormatError as exc:
                if self.strict:
                    raise
                self.skipped += 1
                log.warning("skipping scene: %s", exc)
        if self.skipped:
            log.warning("%s: skipped %d invalid scenes", self.path, self.skipped)


def read_corpus(path, strict: bool = True) -> CorpusReader:
    return CorpusReader(path, strict=strict)


class AtomicWriter:
    """Binary file handle that only appears at ``path`` after a clean close."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent)
        except OSError as exc:
            raise CorpusIOError(self.path, exc) from None
        self.tmp = Path(tmp)
        self.fh = os.fdopen(fd, "wb")

    def write(self, data: bytes) -> None:
        try:
            self.fh.write(data)
        except OSError as exc:
            self.abort()
            raise CorpusIOError(self.path, exc) from None

    def commit(self) -> None:
        try:
            self.fh.close()
            os.chmod(self.tmp, 0o644)
            os.replace(self.tmp, self.path)
        except OSError as exc:
            self.abort()
            raise CorpusIOError(self.path, exc) from None

    def abort(self) -> None:
        try:
            self.fh.close()
        finally:
            self.tmp.unlink(missing_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False


def header_for(scene: SceneRecord | None, tags: Mapping | None = None) -> dict:
    if scene is None:
        return make_header(tags=tags)
    return make_header(scene.dt, scene.history_len, scene.future_len, tags)


def write_corpus(path, scenes: Iterable[SceneRecord], header: Mapping | None = None) -> int:
    """Write ``scenes`` atomically; returns the number of scenes written.

    Without an explicit ``header`` the first scene's timing is used.
    """
    it = iter(scenes)
    first = next(it, None)
    if header is None:
        header = header_for(first)
    count = 0
    with AtomicWriter(path) as out:
        out.write(orjson.dumps(dict(header), option=orjson.OPT_SORT_KEYS) + b"\n")
        if first is not None:
            out.write(dumps_scene(first) + b"\n")
            count = 1
        for scene in it:
            out.write(dumps_scene(scene) + b"\n")
            count += 1
    return count


def write_text_atomic(path, text: str) -> None:
    with AtomicWriter(path) as out:
        out.write(text.encode("utf-8"))
