import csv
import dataclasses
import json
import subprocess
import sys

import orjson
import pytest

from trajaug.cli import main
from trajaug.config import RunConfig, with_overrides
from trajaug.corpus import read_corpus, write_corpus
from trajaug.errors import ConfigError, DataError
from trajaug.pipeline import (
    CORPUS_FILE,
    HISTOGRAM_FILE,
    PLANS_FILE,
    SCORES_FILE,
    SUMMARY_FILE,
    load_plans,
    run_augment,
)
from trajaug.synthetic import PRESETS, gen_synthetic

OUTPUTS = (CORPUS_FILE, PLANS_FILE, SCORES_FILE, HISTOGRAM_FILE, SUMMARY_FILE)


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("in") / "corpus.jsonl"
    write_corpus(path, gen_synthetic(dataclasses.replace(PRESETS["default"], n_scenes=40), 3))
    return path


def run(corpus_path, out, **kw):
    cfg = with_overrides(RunConfig(), input=str(corpus_path), output=str(out), **kw)
    return run_augment(cfg)


def outputs(d):
    return {name: (d / name).read_bytes() for name in OUTPUTS}


def test_output_count_and_provenance(corpus_path, tmp_path):
    res = run(corpus_path, tmp_path / "o", n_s=2, seed=1)
    s = res.summary
    scenes = list(read_corpus(tmp_path / "o" / CORPUS_FILE))
    assert s["scenes_in"] == 40 and len(scenes) == s["scenes_out"] == 40 + s["selections"]
    originals = [x for x in scenes if x.provenance.kind == "original"]
    augmented = [x for x in scenes if x.provenance.kind == "augmented"]
    assert [x.scene_id for x in originals] == [x.scene_id for x in read_corpus(corpus_path)]
    plans = load_plans(tmp_path / "o" / PLANS_FILE)
    expected = [f"{p.scene_id}#{a}" for p in plans.values() for a in p.agent_ids]
    assert [x.scene_id for x in augmented] == expected
    assert all(len(p.selected) <= 2 for p in plans.values())


def test_scores_and_histogram_consistent(corpus_path, tmp_path):
    res = run(corpus_path, tmp_path / "o")
    rows = list(csv.DictReader((tmp_path / "o" / SCORES_FILE).open()))
    assert len(rows) == res.summary["eligible_agents"]
    hist = list(csv.DictReader((tmp_path / "o" / HISTOGRAM_FILE).open()))
    assert sum(int(r["base_count"]) for r in hist) == len(rows)
    assert sum(int(r["sampled_count"]) for r in hist) == res.summary["selections"]
    summary = json.loads((tmp_path / "o" / SUMMARY_FILE).read_text())
    assert summary == res.summary


def test_replay_byte_identical(corpus_path, tmp_path):
    run(corpus_path, tmp_path / "a", seed=9, n_s=2)
    run(corpus_path, tmp_path / "b", seed=1234, n_s=2,
        replay_plan=str(tmp_path / "a" / PLANS_FILE))
    a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    assert a[CORPUS_FILE] == b[CORPUS_FILE]
    assert a[PLANS_FILE] == b[PLANS_FILE]


def test_replay_unknown_scene_rejected(corpus_path, tmp_path):
    run(corpus_path, tmp_path / "a")
    plans = (tmp_path / "a" / PLANS_FILE).read_bytes().splitlines()
    rec = orjson.loads(plans[0])
    rec["scene_id"] = "not-in-corpus"
    (tmp_path / "p.jsonl").write_bytes(b"\n".join(plans + [orjson.dumps(rec)]) + b"\n")
    with pytest.raises(DataError):
        run(corpus_path, tmp_path / "b", replay_plan=str(tmp_path / "p.jsonl"))
    assert not (tmp_path / "b" / CORPUS_FILE).exists()


@pytest.mark.parametrize("mode", ["per_scene", "per_ego"])
def test_workers_do_not_change_bytes(corpus_path, tmp_path, mode):
    base = None
    for w in (1, 2, 8):
        run(corpus_path, tmp_path / f"w{w}", workers=w, mode=mode, seed=5)
        got = outputs(tmp_path / f"w{w}")
        base = base or got
        assert got == base


def test_per_ego_draws(corpus_path, tmp_path):
    res = run(corpus_path, tmp_path / "o", mode="per_ego")
    nonempty = 40 - res.summary["scenes_skipped"]
    assert res.summary["selections"] == nonempty


def test_uniform_and_filters(corpus_path, tmp_path):
    res = run(corpus_path, tmp_path / "o", tau="uniform", filters="disp,comf,ttc")
    s = res.summary
    assert s["config"]["sampling"]["tau"] == "uniform"
    assert s["filtered_agents"] + sum(s["rejections"].values()) == s["eligible_agents"]


def test_lenient_skips_bad_scene(corpus_path, tmp_path):
    lines = corpus_path.read_bytes().splitlines(keepends=True)
    bad = tmp_path / "bad.jsonl"
    bad.write_bytes(b"".join(lines[:5] + [b"{oops\n"] + lines[5:]))
    with pytest.raises(DataError):
        run(bad, tmp_path / "strict")
    assert not (tmp_path / "strict" / CORPUS_FILE).exists()
    res = run(bad, tmp_path / "lenient", strict=False)
    assert res.summary["scenes_in"] == 40 and res.summary["scenes_invalid"] == 1


def test_mixed_horizons_abort(tmp_path):
    a = list(gen_synthetic(dataclasses.replace(PRESETS["default"], n_scenes=2), 0))
    b = list(gen_synthetic(dataclasses.replace(PRESETS["default"], n_scenes=1,
                                               history_len=11, scene_prefix="b"), 0))
    write_corpus(tmp_path / "c.jsonl", a + b)
    with pytest.raises(DataError, match="horizons"):
        run(tmp_path / "c.jsonl", tmp_path / "o")


def test_empty_corpus(tmp_path):
    write_corpus(tmp_path / "e.jsonl", [])
    res = run(tmp_path / "e.jsonl", tmp_path / "o")
    assert res.summary["scenes_in"] == res.summary["scenes_out"] == 0
    assert list(read_corpus(tmp_path / "o" / CORPUS_FILE)) == []


def test_missing_io_is_config_error():
    with pytest.raises(ConfigError):
        run_augment(RunConfig())


# --- CLI -------------------------------------------------------------------


def test_cli_bad_tau_exits_2_without_io(corpus_path, tmp_path, capsys):
    out = tmp_path / "never"
    for tau in ("0", "-1", "hot"):
        rc = main(["augment", "--input", str(corpus_path), "--output", str(out), "--tau", tau])
        assert rc == 2
    assert not out.exists()
    assert "[config]" in capsys.readouterr().err


def test_cli_exit_codes(corpus_path, tmp_path, capsys):
    assert main(["augment", "--input", str(tmp_path / "missing.jsonl"),
                 "--output", str(tmp_path / "o")]) == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_bytes(corpus_path.read_bytes() + b"{oops\n")
    assert main(["augment", "--input", str(bad), "--output", str(tmp_path / "o")]) == 3
    assert main(["validate", "--input", str(bad), "--quiet"]) == 3
    assert main(["validate", "--input", str(corpus_path)]) == 0
    assert "40 valid scenes" in capsys.readouterr().out


def test_cli_augment_then_stats(corpus_path, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["augment", "--input", str(corpus_path), "--output", str(out),
                 "--ns", "2", "--mode", "per-scene", "--seed", "3"]) == 0
    assert "40 scenes in" in capsys.readouterr().out
    hist = tmp_path / "h.csv"
    assert main(["stats", "histogram", "--input", str(corpus_path),
                 "--plans", str(out / PLANS_FILE), "--output", str(hist)]) == 0
    assert hist.read_text() == (out / HISTOGRAM_FILE).read_text()
    assert main(["stats", "violations", "--input", str(corpus_path),
                 "--output", str(tmp_path / "v.csv"), "--json", str(tmp_path / "v.json")]) == 0
    agg = json.loads((tmp_path / "v.json").read_text())
    assert agg


def test_cli_gen_synthetic(tmp_path):
    path = tmp_path / "g.jsonl"
    assert main(["gen-synthetic", "--output", str(path), "--preset", "low_h", "--scenes", "4",
                 "--ramps", "1", "--seed", "2"]) == 0
    scenes = list(read_corpus(path))
    assert len(scenes) == 4
    kinds = {t["kind"] for t in scenes[0].context["truth"].values()}
    assert "ramp" in kinds


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "trajaug", "gen-synthetic", "--output",
                           str(tmp_path / "g.jsonl"), "--scenes", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "trajaug", "augment", "--input",
                           str(tmp_path / "g.jsonl"), "--output", str(tmp_path / "o"),
                           "--workers", "0"], capture_output=True, text=True)
    assert proc.returncode == 2
