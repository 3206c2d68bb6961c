"""Command-line entry point: ``trajaug <command> ...``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 io error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import RunConfig, load_config, with_overrides
from .corpus import CorpusReader, header_for, write_corpus, write_text_atomic
from .errors import AugmentError, ConfigError, CorpusIOError
from .stats import heading_histogram
from .synthetic import PRESETS, gen_synthetic

log = logging.getLogger("trajaug")


def _mode(value: str) -> str:
    return value.replace("-", "_")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--radius", type=float, help="eligibility radius around the ego (m)")
    p.add_argument("--filters", help="comma-separated subset of disp,comf,ttc (or 'none')")
    p.add_argument("--lenient", action="store_true", help="skip invalid scenes instead of aborting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajaug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="select agents and write the augmented corpus")
    p.add_argument("--input", help="input corpus (.jsonl)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", help="softmax temperature, or 'uniform'")
    p.add_argument("--ns", type=int, dest="n_s", help="selections per scene")
    p.add_argument("--mode", type=_mode, choices=("per_scene", "per_ego"),
                   metavar="{per-scene,per-ego}")
    p.add_argument("--replay-plan", help="plans.jsonl from a previous run to apply verbatim")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    _add_common(p)

    stats = sub.add_parser("stats", help="diagnostic reports").add_subparsers(
        dest="stats_command", required=True)
    h = stats.add_parser("histogram", help="heading-deviation histogram, base vs sampled")
    h.add_argument("--input", required=True)
    h.add_argument("--plans", help="plans.jsonl; omitted means an empty sampled series")
    h.add_argument("--bins", type=int)
    h.add_argument("--output", help="CSV path (default stdout)")
    _add_common(h)
    v = stats.add_parser("violations", help="ego vs other-agent TTC and comfort violations")
    v.add_argument("--input", required=True)
    v.add_argument("--output", help="CSV path for per-agent rows (default stdout)")
    v.add_argument("--json", dest="json_out", help="write aggregates as JSON here")
    _add_common(v)

    val = sub.add_parser("validate", help="check every scene of a corpus")
    val.add_argument("--input", required=True)
    val.add_argument("--quiet", action="store_true")

    g = sub.add_parser("gen-synthetic", help="write a synthetic corpus with ground-truth labels")
    g.add_argument("--output", required=True)
    g.add_argument("--preset", choices=sorted(PRESETS), default="default")
    g.add_argument("--scenes", type=int, dest="n_scenes")
    g.add_argument("--seed", type=int, default=0)
    for f in dataclasses.fields(PRESETS["default"]):
        if f.name.startswith("n_") and f.name != "n_scenes":
            g.add_argument("--" + f.name[2:].replace("_", "-"), type=int, dest=f.name)
    g.add_argument("--history-len", type=int)
    g.add_argument("--future-len", type=int)
    g.add_argument("--ego-stationary", action="store_true", default=None)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return with_overrides(
        cfg,
        radius=getattr(args, "radius", None),
        filters=getattr(args, "filters", None),
        strict=False if getattr(args, "lenient", False) else None,
    )


def cmd_augment(args) -> int:
    from .pipeline import run_augment

    cfg = with_overrides(
        _config(args),
        tau=args.tau, n_s=args.n_s, mode=args.mode, seed=args.seed,
        input=args.input, output=args.output, replay_plan=args.replay_plan, workers=args.workers,
    )
    result = run_augment(cfg)
    s = result.summary
    print(f"augment: {s['scenes_in']} scenes in, {s['scenes_out']} out, "
          f"{s['selections']} selections, skip rate {s['skip_rate']:.1%} -> {result.output_dir}")
    return result.status


def _emit(text: str, path) -> None:
    if path:
        write_text_atomic(path, text)
    else:
        sys.stdout.write(text)


def cmd_histogram(args) -> int:
    from .pipeline import load_plans

    cfg = _config(args)
    plans = load_plans(args.plans) if args.plans else {}
    corpus = CorpusReader(args.input, strict=cfg.strict)
    hist = heading_histogram(corpus, plans, args.bins or cfg.histogram_bins, cfg.filters)
    _emit(hist.to_csv(), args.output)
    return 0


def cmd_violations(args) -> int:
    from .interaction import ego_vs_others_report

    cfg = _config(args)
    corpus = CorpusReader(args.input, strict=cfg.strict)
    report = ego_vs_others_report(corpus, cfg.comfort, cfg.ttc, cfg.filters)
    _emit(report.to_csv(), args.output)
    if args.json_out:
        write_text_atomic(args.json_out, report.to_json())
    else:
        agg = report.aggregates
        print(json.dumps(agg, sort_keys=True), file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    reader = CorpusReader(args.input, strict=False)
    n_ok = 0
    for _ in reader:
        n_ok += 1
    if not args.quiet:
        print(f"{args.input}: {n_ok} valid scenes, {reader.skipped} invalid")
    return 3 if reader.skipped else 0


def cmd_gen_synthetic(args) -> int:
    overrides = {
        k: v for k, v in vars(args).items()
        if v is not None and (k.startswith("n_") or k in ("history_len", "future_len", "ego_stationary"))
    }
    try:
        spec = dataclasses.replace(PRESETS[args.preset], **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    scenes = gen_synthetic(spec, args.seed)
    header = header_for(None, {"generator": args.preset, "seed": args.seed})
    header.update(dt=spec.dt, T_H=spec.history_len, T_F=spec.future_len)
    n = write_corpus(args.output, scenes, header)
    print(f"gen-synthetic: wrote {n} scenes to {args.output}")
    return 0


COMMANDS = {
    "augment": cmd_augment,
    "histogram": cmd_histogram,
    "violations": cmd_violations,
    "validate": cmd_validate,
    "gen-synthetic": cmd_gen_synthetic,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    name = args.stats_command if args.command == "stats" else args.command
    try:
        return COMMANDS[name](args)
    except AugmentError as exc:
        stage = exc.stage or {2: "config", 4: "io"}.get(exc.exit_code, "data")
        print(f"trajaug: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"trajaug: [io] {exc}", file=sys.stderr)
        return CorpusIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
