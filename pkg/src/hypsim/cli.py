"""Command-line entry point: generate, exec, eval, stats, validate, balance."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dataset_io
from .dataset_io import SchemaError, atomic_write_text, compute_stats, format_stats_table, read_samples
from .dsl import ProgramError, parse_program
from .evaluation import PredictionError, format_report, read_predictions, score, score_programs
from .executor import ExecutionError, execute_action, execute_question
from .generator import SPLITS, BalanceError, GenConfig, GenerationError, balance, generate_split, verify_sample
from .nlg import CommandParaphraser, Synonyms, load_templates
from .rng import derive_rng
from .scene import Scene

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_PROGRAM = 4
EXIT_EXECUTION = 5
EXIT_SCHEMA = 6

SEED_ENV = "HYPSIM_SEED"

log = logging.getLogger("hypsim")


class ConfigError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _need_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} {path!r} does not exist")
    return p


def _writable(path: str, what: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise ConfigError(f"directory for {what} {path!r} does not exist")
    return p


def _sibling(out: Path, suffix: str) -> Path:
    stem = out.name[: -len(".jsonl")] if out.name.endswith(".jsonl") else out.stem
    return out.with_name(stem + suffix)


# --- subcommands ----------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    if args.images < 1:
        raise ConfigError("--images must be positive")
    out = _writable(args.out, "--out")
    try:
        templates = load_templates(_need_file(args.templates, "--templates")) if args.templates else None
        synonyms = Synonyms.load(_need_file(args.synonyms, "--synonyms")) if args.synonyms else None
    except ValueError as exc:
        raise ConfigError(f"cannot load templates or synonyms: {exc}") from None
    paraphrase = CommandParaphraser(args.paraphrase_cmd, args.paraphrase_timeout) if args.paraphrase_cmd else None
    config = GenConfig(n_images=args.images, split=args.split, seed=args.seed, tolerance=args.tolerance)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        samples = generate_split(config, templates=templates, synonyms=synonyms, paraphrase=paraphrase)
    except (GenerationError, BalanceError) as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    stats = compute_stats(samples)
    dataset_io.write_samples(samples, out)
    dataset_io.write_scenes(samples, _sibling(out, ".scenes.json"))
    atomic_write_text(_sibling(out, ".stats.json"), json.dumps({args.split: stats.to_dict()}, indent=1) + "\n")
    if args.test_time_out:
        dataset_io.write_samples(samples, _writable(args.test_time_out, "--test-time-out"), test_time=True)
    print(format_stats_table([(args.split, stats)]), end="")
    return EXIT_OK


def _load_scene(path: Path, image: Optional[str]) -> Scene:
    try:
        data = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scene file is not JSON: {exc.msg}") from None
    if isinstance(data, dict) and "objects" not in data:
        if image is None:
            if len(data) != 1:
                raise SchemaError("scene map holds several images; pick one with --image")
            image = next(iter(data))
        if image not in data:
            raise SchemaError(f"image {image!r} not in scene map")
        data = data[image]
    try:
        return Scene.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from None


def cmd_exec(args: argparse.Namespace) -> int:
    scene = _load_scene(_need_file(args.scene, "--scene"), args.image)
    dialect = "action" if args.action else "question" if args.question else None
    try:
        program = parse_program(args.program, dialect)
    except ProgramError as exc:
        print(f"program error: {exc}", file=sys.stderr)
        return EXIT_PROGRAM
    try:
        if program.dialect == "action":
            print(json.dumps(execute_action(program, scene).to_dict(), indent=1))
        else:
            print(execute_question(program, scene))
    except ExecutionError as exc:
        print(f"execution error: {exc}", file=sys.stderr)
        return EXIT_EXECUTION
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    gold = read_samples(_need_file(args.gold, "--gold"))
    pred_path = _need_file(args.pred, "--pred")
    report_path = _writable(args.report, "--report") if args.report else None
    if args.programs:
        report = score_programs(gold, read_predictions(pred_path, "question_program"))
    else:
        report = score(gold, read_predictions(pred_path))
    print(format_report(report), end="")
    if report_path:
        atomic_write_text(report_path, json.dumps(report.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    rows = []
    report = {}
    for path in args.input:
        samples = read_samples(_need_file(path, "--input"))
        if not samples:
            raise ConfigError(f"{path} holds no samples")
        name = samples[0].split if len({s.split for s in samples}) == 1 else Path(path).stem
        st = compute_stats(samples)
        rows.append((name, st))
        report[path] = st.to_dict()
    print(format_stats_table(rows), end="")
    if args.json:
        atomic_write_text(_writable(args.json, "--json"), json.dumps(report, indent=1) + "\n")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    samples = read_samples(_need_file(args.input, "--input"))
    failures = 0
    for s in samples:
        problem = verify_sample(s)
        if problem:
            failures += 1
            print(f"image {s.image_id} pair {s.pair_index}: {problem}")
    print(f"{len(samples)} samples checked, {failures} failure(s)")
    return EXIT_FAILURES if failures else EXIT_OK


def cmd_balance(args: argparse.Namespace) -> int:
    out = _writable(args.out, "--out")
    samples = read_samples(_need_file(args.input, "--input"))
    if not samples:
        raise ConfigError(f"{args.input} holds no samples")
    try:
        kept = balance(samples, derive_rng(args.seed, "balance"), args.tolerance)
    except BalanceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURES
    dataset_io.write_samples(kept, out)
    print(f"kept {len(kept)} of {len(samples)} samples")
    return EXIT_OK


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypsim", description="Hypothetical scene-edit question answering data tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a split as JSONL")
    g.add_argument("--images", type=int, required=True)
    g.add_argument("--split", choices=SPLITS, default="original")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--templates", help="template JSON file (default: packaged inventory)")
    g.add_argument("--synonyms", help="synonym JSON file (default: packaged dictionary)")
    g.add_argument("--paraphrase-cmd", help="external text-to-text command applied to every text")
    g.add_argument("--paraphrase-timeout", type=float, default=10.0)
    g.add_argument("--tolerance", type=float, default=0.005, help="balanced split: allowed deviation from 1/27")
    g.add_argument("--test-time-out", help="also write a copy without scenes and programs")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("exec", help="run one program on a scene")
    e.add_argument("--scene", required=True)
    e.add_argument("--image", help="image id when --scene is a scene map")
    e.add_argument("--program", required=True)
    mode = e.add_mutually_exclusive_group()
    mode.add_argument("--action", action="store_true")
    mode.add_argument("--question", action="store_true")
    e.set_defaults(func=cmd_exec)

    v = sub.add_parser("eval", help="score predictions against a gold split")
    v.add_argument("--gold", required=True)
    v.add_argument("--pred", required=True)
    v.add_argument("--report")
    v.add_argument("--programs", action="store_true", help="score predicted question programs by exact match")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="split statistics table")
    s.add_argument("--input", nargs="+", required=True)
    s.add_argument("--json")
    s.set_defaults(func=cmd_stats)

    c = sub.add_parser("validate", help="re-execute every sample and recheck the bias property")
    c.add_argument("--input", required=True)
    c.set_defaults(func=cmd_validate)

    b = sub.add_parser("balance", help="down-sample a split to a uniform answer distribution")
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--tolerance", type=float, default=0.005)
    b.set_defaults(func=cmd_balance)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, PredictionError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
