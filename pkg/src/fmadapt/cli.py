"""Command-line entry point: ``fmadapt <stage> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .stages import KIND_ALIASES, run_recipe, run_stage, sweep
from .training import TrainingDiverged

RECIPE_DIR = Path(__file__).parent / "recipes"

STAGE_COMMANDS = {
    "gen-corpus": "write a synthetic two-domain corpus",
    "pretrain": "self-supervised masked-prediction pretraining",
    "finetune": "supervised training of an ASR decoder on top of an encoder",
    "filter-data": "single-speaker and written-form filtering of a manifest",
    "just-train": "joint supervised plus self-supervised training",
    "pseudo-label": "teacher transcription of unlabeled audio",
    "adapt": "supervised adaptation with a parameter-subset regime",
    "lm-train": "train an n-gram language model",
    "decode": "write n-best hypotheses as JSON lines",
    "evaluate": "word error rate of a checkpoint on a test manifest",
    "count-params": "parameter counts per group and per regime",
}


def bundled_recipes() -> list[str]:
    return sorted(p.stem for p in RECIPE_DIR.glob("*.recipe"))


def _resolve_recipe(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = RECIPE_DIR / f"{name}.recipe"
    if bundled.exists():
        return bundled
    raise ConfigError(f"no recipe file {name!r}; bundled recipes: {', '.join(bundled_recipes())}")


def _overrides(items):
    out = []
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out.append((key.strip(), value.strip()))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fmadapt", description="Speech foundation-model adaptation toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def stage_args(p, needs_out=True):
        p.add_argument("--config", required=True, help="stage config file")
        p.add_argument("--out", required=needs_out, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides [stage] seed")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        p.add_argument("--oracle-decoder", action="store_true",
                       help="score references against themselves instead of decoding")

    for name, help_text in STAGE_COMMANDS.items():
        stage_args(sub.add_parser(name, help=help_text))
    stage_args(sub.add_parser("run", help="run a stage of whatever kind its config declares"))

    r = sub.add_parser("recipe", help="run a multi-stage recipe")
    r.add_argument("--config", help="recipe file or bundled recipe name")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a value in every stage")
    r.add_argument("--list", action="store_true", help="list bundled recipes")

    s = sub.add_parser("sweep", help="run one stage config over several values of a key")
    stage_args(s)
    s.add_argument("--param", required=True, help="section.key to vary")
    s.add_argument("--values", required=True, help="comma-separated values")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "recipe":
            if args.list:
                print("\n".join(bundled_recipes()))
                return 0
            if not args.config or not args.out:
                raise ConfigError("recipe needs --config and --out")
            summary = run_recipe(_resolve_recipe(args.config), args.out, args.seed, _overrides(args.set))
            for sid, rep in summary["stages"].items():
                wer = rep.get("wer", {}).get("rate")
                print(f"{sid}\t{rep['kind']}\t" + ("" if wer is None else f"wer={wer:.4f}"))
            return 0
        cfg = load_config(args.config)
        for key, value in _overrides(args.set):
            sec, _, k = key.partition(".")
            cfg.set(sec, k, value)
        if args.command == "sweep":
            sweep(cfg, args.param, [v.strip() for v in args.values.split(",") if v.strip()],
                            args.out, args.seed, args.oracle_decoder)
            print((Path(args.out) / "summary.tsv").read_text(encoding="utf-8"), end="")
            return 0
        expect = None if args.command == "run" else KIND_ALIASES.get(args.command, args.command)
        report = run_stage(cfg, args.out, args.seed, args.oracle_decoder, expect_kind=expect)
        print(json.dumps(report, sort_keys=True))
        return 0
    except ConfigError as e:
        print(f"fmadapt: config error: {e}", file=sys.stderr)
        return 2
    except TrainingDiverged as e:
        print(f"fmadapt: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"fmadapt: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
