"""Command-line entry point: synth-data, train, enhance, evaluate, gradcheck."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path


from . import config as config_mod
from .audio_io import read_wav, write_wav
from .datagen import build_corpus, write_corpus
from .errors import ConfigError, InvalidInputError
from .experiments import run_training, write_summary
from .gradcheck import check_model_gradients
from .metrics import evaluate_pair, mean_report, write_csv, write_jsonl
from .model import load_checkpoint
from .trainer import enhance_waveform

log = logging.getLogger("mixitse")

OUTPUT_ROOT_ENV = "MIXITSE_OUTPUT_ROOT"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _out_dir(args, default_name: str) -> Path:
    return Path(args.out) if args.out else output_root() / default_name


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--seed", type=int, help="shortcut for train.seed=<n>")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--out", help="output directory")


def _resolve(args, preset: str | None = None) -> config_mod.RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    cfg = config_mod.resolve(args.config, preset, overrides)
    print(cfg.to_json(), file=sys.stderr)
    return cfg


def cmd_synth_data(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args, "data")
    corpus = build_corpus(cfg.data, cfg.train.seed)
    manifest = write_corpus(corpus, out, args.format)
    (out / "config.json").write_text(cfg.to_json())
    print(manifest)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, args.preset)
    out = _out_dir(args, cfg.train.exp_id or "train")
    result = run_training(cfg, out)
    write_summary(out / "summary.json", result)
    final = result.log[-1] if result.log else {}
    print(json.dumps({"out": str(out), "steps": len(result.log), "final_loss": final.get("loss"), "best": result.best}))
    return 0


def cmd_enhance(args) -> int:
    params, _, meta = load_checkpoint(args.checkpoint)
    cfg = config_mod.from_dict(meta["run_config"]) if "run_config" in meta else _resolve(args)
    out = _out_dir(args, "enhanced")
    out.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        w = read_wav(path, cfg.data.sample_rate)
        est = enhance_waveform(params, w, cfg.stft, cfg.loss.c)
        target = out / Path(path).name
        write_wav(target, est, args.format)
        print(target)
    return 0


def load_pairs(path: str | Path) -> list[tuple[str, str]]:
    """JSON list of ``{"reference": ..., "estimate": ...}``; relative paths resolve against the file."""
    base = Path(path).parent
    try:
        entries = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise ConfigError(f"cannot parse pairs file {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: pairs file must be a JSON list")
    pairs = []
    for e in entries:
        if not isinstance(e, dict) or set(e) != {"reference", "estimate"}:
            raise ConfigError(f"{path}: bad pair entry {e!r}")
        pairs.append(tuple(str(base / e[k]) if not os.path.isabs(e[k]) else e[k] for k in ("reference", "estimate")))
    return pairs


def _pairs_from_args(args) -> list[tuple[str, str]]:
    if args.pairs:
        return load_pairs(args.pairs)
    if not args.reference or len(args.reference) != len(args.estimate or []):
        raise ConfigError("give matching --reference and --estimate lists, or --pairs")
    return list(zip(args.reference, args.estimate))


def cmd_evaluate(args) -> int:
    out = _out_dir(args, "evaluation")
    out.mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    for ref_path, est_path in _pairs_from_args(args):
        ref = read_wav(ref_path, args.sample_rate)
        est = read_wav(est_path, args.sample_rate)
        report = evaluate_pair(ref, est)
        reports.append(report)
        rows.append({"reference": str(ref_path), "estimate": str(est_path), **report.to_dict()})
    write_jsonl(out / "per_utterance.jsonl", rows)
    aggregate = {"count": len(reports), **mean_report(reports).to_dict()}
    write_csv(out / "aggregate.csv", [aggregate])
    print(json.dumps(aggregate))
    return 0


def cmd_gradcheck(args) -> int:
    report = check_model_gradients(seed=args.seed or 0, samples_per_tensor=args.samples)
    loss, tensor, err = report.worst()
    for name, per in report.errors.items():
        print(f"{name:16s} max relative error {max(per.values()):.3e}")
    print(f"max relative error {report.max_error:.3e} ({loss} / {tensor})")
    return 0 if report.max_error < args.tolerance else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixitse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic corpus as WAVs plus a manifest")
    _add_config_args(p)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train one experiment preset")
    _add_config_args(p)
    p.add_argument("--preset", choices=sorted(config_mod.PRESETS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance WAV files with a checkpoint (speech branch only)")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="siSDR / cepstral distance of estimates against references")
    p.add_argument("--reference", nargs="*")
    p.add_argument("--estimate", nargs="*")
    p.add_argument("--pairs", help='JSON list of {"reference": wav, "estimate": wav}')
    p.add_argument("--sample-rate", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients on the tiny model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=12, help="sampled entries per large tensor")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (InvalidInputError, RuntimeError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
