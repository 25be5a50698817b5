"""Command-line entry point: ``prosoda <subcommand> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__


def _common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prosoda", description="Emotion-conditioned unit resynthesis toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="render the synthetic multilingual emotion corpus")
    _common(p)
    p.add_argument("--out", required=True, help="output directory (wav/ and manifest.tsv)")

    p = sub.add_parser("train", help="train every component and write a model bundle")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for bundle.prsd")

    p = sub.add_parser("resynth", help="resynthesize one utterance")
    _common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--speaker", required=True, help="speaker id known to the bundle")
    p.add_argument("--mode", choices=("oracle", "baseline", "proposed"), default="proposed")
    p.add_argument("--donor", help="take the emotion embedding from this WAV instead")
    p.add_argument("--out", required=True, help="output WAV path")

    p = sub.add_parser("eval", help="run the experiment grid on the eval split")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument(
        "--conditions",
        default="oracle,baseline,proposed",
        help="comma list of oracle, baseline, proposed, cross:<language>",
    )
    p.add_argument("--no-ser", action="store_true", help="skip emotion recognition on resyntheses")
    p.add_argument("--lang-matrix", action="store_true", help="also train per-language emotion models")
    p.add_argument("--out", required=True, help="report directory")

    p = sub.add_parser("export-embeddings", help="write emotion embeddings with labels")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--split", choices=("train", "eval", "all"), default="eval")
    p.add_argument("--out", required=True, help="output TSV path")
    return ap


def _config(args):
    from .config import load_config

    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def cmd_gen_corpus(args, cfg):
    from .corpus import default_corpus_spec, gen_corpus

    spec = default_corpus_spec(cfg.n_languages, cfg.n_speakers, cfg.utts_per_cell, cfg.seed)
    spec = dataclasses.replace(spec, eval_ratio=cfg.eval_ratio)
    records = gen_corpus(spec, args.out)
    print(f"wrote {len(records)} utterances and {Path(args.out) / 'manifest.tsv'}")


def cmd_train(args, cfg):
    from .pipeline import train_all

    bundle = train_all(args.manifest, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bundle.prsd"
    bundle.save(path)
    lines = ["component\tsha256"] + [f"{k}\t{v}" for k, v in bundle.component_hashes().items()]
    (out / "hashes.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"bundle {path} sha256 {bundle.digest()}")


def cmd_resynth(args, cfg):
    from .audio import read_wav, write_wav
    from .bundle import ModelBundle
    from .emotion import embed
    from .features import extract_features
    from .synth import resynthesize

    bundle = ModelBundle.load(args.bundle)
    w = read_wav(args.wav)
    e = None
    if args.donor:
        e = embed(bundle.emotion, extract_features(read_wav(args.donor), bundle.feature_cfg))
    out = resynthesize(w, args.mode, bundle, args.speaker, e, cfg.synth_config())
    write_wav(args.out, out)
    print(f"wrote {args.out} ({len(out.samples)} samples)")


def cmd_eval(args, cfg):
    from .bundle import ModelBundle
    from .pipeline import language_matrix, matrix_tsv, run_experiment

    bundle = ModelBundle.load(args.bundle)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    report = run_experiment(args.manifest, bundle, conditions, cfg, with_ser=not args.no_ser)
    report.write(args.out)
    text = report.text()
    if args.lang_matrix:
        sets, langs, m = language_matrix(args.manifest, cfg, bundle.feature_cfg)
        tsv = matrix_tsv(sets, langs, m)
        (Path(args.out) / "language_matrix.tsv").write_text(tsv, encoding="utf-8")
        text += "\nEmotion accuracy by training languages (rows) and eval language (columns)\n" + tsv
    print(text, end="")


def cmd_export_embeddings(args, cfg):
    from .audio import read_wav
    from .bundle import ModelBundle
    from .corpus import read_manifest
    from .emotion import embed
    from .features import extract_features
    from .metrics import export_embeddings

    bundle = ModelBundle.load(args.bundle)
    records = [r for r in read_manifest(args.manifest) if args.split == "all" or r.split == args.split]
    rows = [
        (embed(bundle.emotion, extract_features(read_wav(r.audio_path), bundle.feature_cfg)), r.emotion, r.language)
        for r in records
    ]
    export_embeddings(rows, args.out)
    print(f"wrote {len(rows)} embeddings to {args.out}")


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "resynth": cmd_resynth,
    "eval": cmd_eval,
    "export-embeddings": cmd_export_embeddings,
}


def main(argv=None) -> int:
    from .pipeline import StageError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args, cfg)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - reported with the command tag
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
