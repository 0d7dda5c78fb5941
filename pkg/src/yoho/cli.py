"""Command-line entry point.

Subcommands: synth, featurize, train, predict, eval, xdomain. Every
subcommand accepts ``--config FILE`` plus dotted overrides such as
``--train.learning_rate 0.001``; overrides win over the file. Set
``YOHO_LOG_LEVEL`` (e.g. DEBUG) to change logging verbosity.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, leaf_keys, load_config, parse_override

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("yoho")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--workdir", required=True, type=Path, help="root directory; relative paths resolve against it")
    p.add_argument("--config", type=Path, help="JSON run configuration")
    group = p.add_argument_group("config overrides", "any key of the config document, as a JSON value")
    for key, default in leaf_keys():
        group.add_argument(f"--{key}", dest=f"override:{key}", metavar="VALUE",
                           help=f"(default: {json.dumps(default)})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="yoho", description="YOHO sound event detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic multi-domain dataset")
    _add_common(p)

    p = sub.add_parser("featurize", help="cache log-mel windows for every dataset file")
    _add_common(p)

    p = sub.add_parser("train", help="train on one source domain")
    p.add_argument("--source", required=True, help="domain name, e.g. clean or vehicle_-9dB")
    p.add_argument("--seed", type=int, help="overrides train.seed")
    _add_common(p)

    p = sub.add_parser("predict", help="detect events in a WAV file")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--audio", required=True, type=Path)
    p.add_argument("--output", type=Path, help="TSV path (default: stdout)")
    p.add_argument("--plot", type=Path, help="also render a detection figure (PNG)")
    _add_common(p)

    p = sub.add_parser("eval", help="segment-based F1/ER between annotation sets")
    p.add_argument("--reference", required=True, type=Path, help="TSV file or directory of TSVs")
    p.add_argument("--system", required=True, type=Path, help="TSV file or directory of TSVs")
    p.add_argument("--output", type=Path, help="report JSON path (default: stdout)")
    _add_common(p)

    p = sub.add_parser("xdomain", help="train per source domain, evaluate on every target")
    p.add_argument("--reuse", action="store_true", help="load existing checkpoints instead of retraining")
    _add_common(p)
    return parser


def _config(args) -> RunConfig:
    overrides = {k.split(":", 1)[1]: parse_override(v) for k, v in vars(args).items()
                 if k.startswith("override:") and v is not None}
    path = args.config
    if path is not None and not path.is_absolute():
        path = args.workdir / path
    return load_config(path, overrides)


def _resolve(args, path: Path) -> Path:
    return path if path.is_absolute() else args.workdir / path


def _manifest(cfg, workdir):
    from .synthgen import DatasetManifest
    return DatasetManifest.load(workdir / cfg.paths.data / "manifest.json")


def cmd_synth(args, cfg: RunConfig) -> int:
    from .synthgen import build_dataset
    manifest = build_dataset(cfg.synth, args.workdir / cfg.paths.data, cfg.classes, cfg.features.sample_rate)
    print(manifest.root / "manifest.json")
    return EXIT_OK


def cmd_featurize(args, cfg: RunConfig) -> int:
    from .audio_io import read_wav
    from .features import save_feature_cache, window_examples
    from .pipeline import cache_path
    manifest = _manifest(cfg, args.workdir)
    for entry in manifest.files:
        out = cache_path(cfg, args.workdir, entry)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_feature_cache(out, window_examples(read_wav(manifest.path(entry.audio)), cfg.features), cfg.features)
    print(args.workdir / cfg.paths.features)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .pipeline import train_domain
    manifest = _manifest(cfg, args.workdir)
    seed = cfg.train.seed if args.seed is None else args.seed
    run_dir = args.workdir / cfg.paths.runs / args.source / f"seed{seed}"
    _, history = train_domain(manifest, args.source, cfg, seed, args.workdir, run_dir)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"{run_dir / 'model.yoho'}: {history.epochs} epochs, stop={history.stop_reason}, best={history.best_epoch}")
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    from .audio_io import read_wav
    from .codec import write_annotations, format_time
    from .network import load_weights
    from .pipeline import predict_clip
    model = load_weights(_resolve(args, args.checkpoint))
    clip = read_wav(_resolve(args, args.audio))
    events = predict_clip(model, clip, cfg)
    if args.output:
        write_annotations(_resolve(args, args.output), events)
    else:
        for ev in events:
            sys.stdout.write(f"{format_time(ev.onset)}\t{format_time(ev.offset)}\t{ev.label}\n")
    if args.plot:
        import numpy as np
        from .features import FeatureConfig, log_mel, mel_filterbank, power_spectrogram
        from .plotting import plot_detection
        fc: FeatureConfig = cfg.features
        values = log_mel(power_spectrogram(clip, fc), mel_filterbank(fc), fc)
        plot_detection(np.asarray(values), None, events, cfg.classes, _resolve(args, args.plot),
                       fc.sample_rate, fc.stft_hop)
    return EXIT_OK


def _tsv_set(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {str(p.relative_to(path)): p for p in sorted(path.rglob("*.tsv"))}
    if path.is_file():
        return {path.name: path}
    raise FileNotFoundError(f"no such file or directory: {path}")


def cmd_eval(args, cfg: RunConfig) -> int:
    from .codec import read_annotations
    from .errors import DataError
    from .metrics import evaluate_files
    refs = _tsv_set(_resolve(args, args.reference))
    syss = _tsv_set(_resolve(args, args.system))
    if len(refs) == 1 and len(syss) == 1:
        pairs_keys = [(next(iter(refs)), next(iter(syss)))]
    else:
        if set(refs) != set(syss):
            diff = sorted(set(refs) ^ set(syss))
            raise DataError(f"reference and system file sets differ: {', '.join(diff[:5])}")
        pairs_keys = [(k, k) for k in sorted(refs)]
    triples = []
    for rk, sk in pairs_keys:
        ref = read_annotations(refs[rk], cfg.classes)
        sys_ = read_annotations(syss[sk], cfg.classes)
        duration = max([e.offset for e in ref + sys_], default=0.0)
        triples.append((ref, sys_, duration))
    report = evaluate_files(triples, cfg.classes, cfg.metrics.segment_len_s)
    doc = {**report.to_dict(), "precision": report.precision, "recall": report.recall,
           "n_files": len(triples), "segment_len_s": cfg.metrics.segment_len_s}
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        _resolve(args, args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_xdomain(args, cfg: RunConfig) -> int:
    from .metrics import format_matrix
    from .pipeline import run_xdomain, write_report
    manifest = _manifest(cfg, args.workdir)
    report = run_xdomain(manifest, cfg, args.workdir, reuse=args.reuse)
    paths = write_report(report, args.workdir / cfg.paths.reports)
    sys.stdout.write(format_matrix(report, "f1"))
    for p in paths:
        print(p)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "featurize": cmd_featurize, "train": cmd_train,
    "predict": cmd_predict, "eval": cmd_eval, "xdomain": cmd_xdomain,
}


def main(argv=None) -> int:
    from .errors import DataError, InvariantError
    logging.basicConfig(level=os.environ.get("YOHO_LOG_LEVEL", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"yoho {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"yoho {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, AssertionError, FloatingPointError) as exc:
        print(f"yoho {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
