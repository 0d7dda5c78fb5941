"""End-to-end harness: dataset loading, training runs, prediction, evaluation."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_io import AudioClip, read_wav
from .codec import BinGeometry, Event, assemble_predictions, decode_grid, encode_events, read_annotations
from .config import RunConfig
from .errors import DataError
from .features import FeatureConfig, load_feature_cache, window_examples
from .metrics import EvalReport, cross_domain_matrix, evaluate_files
from .network import YohoModel, build_yoho, load_weights, save_weights
from .synthgen import DatasetManifest, ManifestEntry
from .training import TrainHistory, train

log = logging.getLogger(__name__)


def geometry(cfg: RunConfig) -> BinGeometry:
    return BinGeometry(cfg.codec.n_bins, cfg.features.window_len_s)


def cache_path(cfg: RunConfig, workdir: Path, entry: ManifestEntry) -> Path:
    return workdir / cfg.paths.features / Path(entry.audio).with_suffix(".ymel")


def file_examples(manifest: DatasetManifest, entry: ManifestEntry, cfg: RunConfig, workdir: Path | None = None):
    if workdir is not None:
        cached = cache_path(cfg, workdir, entry)
        if cached.is_file():
            return load_feature_cache(cached, cfg.features)
    return window_examples(read_wav(manifest.path(entry.audio)), cfg.features)


def load_split(manifest: DatasetManifest, domain: str, split: str, cfg: RunConfig,
               workdir: Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (features, target grids) for every window of a domain split."""
    entries = manifest.select(domain, split)
    if not entries:
        raise DataError(f"dataset has no {split!r} split for domain {domain!r}")
    xs, ys = [], []
    geom = geometry(cfg)
    for entry in entries:
        events = read_annotations(manifest.path(entry.annotation), cfg.classes)
        for ex in file_examples(manifest, entry, cfg, workdir):
            xs.append(ex.values.astype(np.float32))
            ys.append(encode_events(events, ex.offset_s, geom, cfg.classes))
    return np.stack(xs), np.stack(ys).astype(np.float32)


def new_model(cfg: RunConfig, seed: int) -> YohoModel:
    return build_yoho(seed, width_divisor=cfg.model.width_divisor, dropout_rate=cfg.model.dropout_rate,
                      n_outputs=3 * len(cfg.classes))


def train_domain(manifest: DatasetManifest, domain: str, cfg: RunConfig, seed: int,
                 workdir: Path | None = None, run_dir: Path | None = None):
    """Train on a domain's train split, early-stopping on its val split."""
    x_val, y_val = load_split(manifest, domain, "val", cfg, workdir)
    x_train, y_train = load_split(manifest, domain, "train", cfg, workdir)
    train_cfg = cfg.train.__class__(**{**cfg.train.__dict__, "seed": seed})
    model = new_model(cfg, seed)
    model, history = train(model, (x_train, y_train), (x_val, y_val), train_cfg, cfg.augment)
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        save_weights(model, run_dir / "model.yoho")
        history.save(run_dir / "history.json")
        from .plotting import plot_history
        plot_history(history, run_dir / "history.png", title=f"{domain} (seed {seed})")
    return model, history


def predict_windows(model: YohoModel, examples, cfg: RunConfig, batch_size: int = 64) -> list[Event]:
    model.eval()
    geom = geometry(cfg)
    fragments = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        grids = model.forward(np.stack([ex.values for ex in chunk]))
        for ex, grid in zip(chunk, grids):
            fragments.append(decode_grid(grid, ex.offset_s, geom, cfg.codec.threshold, cfg.classes))
    return assemble_predictions(fragments, cfg.codec.merge_gap_s, cfg.codec.min_dur_s)


def predict_clip(model: YohoModel, clip: AudioClip, cfg: RunConfig) -> list[Event]:
    """Windows -> forward -> decode -> assemble, clipped to the audio duration."""
    events = predict_windows(model, window_examples(clip, cfg.features), cfg)
    out = []
    for ev in events:
        off = min(ev.offset, clip.duration)
        if off - ev.onset >= cfg.codec.min_dur_s:
            out.append(Event(ev.onset, off, ev.label))
    return out


def evaluate_domain(model: YohoModel, manifest: DatasetManifest, domain: str, cfg: RunConfig,
                    split: str = "test", workdir: Path | None = None) -> EvalReport:
    entries = manifest.select(domain, split)
    if not entries:
        raise DataError(f"dataset has no {split!r} split for domain {domain!r}")
    pairs = []
    for entry in entries:
        ref = read_annotations(manifest.path(entry.annotation), cfg.classes)
        sys = predict_windows(model, file_examples(manifest, entry, cfg, workdir), cfg)
        sys = [Event(e.onset, min(e.offset, entry.duration_s), e.label) for e in sys if e.onset < entry.duration_s]
        pairs.append((ref, sys, entry.duration_s))
    return evaluate_files(pairs, cfg.classes, cfg.metrics.segment_len_s)


def run_xdomain(manifest: DatasetManifest, cfg: RunConfig, workdir: Path, sources: Sequence[str] | None = None,
                targets: Sequence[str] | None = None, seeds: Sequence[int] | None = None,
                reuse: bool = False) -> dict:
    """Train one model per (source, seed) and score it on every target's test split."""
    sources = list(sources or cfg.xdomain.sources)
    targets = list(targets or cfg.xdomain.targets)
    seeds = list(seeds if seeds is not None else cfg.xdomain.seeds)
    available = set(manifest.domains())
    missing = [d for d in sources + targets if d not in available]
    if missing:
        raise DataError(f"dataset lacks domain(s): {', '.join(sorted(set(missing)))}")
    for d in sources:
        for split in ("train", "val"):
            if not manifest.select(d, split):
                raise DataError(f"domain {d!r} has no {split!r} split")
    for d in targets:
        if not manifest.select(d, "test"):
            raise DataError(f"domain {d!r} has no 'test' split")

    results: dict[tuple[str, str], list[EvalReport]] = {(s, t): [] for s in sources for t in targets}
    for source in sources:
        for seed in seeds:
            run_dir = workdir / cfg.paths.runs / source / f"seed{seed}"
            if reuse and (run_dir / "model.yoho").is_file():
                model = load_weights(run_dir / "model.yoho")
            else:
                model, _ = train_domain(manifest, source, cfg, seed, workdir, run_dir)
            for target in targets:
                report = evaluate_domain(model, manifest, target, cfg, "test", workdir)
                log.info("%s -> %s (seed %d): F1 %.3f ER %s", source, target, seed, report.f1, report.error_rate)
                results[source, target].append(report)
    report = cross_domain_matrix(results)
    report["runs"] = [
        {"source": s, "target": t, "seed": seed, **rep.to_dict()}
        for (s, t), reps in results.items() for seed, rep in zip(seeds, reps)
    ]
    return report


def write_report(report: dict, out_dir: Path, stem: str = "xdomain") -> list[Path]:
    """JSON, aligned text tables and heat-map figures for a cross-domain report."""
    from .metrics import format_matrix
    from .plotting import plot_matrix

    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    txt_path = out_dir / f"{stem}.txt"
    txt_path.write_text("F1 (segment-based)\n" + format_matrix(report, "f1")
                        + "\nError rate (segment-based)\n" + format_matrix(report, "er"), encoding="utf-8")
    f1_png = plot_matrix(report, out_dir / f"{stem}_f1.png", "f1")
    er_png = plot_matrix(report, out_dir / f"{stem}_er.png", "er")
    return [json_path, txt_path, f1_png, er_png]
