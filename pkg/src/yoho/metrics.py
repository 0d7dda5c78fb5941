"""Segment-based SED metrics: micro-averaged F1 and error rate.

Time is cut into fixed segments (1 s by default). A class is active in a
segment when any of its events overlaps the segment by a positive amount.
"""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import CLASSES
from .codec import EDGE_TOL, Event
from .errors import NoReferenceActivityError

log = logging.getLogger(__name__)


@dataclass
class SegmentRoll:
    activity: np.ndarray  # (n_segments, n_classes) of {0, 1}
    segment_len_s: float
    duration_s: float


@dataclass
class EvalReport:
    f1: float
    error_rate: float | None
    tp: int
    fp: int
    fn: int
    substitutions: int
    deletions: int
    insertions: int
    n_ref: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def events_to_roll(events: Iterable[Event], duration_s: float, classes: Sequence[str] = CLASSES,
                   segment_len_s: float = 1.0) -> SegmentRoll:
    n_segments = math.ceil(duration_s / segment_len_s - EDGE_TOL)
    roll = np.zeros((n_segments, len(classes)), dtype=np.int8)
    index = {c: i for i, c in enumerate(classes)}
    for onset, offset, label in events:
        if offset > duration_s + EDGE_TOL:
            log.warning("event %s ends after %.3f s; clipped", (onset, offset, label), duration_s)
            offset = duration_s
        if offset - onset <= EDGE_TOL:
            continue
        first = max(0, int(math.floor(onset / segment_len_s)))
        last = min(n_segments, int(math.ceil(offset / segment_len_s)))
        for k in range(first, last):
            lo, hi = k * segment_len_s, (k + 1) * segment_len_s
            if min(offset, hi) - max(onset, lo) > EDGE_TOL:
                roll[k, index[label]] = 1
    return SegmentRoll(roll, segment_len_s, duration_s)


def _pair(reference, system):
    ref = np.asarray(getattr(reference, "activity", reference), dtype=bool)
    sys = np.asarray(getattr(system, "activity", system), dtype=bool)
    if ref.shape != sys.shape:
        raise ValueError(f"roll shapes differ: {ref.shape} vs {sys.shape}")
    return ref, sys


def _counts(ref: np.ndarray, sys: np.ndarray) -> dict:
    fn_k = (ref & ~sys).sum(axis=1)
    fp_k = (~ref & sys).sum(axis=1)
    s_k = np.minimum(fn_k, fp_k)
    return dict(
        tp=int((ref & sys).sum()), fp=int(fp_k.sum()), fn=int(fn_k.sum()),
        substitutions=int(s_k.sum()), deletions=int((fn_k - s_k).sum()),
        insertions=int((fp_k - s_k).sum()), n_ref=int(ref.sum()),
    )


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    # both rolls empty: perfect agreement
    return 2 * tp / denom if denom else 1.0


def segment_f1(reference, system) -> EvalReport:
    ref, sys = _pair(reference, system)
    c = _counts(ref, sys)
    er = (c["substitutions"] + c["deletions"] + c["insertions"]) / c["n_ref"] if c["n_ref"] else None
    return EvalReport(f1=f1_from_counts(c["tp"], c["fp"], c["fn"]), error_rate=er, **c)


def segment_error_rate(reference, system) -> EvalReport:
    """Like :func:`segment_f1` but raises when the reference has no activity."""
    report = segment_f1(reference, system)
    if report.n_ref == 0:
        raise NoReferenceActivityError("error rate undefined: reference has no active segments")
    return report


def pool_reports(reports: Iterable[EvalReport]) -> EvalReport:
    """Micro-average: sum counts over files, then recompute F1 and ER."""
    keys = ("tp", "fp", "fn", "substitutions", "deletions", "insertions", "n_ref")
    totals = {k: 0 for k in keys}
    for rep in reports:
        for k in keys:
            totals[k] += getattr(rep, k)
    er = ((totals["substitutions"] + totals["deletions"] + totals["insertions"]) / totals["n_ref"]
          if totals["n_ref"] else None)
    return EvalReport(f1=f1_from_counts(totals["tp"], totals["fp"], totals["fn"]), error_rate=er, **totals)


def evaluate_files(pairs: Iterable[tuple[list[Event], list[Event], float]], classes: Sequence[str] = CLASSES,
                   segment_len_s: float = 1.0) -> EvalReport:
    """Pooled report over (reference, system, duration) triples."""
    reports = []
    for ref, sys, duration in pairs:
        r = events_to_roll(ref, duration, classes, segment_len_s)
        s = events_to_roll(sys, duration, classes, segment_len_s)
        reports.append(segment_f1(r, s))
    return pool_reports(reports)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; std is 0 for a single value."""
    values = [v for v in values if v is not None]
    if not values:
        return float("nan"), float("nan")
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(statistics.fmean(values)), float(statistics.stdev(values))


def cross_domain_matrix(results: dict[tuple[str, str], Sequence[EvalReport]]) -> dict:
    """Aggregate per-seed reports keyed by (source, target) into report cells."""
    cells = []
    for (source, target), reports in results.items():
        if not reports:
            raise ValueError(f"no results for {source} -> {target}")
        f1_mean, f1_std = mean_std([r.f1 for r in reports])
        er_mean, er_std = mean_std([r.error_rate for r in reports])
        cell = dict(source=source, target=target, f1_mean=f1_mean, f1_std=f1_std,
                    er_mean=er_mean, er_std=er_std, n_seeds=len(reports))
        cells.append({k: None if isinstance(v, float) and math.isnan(v) else v for k, v in cell.items()})
    return {"cells": cells}


def _cell_text(cell, metric):
    if cell is None:
        return "-"
    mean, std = cell[metric + "_mean"], cell[metric + "_std"]
    return "n/a" if mean is None else f"{mean:.2f} ± {std:.3f}"


def format_matrix(report: dict, metric: str = "f1") -> str:
    """Plain-text table: rows are source domains, columns target domains."""
    cells = report["cells"]
    sources = list(dict.fromkeys(c["source"] for c in cells))
    targets = list(dict.fromkeys(c["target"] for c in cells))
    lookup = {(c["source"], c["target"]): c for c in cells}
    head = "Ds / Dt"
    texts = [[_cell_text(lookup.get((s, t)), metric) for t in targets] for s in sources]
    width0 = max(len(head), *(len(s) for s in sources))
    widths = [max(len(t), *(len(row[j]) for row in texts)) for j, t in enumerate(targets)]
    lines = [" | ".join([head.ljust(width0)] + [t.center(w) for t, w in zip(targets, widths)])]
    lines.append("-+-".join(["-" * width0] + ["-" * w for w in widths]))
    for s, row in zip(sources, texts):
        lines.append(" | ".join([s.ljust(width0)] + [v.center(w) for v, w in zip(row, widths)]))
    return "\n".join(lines) + "\n"
