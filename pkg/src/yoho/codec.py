"""Event lists <-> output grids, window assembly, and TSV annotations.

Grid columns for class ``c`` are (3c, 3c+1, 3c+2) = (presence, start, end);
start and end are positions inside the bin as a fraction of its length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import CLASSES
from .errors import DataError

# overlaps shorter than this (seconds) count as touching, not overlapping
EDGE_TOL = 1e-9


class Event(NamedTuple):
    onset: float
    offset: float
    label: str


@dataclass(frozen=True)
class BinGeometry:
    n_bins: int = 9
    window_len_s: float = 2.56

    @property
    def bin_len_s(self) -> float:
        return self.window_len_s / self.n_bins


def validate_events(events: Iterable[Event], classes: Sequence[str] = CLASSES) -> list[Event]:
    out = []
    for ev in events:
        ev = Event(float(ev[0]), float(ev[1]), str(ev[2]))
        if not ev.offset > ev.onset or ev.onset < 0:
            raise DataError(f"invalid event span {ev}")
        if ev.label not in classes:
            raise DataError(f"unknown event label {ev.label!r}")
        out.append(ev)
    return out


def _snap(value: float) -> float:
    if abs(value) < EDGE_TOL:
        return 0.0
    if abs(value - 1.0) < EDGE_TOL:
        return 1.0
    return value


def encode_events(events: Iterable[Event], window_offset_s: float = 0.0, geom: BinGeometry = BinGeometry(),
                  classes: Sequence[str] = CLASSES) -> np.ndarray:
    """Target grid (n_bins x 3 * n_classes) for the window starting at ``window_offset_s``."""
    d = geom.bin_len_s
    grid = np.zeros((geom.n_bins, 3 * len(classes)))
    index = {c: i for i, c in enumerate(classes)}
    for onset, offset, label in events:
        c = index[label]
        on, off = onset - window_offset_s, offset - window_offset_s
        if off <= 0 or on >= geom.window_len_s:
            continue
        first = max(0, int(math.floor(on / d)))
        last = min(geom.n_bins - 1, int(math.ceil(off / d)))
        for b in range(first, last + 1):
            lo, hi = b * d, (b + 1) * d
            if min(off, hi) - max(on, lo) <= EDGE_TOL:
                continue
            start = _snap((max(on, lo) - lo) / d)
            end = _snap((min(off, hi) - lo) / d)
            cell = grid[b, 3 * c:3 * c + 3]
            if cell[0] == 1.0:
                cell[1] = min(cell[1], start)
                cell[2] = max(cell[2], end)
            else:
                cell[:] = (1.0, start, end)
    return grid


def decode_grid(grid: np.ndarray, window_offset_s: float = 0.0, geom: BinGeometry = BinGeometry(),
                threshold: float = 0.5, classes: Sequence[str] = CLASSES) -> list[Event]:
    """Absolute-time fragments for every (bin, class) whose presence reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    d = geom.bin_len_s
    out = []
    for b in range(grid.shape[0]):
        base = window_offset_s + b * d
        for c, label in enumerate(classes):
            presence, start, end = grid[b, 3 * c:3 * c + 3]
            if presence >= threshold and end > start:
                out.append(Event(base + float(start) * d, base + float(end) * d, label))
    return out


def assemble_predictions(fragments: Iterable[Iterable[Event]], merge_gap_s: float = 0.3,
                         min_dur_s: float = 0.1) -> list[Event]:
    """Union-merge fragments per class, drop short events, sort by (onset, label)."""
    if merge_gap_s < 0 or min_dur_s < 0:
        raise ValueError("merge_gap_s and min_dur_s must be non-negative")
    by_class: dict[str, list[Event]] = {}
    for window in fragments:
        for ev in window:
            by_class.setdefault(ev.label, []).append(ev)
    out = []
    for label, evs in by_class.items():
        evs.sort()
        cur_on, cur_off = evs[0].onset, evs[0].offset
        for ev in evs[1:]:
            if ev.onset - cur_off <= merge_gap_s:
                cur_off = max(cur_off, ev.offset)
            else:
                out.append(Event(cur_on, cur_off, label))
                cur_on, cur_off = ev.onset, ev.offset
        out.append(Event(cur_on, cur_off, label))
    out = [ev for ev in out if ev.offset - ev.onset >= min_dur_s]
    out.sort(key=lambda ev: (ev.onset, ev.label))
    return out


def read_annotations(path, classes: Sequence[str] | None = None) -> list[Event]:
    """Parse ``onset<TAB>offset<TAB>label`` lines; blank lines are skipped."""
    events = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            events.append(Event(float(parts[0]), float(parts[1]), parts[2].strip()))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if classes is not None:
        validate_events(events, classes)
    return events


def format_time(t: float) -> str:
    # repr gives the shortest string that round-trips the float exactly
    return repr(float(t))


def write_annotations(path, events: Iterable[Event]) -> None:
    events = sorted(events, key=lambda ev: (ev.onset, ev.label))
    lines = [f"{format_time(ev.onset)}\t{format_time(ev.offset)}\t{ev.label}\n" for ev in events]
    Path(path).write_text("".join(lines), encoding="utf-8")
