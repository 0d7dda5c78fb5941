import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yoho import CLASSES
from yoho.codec import (BinGeometry, Event, assemble_predictions, decode_grid, encode_events, read_annotations,
                        write_annotations)
from yoho.features import FeatureConfig, window_offsets

from oracles import random_event_list

GEOM = BinGeometry()
D = 2.56 / 9


def test_geometry():
    assert GEOM.n_bins * GEOM.bin_len_s == pytest.approx(2.56, abs=1e-12)


def test_encode_empty():
    assert not encode_events([], 0.0).any()


def test_encode_worked_example():
    grid = encode_events([Event(0.0, 0.57, "babycry")], 0.0)
    assert grid[0, :3].tolist() == [1, 0, 1]
    assert grid[1, :3].tolist() == [1, 0, 1]
    assert grid[2, 0] == 1 and grid[2, 1] == 0
    assert grid[2, 2] == pytest.approx((0.57 - 2 * D) / D, abs=1e-12)
    assert grid[2, 2] == pytest.approx(0.0039, abs=1e-4)
    assert not grid[3:].any() and not grid[:, 3:].any()


def test_encode_full_window():
    grid = encode_events([Event(10.0, 20.0, "gunshot")], 11.0)
    assert (grid[:, 6:] == [1, 0, 1]).all()
    assert not grid[:, :6].any()


def test_encode_merges_same_class_in_bin():
    grid = encode_events([Event(0.02, 0.05, "babycry"), Event(0.1, 0.2, "babycry")], 0.0)
    assert grid[0, 0] == 1
    assert grid[0, 1] == pytest.approx(0.02 / D)
    assert grid[0, 2] == pytest.approx(0.2 / D)


def test_encode_ignores_touching_events():
    # ends exactly on the bin edge: bin 1 must stay empty
    grid = encode_events([Event(0.0, D, "glassbreak")], 0.0)
    assert grid[0, 3:6].tolist() == [1, 0, 1]
    assert not grid[1].any()


def test_decode_threshold_and_inverted():
    grid = np.zeros((9, 9))
    grid[:, 0] = 0.49
    assert decode_grid(grid, 0.0) == []
    grid[4, 0:3] = (1.0, 0.5, 0.25)
    assert decode_grid(grid, 0.0) == []
    with pytest.raises(ValueError):
        decode_grid(grid, 0.0, threshold=1.0)


def test_decode_single_event_roundtrip():
    ev = Event(3.1, 4.05, "gunshot")
    frags = decode_grid(encode_events([ev], 2.0), 2.0)
    merged = assemble_predictions([frags], merge_gap_s=0.0, min_dur_s=0.0)
    assert len(merged) == 1
    assert merged[0].onset == pytest.approx(3.1, abs=1e-6)
    assert merged[0].offset == pytest.approx(4.05, abs=1e-6)


def test_assemble_examples():
    merged = assemble_predictions([[Event(1.0, 1.2, "babycry")], [Event(1.25, 1.5, "babycry")]], 0.3, 0.1)
    assert merged == [Event(1.0, 1.5, "babycry")]
    assert assemble_predictions([[Event(2.0, 2.05, "gunshot")]], 0.3, 0.1) == []
    both = assemble_predictions([[Event(1.0, 2.0, "babycry"), Event(1.5, 2.5, "gunshot")]], 0.3, 0.1)
    assert [e.label for e in both] == ["babycry", "gunshot"]
    with pytest.raises(ValueError):
        assemble_predictions([], -1.0, 0.1)


def test_assemble_sorts_unsorted_input():
    frags = [[Event(5.0, 6.0, "gunshot"), Event(1.0, 2.0, "gunshot"), Event(1.5, 1.8, "babycry")]]
    out = assemble_predictions(frags, 0.3, 0.1)
    assert [(e.onset, e.label) for e in out] == [(1.0, "gunshot"), (1.5, "babycry"), (5.0, "gunshot")]


def roundtrip(events, duration):
    cfg = FeatureConfig()
    fragments = []
    for start in window_offsets(int(round(duration * cfg.sample_rate)), cfg):
        offset = start / cfg.sample_rate
        fragments.append(decode_grid(encode_events(events, offset), offset))
    return assemble_predictions(fragments, 0.3, 0.1)


def test_roundtrip_random_lists():
    rng = np.random.default_rng(7)
    for _ in range(100):
        duration = float(rng.uniform(3, 30))
        events = random_event_list(rng, CLASSES, duration)
        out = roundtrip([Event(*e) for e in events], duration)
        expected = sorted(events, key=lambda e: (e[0], e[2]))
        assert len(out) == len(expected)
        for got, want in zip(out, expected):
            assert got.label == want[2]
            assert abs(got.onset - want[0]) <= 1e-6 and abs(got.offset - want[1]) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 8), st.floats(0.01, 3), st.sampled_from(CLASSES)), max_size=6),
       st.floats(0, 6))
def test_encoded_regressors_in_unit_interval(raw, offset):
    grid = encode_events([Event(a, a + b, c) for a, b, c in raw], offset)
    assert ((grid >= 0) & (grid <= 1)).all()
    presence = grid[:, 0::3]
    assert set(np.unique(presence)) <= {0.0, 1.0}
    assert not grid[:, 1::3][presence == 0].any() and not grid[:, 2::3][presence == 0].any()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=27, max_size=27), st.floats(0, 100))
def test_encode_idempotent_on_binary_grids(bits, offset):
    grid = np.zeros((9, 9))
    presence = np.array(bits, dtype=float).reshape(9, 3)
    grid[:, 0::3] = presence
    grid[:, 2::3] = presence
    events = decode_grid(grid, offset)
    once = encode_events(events, offset)
    twice = encode_events(decode_grid(once, offset), offset)
    assert np.array_equal(once, twice)
    assert np.array_equal(once, grid)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 2), st.sampled_from(CLASSES)), max_size=12),
       st.floats(0, 1), st.floats(0, 0.5))
def test_assemble_non_overlapping_per_class(raw, gap, min_dur):
    frags = [[Event(a, a + b, c) for a, b, c in raw if b > 0]]
    out = assemble_predictions(frags, gap, min_dur)
    for c in CLASSES:
        mine = [e for e in out if e.label == c]
        for a, b in zip(mine, mine[1:]):
            assert b.onset - a.offset > gap
    assert out == sorted(out, key=lambda e: (e.onset, e.label))


def test_annotation_file_roundtrip(tmp_path):
    events = [Event(0.1 + 1e-13, 2.5, "gunshot"), Event(0.05, 1.0 / 3.0, "babycry")]
    path = tmp_path / "a.tsv"
    write_annotations(path, events)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t")[2] == "babycry"
    assert read_annotations(path) == sorted(events)


def test_annotation_parse_errors(tmp_path):
    from yoho.errors import DataError
    path = tmp_path / "bad.tsv"
    path.write_text("1.0\t2.0\n")
    with pytest.raises(DataError):
        read_annotations(path)
    path.write_text("1.0\t2.0\tdog\n")
    with pytest.raises(DataError):
        read_annotations(path, CLASSES)
