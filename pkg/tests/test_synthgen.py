import numpy as np
import pytest

from yoho import CLASSES
from yoho.audio_io import quantize_pcm16, read_wav, rms_power
from yoho.codec import read_annotations
from yoho.errors import DataError
from yoho.synthgen import (DatasetManifest, MixSpec, SynthConfig, build_dataset, domain_name, gen_background,
                           gen_event_clip, generate_mixture, mix_at_snr, noise_gain)
from yoho.audio_io import AudioClip

from oracles import mixture_components, remeasured_snr_db, spectral_centroid


def test_domain_names():
    assert domain_name("clean", None) == "clean"
    assert domain_name("vehicle", -9.0) == "vehicle_-9dB"
    assert domain_name("indoor", -3.5) == "indoor_-3.5dB"


def test_mixspec_validation():
    with pytest.raises(ValueError):
        MixSpec("vehicle", None)
    with pytest.raises(ValueError):
        MixSpec(duration_s=0)


@pytest.mark.parametrize("label", CLASSES)
def test_event_clip_peak_and_determinism(label):
    a = gen_event_clip(label, np.random.default_rng(5))
    b = gen_event_clip(label, np.random.default_rng(5))
    assert np.array_equal(a.samples, b.samples)
    assert np.max(np.abs(a.samples)) == pytest.approx(0.5, abs=1e-6)


def test_unknown_class():
    with pytest.raises(ValueError):
        gen_event_clip("dog", np.random.default_rng(0))


def test_class_centroids_separate():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        cry = gen_event_clip("babycry", rng).samples
        glass = gen_event_clip("glassbreak", rng).samples
        assert spectral_centroid(cry, 44100) < spectral_centroid(glass, 44100)


def test_background_length_power_and_tilt():
    bg = {s: gen_background(s, 60.0, np.random.default_rng(0)) for s in ("vehicle", "indoor")}
    assert len(bg["vehicle"]) == 2_646_000
    assert rms_power(bg["vehicle"].samples) > 0
    assert np.sqrt(rms_power(bg["indoor"].samples)) == pytest.approx(0.1, rel=1e-9)
    assert spectral_centroid(bg["vehicle"].samples, 44100) < spectral_centroid(bg["indoor"].samples, 44100)
    with pytest.raises(ValueError):
        gen_background("street", 1.0, np.random.default_rng(0))


def test_noise_gain_arithmetic():
    assert noise_gain(0.3, 0.3, 0.0) == pytest.approx(1.0)
    assert noise_gain(0.3, 0.3, -9.0) == pytest.approx(2.8184, abs=1e-4)


def test_silent_background_rejected():
    with pytest.raises(DataError):
        mix_at_snr([], AudioClip(np.zeros(100)), -3.0)


@pytest.mark.parametrize("snr", [-3.0, -9.0, 6.0])
def test_mixture_snr_remeasured(snr):
    for idx in range(5):
        spec = MixSpec("outdoor", snr, 15.0, event_density=20, seed=3)
        clip, _ = generate_mixture(spec, 0, idx)
        track, background, active = mixture_components(spec, 0, idx)
        if not active.any():
            continue
        measured = remeasured_snr_db(quantize_pcm16(clip.samples), track, background, active)
        assert abs(measured - snr) <= 0.05


def test_mixture_peak_limited():
    clip, _ = generate_mixture(MixSpec("vehicle", -9.0, 20.0, event_density=30, seed=0), 0, 0)
    assert np.max(np.abs(clip.samples)) <= 0.99 + 1e-12


def test_annotations_valid_and_aligned():
    spec = dict(duration_s=30.0, event_density=40, seed=4)
    clean, ev_clean = generate_mixture(MixSpec("clean", None, **spec), 1, 2)
    for scene in ("vehicle", "indoor"):
        _, ev = generate_mixture(MixSpec(scene, -9.0, **spec), 1, 2)
        assert ev == ev_clean
    assert len(clean) == 30 * 44100
    for c in CLASSES:
        mine = sorted(e for e in ev_clean if e.label == c)
        assert all(0 <= e.onset < e.offset <= 30.0 for e in mine)
        assert all(a.offset <= b.onset for a, b in zip(mine, mine[1:]))


def test_density_zero_gives_no_events():
    clip, events = generate_mixture(MixSpec("indoor", -3.0, 5.0, event_density=0), 0, 0)
    assert events == [] and np.any(clip.samples)


def test_default_config_has_seven_domains():
    names = [domain_name(*d) for d in SynthConfig().domains()]
    assert len(names) == 7 and names[0] == "clean" and "outdoor_-3dB" in names


def _small_cfg():
    return SynthConfig(scenes=["vehicle"], snrs_db=[-9.0], files_per_split={"train": 1, "val": 1, "test": 1},
                       duration_s={"train": 4.0, "val": 3.0, "test": 3.0}, event_density=30, seed=2)


def test_build_dataset_layout_and_determinism(tmp_path):
    m1 = build_dataset(_small_cfg(), tmp_path / "a")
    build_dataset(_small_cfg(), tmp_path / "b")
    assert m1.domains() == ["clean", "vehicle_-9dB"]
    assert len(m1.files) == 6
    for entry in m1.files:
        a, b = tmp_path / "a" / entry.audio, tmp_path / "b" / entry.audio
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a" / entry.annotation).read_bytes() == (tmp_path / "b" / entry.annotation).read_bytes()
        assert read_wav(a).duration == pytest.approx(entry.duration_s)
    for split in ("train", "val", "test"):
        clean = m1.select("clean", split)[0]
        noisy = m1.select("vehicle_-9dB", split)[0]
        assert read_annotations(m1.path(clean.annotation)) == read_annotations(m1.path(noisy.annotation))
    loaded = DatasetManifest.load(tmp_path / "a")
    assert loaded.files == m1.files


def test_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        DatasetManifest.load(tmp_path)
    (tmp_path / "manifest.json").write_text("{}")
    with pytest.raises(DataError):
        DatasetManifest.load(tmp_path)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DataError, match="file"):
        build_dataset(_small_cfg(), blocker / "out")


def test_scene_recordings_vary_but_scenes_stay_ordered():
    centroids = {s: [] for s in ("vehicle", "outdoor", "indoor")}
    for seed in range(20):
        for scene in centroids:
            x = gen_background(scene, 2.0, np.random.default_rng(seed)).samples
            centroids[scene].append(spectral_centroid(x, 44100))
    assert len(set(np.round(centroids["outdoor"], 3))) == 20
    medians = [np.median(centroids[s]) for s in ("vehicle", "outdoor", "indoor")]
    assert medians == sorted(medians)
