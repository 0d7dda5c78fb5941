import numpy as np
import pytest

from yoho.audio_io import AudioClip
from yoho.errors import SampleRateError
from yoho.features import (FeatureConfig, LogMelExample, MaskParams, hz_to_mel, load_feature_cache, log_mel,
                           mel_filterbank, power_spectrogram, save_feature_cache, spec_augment, window_examples)

CFG = FeatureConfig()
SR = 44100


def test_config_frame_contract():
    assert CFG.window_samples == 112896
    assert CFG.n_frames == 257
    with pytest.raises(ValueError):
        FeatureConfig(n_mels=64)


def test_zero_clip_gives_zero_power():
    p = power_spectrogram(AudioClip(np.zeros(5000), SR))
    assert p.shape == (513, 5000 // 441 + 1)
    assert not p.any()


def test_frame_count_for_window_length():
    assert power_spectrogram(AudioClip(np.zeros(112896), SR)).shape == (513, 257)


def test_sine_peaks_at_nearest_bin():
    t = np.arange(SR) / SR
    p = power_spectrogram(AudioClip(np.sin(2 * np.pi * 1000 * t), SR))
    expected = round(1000 * 1024 / SR)
    assert expected == 23
    # edge frames see reflected padding; interior frames must peak exactly
    assert set(np.argmax(p[:, 5:-5], axis=0)) == {expected}


def test_power_matches_direct_dft():
    # independent oracle: explicit DFT sum of one centered frame
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3000)
    p = power_spectrogram(AudioClip(x, SR))
    padded = np.pad(x, 512, mode="reflect")
    frame = padded[3 * 441:3 * 441 + 1024] * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024))
    k = np.array([0, 7, 100, 512])
    n = np.arange(1024)
    dft = (frame[None, :] * np.exp(-2j * np.pi * k[:, None] * n[None, :] / 1024)).sum(axis=1)
    assert p[k, 3] == pytest.approx(np.abs(dft) ** 2, rel=1e-9)


def test_power_rejects_rate_mismatch():
    with pytest.raises(SampleRateError):
        power_spectrogram(AudioClip(np.zeros(100), 16000))


def test_single_sample_clip():
    assert power_spectrogram(AudioClip(np.array([0.3]), SR)).shape == (513, 1)


def test_mel_scale_value():
    assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2), abs=1e-9)
    assert hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)


def test_filterbank_structure():
    fb = mel_filterbank(CFG)
    assert fb.shape == (40, 513)
    assert (fb >= 0).all()
    assert (fb.sum(axis=0) >= 0).all()
    assert (fb.max(axis=1) > 0).all()
    peaks = np.argmax(fb, axis=1)
    assert (np.diff(peaks) > 0).all()


def test_log_mel_floor_and_shift():
    fb = mel_filterbank(CFG)
    out = log_mel(np.zeros((513, 10)), fb)
    assert np.allclose(out, np.log(1e-10))
    assert out[0, 0] == pytest.approx(-23.0259, abs=1e-4)
    power = np.random.default_rng(1).random((513, 10))
    a, b = log_mel(power, fb), log_mel(2 * power, fb)
    unfloored = fb @ power > 1e-10
    assert np.allclose((b - a)[unfloored], np.log(2), atol=1e-12)


def test_log_mel_shape_mismatch():
    with pytest.raises(ValueError):
        log_mel(np.zeros((512, 3)), mel_filterbank(CFG))


def test_log_mel_monotone():
    rng = np.random.default_rng(2)
    fb = mel_filterbank(CFG)
    power = rng.random((513, 4))
    bumped = power.copy()
    bumped[rng.integers(513), rng.integers(4)] += 5.0
    assert (log_mel(bumped, fb) >= log_mel(power, fb)).all()


def test_windowing_counts_and_offsets():
    assert [e.offset_s for e in window_examples(AudioClip(np.zeros(112896), SR))] == [0.0]
    long = window_examples(AudioClip(np.zeros(180 * SR), SR))
    assert len(long) == 92
    assert long[-1].offset_s == pytest.approx(178.36, abs=1e-9)
    for k, ex in enumerate(long):
        assert ex.offset_s == pytest.approx(k * 1.96, abs=1e-9)
        assert ex.values.shape == (40, 257)
    assert len(window_examples(AudioClip(np.zeros(60 * SR), SR))) == 31


def test_empty_clip_single_padded_window():
    (ex,) = window_examples(AudioClip(np.zeros(0), SR))
    assert ex.values.shape == (40, 257)
    assert np.all(ex.values >= np.log(1e-10)) and np.all(np.isfinite(ex.values))


def test_final_window_is_zero_padded():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(3 * SR)
    exs = window_examples(AudioClip(x, SR))
    padded = np.zeros(112896)
    tail = x[86436:]
    padded[:len(tail)] = tail
    direct = log_mel(power_spectrogram(AudioClip(padded, SR)), mel_filterbank(CFG))
    assert np.allclose(exs[-1].values, direct)


def _example(seed=0):
    return LogMelExample(np.random.default_rng(seed).standard_normal((40, 257)), 1.96)


def test_spec_augment_identity_without_masks(rng):
    ex = _example()
    out = spec_augment(ex, rng, MaskParams(freq_masks=0, time_masks=0))
    assert np.array_equal(out.values, ex.values) and out.offset_s == ex.offset_s


def test_spec_augment_single_frequency_mask(rng):
    ex = _example()
    out = spec_augment(ex, rng, MaskParams(freq_masks=1, max_freq_width=8, min_freq_width=8, time_masks=0))
    masked = np.where((out.values == ex.values.mean()).all(axis=1))[0]
    assert len(masked) == 8 and np.all(np.diff(masked) == 1)
    assert np.array_equal(np.delete(out.values, masked, axis=0), np.delete(ex.values, masked, axis=0))


def test_spec_augment_deterministic_and_pure():
    ex = _example()
    before = ex.values.copy()
    a = spec_augment(ex, np.random.default_rng(9))
    b = spec_augment(ex, np.random.default_rng(9))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(ex.values, before)


def test_spec_augment_change_bound():
    params = MaskParams()
    for seed in range(20):
        ex = _example(seed)
        out = spec_augment(ex, np.random.default_rng(seed), params)
        changed = np.count_nonzero(out.values != ex.values)
        assert changed <= params.freq_masks * params.max_freq_width * 257 + params.time_masks * params.max_time_width * 40


def test_spec_augment_width_too_large(rng):
    with pytest.raises(ValueError):
        spec_augment(_example(), rng, MaskParams(max_freq_width=41))


def test_feature_cache_roundtrip(tmp_path):
    exs = [_example(1), LogMelExample(np.zeros((40, 257)), 3.92)]
    path = tmp_path / "f.ymel"
    save_feature_cache(path, exs)
    data = path.read_bytes()
    assert data[:4] == b"YMEL"
    back = load_feature_cache(path)
    assert [e.offset_s for e in back] == [1.96, 3.92]
    assert np.array_equal(back[0].values, exs[0].values.astype(np.float32))
