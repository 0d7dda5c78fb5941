"""Log-mel feature windows and SpecAugment masking.

Windows are 2.56 s long with a 1.96 s hop; at 44.1 kHz with a centered STFT
(frame 1024, hop 441) each window yields exactly 257 frames of 40 mel bins.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .errors import DataError, SampleRateError


@dataclass(frozen=True)
class FeatureConfig:
    window_len_s: float = 2.56
    hop_len_s: float = 1.96
    sample_rate: int = 44100
    n_mels: int = 40
    stft_frame: int = 1024
    stft_hop: int = 441
    fft_size: int = 1024
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mels != 40 or self.n_frames != 257:
            raise ValueError(f"features must be 40 mel x 257 frames, got {self.n_mels} x {self.n_frames}")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len_s * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_len_s * self.sample_rate))

    @property
    def n_frames(self) -> int:
        return self.window_samples // self.stft_hop + 1

    @property
    def n_freqs(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class LogMelExample:
    values: np.ndarray  # (n_mels, n_frames), mel-major
    offset_s: float


@dataclass(frozen=True)
class MaskParams:
    freq_masks: int = 2
    max_freq_width: int = 8
    time_masks: int = 2
    max_time_width: int = 25
    min_freq_width: int = 0
    min_time_width: int = 0


def _check_rate(clip: AudioClip, cfg: FeatureConfig):
    if clip.sample_rate != cfg.sample_rate:
        raise SampleRateError(f"expected {cfg.sample_rate} Hz audio, got {clip.sample_rate} Hz")


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    if len(x) == 1:
        return np.full(len(x) + 2 * pad, x[0])
    return np.pad(x, pad, mode="reflect")


def power_spectrogram(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Centered Hann-window STFT power, shape (fft_size // 2 + 1, T)."""
    _check_rate(clip, cfg)
    x = clip.samples
    if len(x) < 1:
        raise DataError("cannot take the spectrogram of an empty clip")
    padded = _reflect_pad(x, cfg.fft_size // 2)
    n_frames = len(x) // cfg.stft_hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.stft_frame)[::cfg.stft_hop][:n_frames]
    window = np.hanning(cfg.stft_frame + 1)[:-1]  # periodic Hann
    spec = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    return (spec.real ** 2 + spec.imag ** 2).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """HTK-scale triangular filters between 0 Hz and Nyquist, shape (n_mels, n_freqs)."""
    fft_freqs = np.arange(cfg.n_freqs) * cfg.sample_rate / cfg.fft_size
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs - lower) / (center - lower)
    falling = (upper - fft_freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(power: np.ndarray, fb: np.ndarray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    if power.ndim != 2 or fb.ndim != 2 or fb.shape[1] != power.shape[0]:
        raise ValueError(f"filterbank {fb.shape} does not match power spectrogram {power.shape}")
    return np.log(np.maximum(fb @ power, cfg.log_floor))


_FB_CACHE: dict = {}


def _cached_filterbank(cfg: FeatureConfig) -> np.ndarray:
    if cfg not in _FB_CACHE:
        _FB_CACHE[cfg] = mel_filterbank(cfg)
    return _FB_CACHE[cfg]


def window_offsets(n_samples: int, cfg: FeatureConfig = FeatureConfig()) -> list[int]:
    """Start sample of each analysis window; the last one may run past the end."""
    extra = n_samples - cfg.window_samples
    k = max(0, math.ceil(extra / cfg.hop_samples)) if extra > 0 else 0
    return [i * cfg.hop_samples for i in range(k + 1)]


def window_examples(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> list[LogMelExample]:
    """Slice ``clip`` into overlapping windows and compute log-mels for each.

    The final window is zero-padded to full length, so an empty clip still
    produces a single example.
    """
    _check_rate(clip, cfg)
    fb = _cached_filterbank(cfg)
    out = []
    for k, start in enumerate(window_offsets(len(clip), cfg)):
        chunk = clip.samples[start:start + cfg.window_samples]
        if len(chunk) < cfg.window_samples:
            chunk = np.pad(chunk, (0, cfg.window_samples - len(chunk)))
        power = power_spectrogram(AudioClip(chunk, cfg.sample_rate), cfg)
        out.append(LogMelExample(log_mel(power, fb, cfg), k * cfg.hop_len_s))
    return out


def spec_augment(ex: LogMelExample, rng: np.random.Generator, params: MaskParams = MaskParams()) -> LogMelExample:
    """Mask random mel-bin and frame bands with the example's pre-mask mean."""
    n_mels, n_frames = ex.values.shape
    if params.max_freq_width > n_mels or params.max_time_width > n_frames:
        raise ValueError(f"mask width exceeds axis length for a {ex.values.shape} example")
    values = ex.values.copy()
    fill = ex.values.mean()
    for _ in range(params.freq_masks):
        width = int(rng.integers(params.min_freq_width, params.max_freq_width + 1))
        start = int(rng.integers(0, n_mels - width + 1))
        values[start:start + width, :] = fill
    for _ in range(params.time_masks):
        width = int(rng.integers(params.min_time_width, params.max_time_width + 1))
        start = int(rng.integers(0, n_frames - width + 1))
        values[:, start:start + width] = fill
    return replace(ex, values=values)


# Feature cache: "YMEL", u32 version, u32 count, then per example
# f64 offset + n_mels * n_frames f32 values (row-major, little-endian).
_CACHE_MAGIC = b"YMEL"
_CACHE_VERSION = 1


def save_feature_cache(path, examples: list[LogMelExample], cfg: FeatureConfig = FeatureConfig()) -> None:
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC + struct.pack("<II", _CACHE_VERSION, len(examples)))
        for ex in examples:
            if ex.values.shape != (cfg.n_mels, cfg.n_frames):
                raise ValueError(f"example shape {ex.values.shape} != {(cfg.n_mels, cfg.n_frames)}")
            fh.write(struct.pack("<d", ex.offset_s))
            fh.write(np.ascontiguousarray(ex.values, dtype="<f4").tobytes())


def load_feature_cache(path, cfg: FeatureConfig = FeatureConfig()) -> list[LogMelExample]:
    data = Path(path).read_bytes()
    if data[:4] != _CACHE_MAGIC:
        raise DataError(f"{path}: not a feature cache file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != _CACHE_VERSION:
        raise DataError(f"{path}: unsupported cache version {version}")
    n_values = cfg.n_mels * cfg.n_frames
    record = 8 + 4 * n_values
    if len(data) != 12 + count * record:
        raise DataError(f"{path}: truncated or oversized feature cache")
    out = []
    for i in range(count):
        pos = 12 + i * record
        offset = struct.unpack_from("<d", data, pos)[0]
        values = np.frombuffer(data, dtype="<f4", count=n_values, offset=pos + 8)
        out.append(LogMelExample(values.reshape(cfg.n_mels, cfg.n_frames).astype(np.float64), offset))
    return out
