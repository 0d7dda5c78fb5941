"""PCM WAV reading/writing and power utilities.

Only uncompressed RIFF/WAVE is handled: integer PCM (8/16/24/32-bit) and IEEE
float (32/64-bit). Output is always 16-bit PCM mono.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedWavError, UnsupportedCodecError

SAMPLE_RATE = 44100

_FORMAT_PCM = 1
_FORMAT_FLOAT = 3
_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioClip must be mono, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            # tolerate truncated data chunks written by streaming encoders
            if cid != b"data":
                raise MalformedWavError(f"chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def read_wav(path) -> AudioClip:
    """Decode a PCM or float WAV file to a mono clip in [-1, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise MalformedWavError(f"{path}: extensible fmt chunk too short")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None:
        raise MalformedWavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedWavError(f"{path}: missing data chunk")

    tag, channels, rate, _, _, bits = fmt
    if channels < 1 or rate < 1:
        raise MalformedWavError(f"{path}: bad channel count or sample rate")
    if tag == _FORMAT_PCM and bits in (8, 16, 24, 32):
        samples = _decode_pcm(payload, bits)
    elif tag == _FORMAT_FLOAT and bits in (32, 64):
        dtype = "<f4" if bits == 32 else "<f8"
        usable = len(payload) - len(payload) % (bits // 8)
        samples = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float64)
    else:
        raise UnsupportedCodecError(f"{path}: unsupported WAV encoding (format tag {tag}, {bits} bits)")

    frames = len(samples) // channels
    samples = samples[:frames * channels].reshape(frames, channels).mean(axis=1)
    return AudioClip(samples, rate)


def _decode_pcm(payload: bytes, bits: int) -> np.ndarray:
    width = bits // 8
    payload = payload[:len(payload) - len(payload) % width]
    if bits == 8:
        return (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(payload, dtype="<i2") / 32768.0
    if bits == 32:
        return np.frombuffer(payload, dtype="<i4") / 2147483648.0
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
    ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
    return ints / float(1 << 23)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.rint(clipped * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as 16-bit PCM mono, clipping to [-1, 1] first."""
    if not np.all(np.isfinite(clip.samples)):
        raise ValueError("clip contains non-finite samples")
    pcm = quantize_pcm16(clip.samples).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, _FORMAT_PCM, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16,
        b"data", len(pcm),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pcm)


def rms_power(samples) -> float:
    """Mean-square power (1/N) * sum(s**2)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("rms_power of an empty sequence")
    return float(np.mean(samples * samples))
