"""Synthetic VOICe-style datasets: event timelines mixed over scene noise.

Event classes and scenes are stand-ins with distinct spectral signatures:

* babycry: harmonic tone around 350-550 Hz with 3-6 Hz amplitude pulsing
* glassbreak: high-passed (> 4 kHz) noise burst with fast decay
* gunshot: train of 2-5 short decaying broadband impulses
* scenes: stationary noise with power spectrum ~ f**-tilt
  (vehicle 2.0, outdoor 1.0, indoor 0.5); each file jitters the tilt by up
  to 0.2 and adds a few broad spectral bumps, so recordings of one scene
  differ while the scenes stay apart

Every file's random stream is seeded from (seed, split, file index), so the
clean and noisy variants of a file share one event timeline.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import CLASSES
from .audio_io import SAMPLE_RATE, AudioClip, write_wav
from .codec import Event, write_annotations
from .errors import DataError

log = logging.getLogger(__name__)

SCENES = ("vehicle", "outdoor", "indoor")
SCENE_TILT = {"vehicle": 2.0, "outdoor": 1.0, "indoor": 0.5}
TILT_JITTER = 0.2
N_BUMPS = 3
BUMP_DB = 6.0
SPLITS = ("train", "val", "test")
PEAK_LIMIT = 0.99
EVENT_PEAK = 0.5


@dataclass(frozen=True)
class MixSpec:
    scene: str = "clean"
    snr_db: float | None = None
    duration_s: float = 60.0
    classes: tuple = CLASSES
    event_density: float = 10.0  # expected events per minute
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.scene != "clean" and (self.snr_db is None or not np.isfinite(self.snr_db)):
            raise ValueError(f"scene {self.scene!r} needs a finite snr_db")


class PlacedEvent(NamedTuple):
    start: int  # sample index
    clip: AudioClip
    label: str

    @property
    def event(self) -> Event:
        sr = self.clip.sample_rate
        return Event(self.start / sr, (self.start + len(self.clip)) / sr, self.label)


def domain_name(scene: str, snr_db: float | None) -> str:
    return "clean" if scene == "clean" else f"{scene}_{snr_db:g}dB"


def _fade(n: int, sr: int, fade_s: float = 0.01) -> np.ndarray:
    k = min(n // 2, int(fade_s * sr))
    env = np.ones(n)
    if k:
        ramp = np.linspace(0.0, 1.0, k, endpoint=False)
        env[:k] = ramp
        env[n - k:] = ramp[::-1]
    return env


def _bandpass_noise(n: int, rng: np.random.Generator, lo: float, hi: float, sr: int) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, n)


def gen_event_clip(label: str, rng: np.random.Generator, classes: Sequence[str] = CLASSES,
                   sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Synthesize one isolated event of class ``label``, peak-normalized to 0.5."""
    if label not in classes:
        raise ValueError(f"unknown class {label!r}")
    kind = list(classes).index(label) % 3
    sr = sample_rate
    if kind == 0:
        n = int(rng.uniform(1.0, 2.5) * sr)
        t = np.arange(n) / sr
        f0 = rng.uniform(350.0, 550.0)
        inst = f0 * (1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t))
        phase = 2 * np.pi * np.cumsum(inst) / sr
        x = sum(a * np.sin(h * phase) for h, a in zip((1, 2, 3, 4), (1.0, 0.5, 0.25, 0.12)))
        x *= 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t) ** 2
    elif kind == 1:
        n = int(rng.uniform(0.4, 1.2) * sr)
        t = np.arange(n) / sr
        x = _bandpass_noise(n, rng, 4000.0, 16000.0, sr) * np.exp(-t / rng.uniform(0.15, 0.3))
    else:
        shots = int(rng.integers(2, 6))
        gap = rng.uniform(0.1, 0.2)
        tau = rng.uniform(0.02, 0.04)
        n = int((gap * (shots - 1) + 6 * tau) * sr)
        t = np.arange(n) / sr
        noise = _bandpass_noise(n, rng, 100.0, 6000.0, sr)
        env = np.zeros(n)
        for k in range(shots):
            local = t - k * gap
            env += np.where(local >= 0, np.exp(-np.clip(local, 0, None) / tau), 0.0) * (0.8 ** k)
        x = noise * env
    x = x * _fade(len(x), sr, 0.005)
    x *= EVENT_PEAK / np.max(np.abs(x))
    return AudioClip(x, sr)


def gen_background(scene: str, duration_s: float, rng: np.random.Generator,
                   sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Stationary scene noise of exactly ``duration_s`` seconds (RMS 0.1)."""
    if scene not in SCENE_TILT:
        raise ValueError(f"no background for scene {scene!r}")
    n = int(round(duration_s * sample_rate))
    tilt = SCENE_TILT[scene] + rng.uniform(-TILT_JITTER, TILT_JITTER)
    centers = np.exp(rng.uniform(np.log(100.0), np.log(16000.0), N_BUMPS))
    widths = rng.uniform(0.3, 1.0, N_BUMPS)  # octaves
    gains_db = rng.uniform(-BUMP_DB, BUMP_DB, N_BUMPS)
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = np.zeros_like(freqs)
    audible = freqs >= 20.0
    f = freqs[audible]
    colour_db = sum(g * np.exp(-0.5 * (np.log2(f / c) / w) ** 2) for c, w, g in zip(centers, widths, gains_db))
    shape[audible] = (f / 1000.0) ** (-tilt / 2.0) * 10.0 ** (colour_db / 20.0)
    x = np.fft.irfft(spec * shape, n)
    x *= 0.1 / np.sqrt(np.mean(x * x))
    return AudioClip(x, sample_rate)


def place_events(rng: np.random.Generator, duration_s: float, classes: Sequence[str] = CLASSES,
                 event_density: float = 10.0, sample_rate: int = SAMPLE_RATE,
                 max_attempts: int = 50) -> list[PlacedEvent]:
    """Random timeline with uniform onsets and no same-class overlap."""
    n_total = int(round(duration_s * sample_rate))
    count = int(rng.poisson(event_density * duration_s / 60.0)) if event_density > 0 else 0
    placed: list[PlacedEvent] = []
    for _ in range(count):
        label = classes[int(rng.integers(len(classes)))]
        clip = gen_event_clip(label, rng, classes, sample_rate)
        if len(clip) >= n_total:
            continue
        for _ in range(max_attempts):
            start = int(rng.integers(0, n_total - len(clip)))
            end = start + len(clip)
            if all(p.label != label or end <= p.start or start >= p.start + len(p.clip) for p in placed):
                placed.append(PlacedEvent(start, clip, label))
                break
    placed.sort(key=lambda p: (p.start, p.label))
    return placed


def render_events(placed: Sequence[PlacedEvent], n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Summed event track and boolean mask of event-active samples."""
    track = np.zeros(n_samples)
    active = np.zeros(n_samples, dtype=bool)
    for p in placed:
        end = p.start + len(p.clip)
        if p.start < 0 or end > n_samples:
            raise ValueError(f"event at sample {p.start} runs outside the {n_samples}-sample timeline")
        track[p.start:end] += p.clip.samples
        active[p.start:end] = True
    return track, active


def noise_gain(signal_power: float, noise_power: float, snr_db: float) -> float:
    return float(np.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def _limit(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x)) if len(x) else 0.0
    return x * (PEAK_LIMIT / peak) if peak > PEAK_LIMIT else x


def mix_at_snr(placed: Sequence[PlacedEvent], background: AudioClip, snr_db: float):
    """Mix events over ``background`` scaled to ``snr_db`` on event-active samples.

    Returns (mixture, events). The mixture is scaled down as a whole if its
    peak exceeds 0.99, which leaves the SNR unchanged.
    """
    bg = background.samples
    if not np.any(bg):
        raise DataError("background is silent")
    track, active = render_events(placed, len(bg))
    events = [p.event for p in placed]
    if not active.any():
        return AudioClip(_limit(bg.copy()), background.sample_rate), events
    p_sig = float(np.mean(track[active] ** 2))
    p_noise = float(np.mean(bg[active] ** 2))
    mixed = track + noise_gain(p_sig, p_noise, snr_db) * bg
    return AudioClip(_limit(mixed), background.sample_rate), events


def render_clean(placed: Sequence[PlacedEvent], duration_s: float, sample_rate: int = SAMPLE_RATE):
    track, _ = render_events(placed, int(round(duration_s * sample_rate)))
    return AudioClip(_limit(track), sample_rate), [p.event for p in placed]


def generate_mixture(spec: MixSpec, split_index: int, file_index: int, sample_rate: int = SAMPLE_RATE):
    """Deterministic (mixture, events) for one file of one domain."""
    timeline_rng = np.random.default_rng([spec.seed, split_index, file_index, 0])
    placed = place_events(timeline_rng, spec.duration_s, spec.classes, spec.event_density, sample_rate)
    if spec.scene == "clean":
        return render_clean(placed, spec.duration_s, sample_rate)
    scene_rng = np.random.default_rng([spec.seed, split_index, file_index, 1 + SCENES.index(spec.scene)])
    background = gen_background(spec.scene, spec.duration_s, scene_rng, sample_rate)
    return mix_at_snr(placed, background, spec.snr_db)


@dataclass
class SynthConfig:
    scenes: list = field(default_factory=lambda: list(SCENES))
    snrs_db: list = field(default_factory=lambda: [-3.0, -9.0])
    include_clean: bool = True
    files_per_split: dict = field(default_factory=lambda: {"train": 2, "val": 1, "test": 1})
    duration_s: dict = field(default_factory=lambda: {"train": 180.0, "val": 60.0, "test": 60.0})
    event_density: float = 10.0
    seed: int = 0

    def domains(self) -> list[tuple[str, float | None]]:
        out = [("clean", None)] if self.include_clean else []
        return out + [(scene, float(snr)) for scene in self.scenes for snr in self.snrs_db]


@dataclass
class ManifestEntry:
    audio: str
    annotation: str
    scene: str
    snr_db: float | None
    split: str
    domain: str
    duration_s: float


@dataclass
class DatasetManifest:
    root: Path
    classes: list
    seed: int
    files: list[ManifestEntry]

    def domains(self) -> list[str]:
        return list(dict.fromkeys(f.domain for f in self.files))

    def select(self, domain: str, split: str) -> list[ManifestEntry]:
        return [f for f in self.files if f.domain == domain and f.split == split]

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "seed": self.seed, "files": [asdict(f) for f in self.files]}

    def save(self, path=None):
        path = Path(path) if path else self.root / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            files = [ManifestEntry(**f) for f in doc["files"]]
            manifest = cls(path.parent, doc["classes"], doc["seed"], files)
        except FileNotFoundError:
            raise DataError(f"no dataset manifest at {path}") from None
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: malformed manifest ({exc})") from exc
        for f in manifest.files:
            if not f.audio or not f.annotation:
                raise DataError(f"{path}: entry without audio/annotation pair")
        return manifest


def build_dataset(cfg: SynthConfig, out_dir, classes: Sequence[str] = CLASSES,
                  sample_rate: int = SAMPLE_RATE) -> DatasetManifest:
    """Write every domain variant as ``<out>/<domain>/<split>/`` WAV + TSV pairs."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    entries = []
    for scene, snr in cfg.domains():
        domain = domain_name(scene, snr)
        for split_index, split in enumerate(SPLITS):
            split_dir = out_dir / domain / split
            try:
                split_dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise DataError(f"cannot create {split_dir}: {exc.strerror}") from exc
            spec = MixSpec(scene, snr, float(cfg.duration_s[split]), tuple(classes), cfg.event_density, cfg.seed)
            for idx in range(int(cfg.files_per_split.get(split, 0))):
                clip, events = generate_mixture(spec, split_index, idx, sample_rate)
                stem = f"{split}_{idx:03d}"
                write_wav(split_dir / f"{stem}.wav", clip)
                write_annotations(split_dir / f"{stem}.tsv", events)
                entries.append(ManifestEntry(f"{domain}/{split}/{stem}.wav", f"{domain}/{split}/{stem}.tsv",
                                             scene, snr, split, domain, spec.duration_s))
            log.info("wrote %s/%s", domain, split)
    manifest = DatasetManifest(out_dir, list(classes), cfg.seed, entries)
    manifest.save()
    return manifest
