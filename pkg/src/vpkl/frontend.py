"""Mel-spectrogram frontend: waveform to fixed-length log-mel matrices.

Frames are 25 ms windows at a 10 ms hop, 40 mel bins, log-compressed after a
small energy floor, then truncated or padded to a fixed frame count. Padded
rows carry the log of the energy floor and are tracked by ``valid_frames``;
nothing downstream may read them as real audio.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOG_ENERGY_FLOOR = 1e-10


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    hop_ms: float = 10.0
    window_ms: float = 25.0
    n_mels: int = 40
    fmin_hz: float = 0.0
    fmax_hz: float | None = None  # None: Nyquist
    energy_floor: float = LOG_ENERGY_FLOOR
    target_frames: int = 1024

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.window_samples:
            n *= 2
        return n

    @property
    def mel_fmax(self) -> float:
        return self.sample_rate / 2.0 if self.fmax_hz is None else self.fmax_hz


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        peak = np.abs(self.samples).max()
        if peak > 1.0:
            raise ValueError(f"waveform amplitude {peak:.4g} outside [-1, 1]")


@dataclass
class MelSpectrogram:
    """Log-mel frames plus bookkeeping for the padded region."""

    frames: np.ndarray  # (num_frames, n_mels)
    valid_frames: int
    hop_ms: float = 10.0
    window_ms: float = 25.0
    pad_value: float = field(default=float(np.log(LOG_ENERGY_FLOOR)))

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError(f"mel frames must be 2-D, got shape {self.frames.shape}")
        if not 0 <= self.valid_frames <= self.frames.shape[0]:
            raise ValueError(
                f"valid_frames {self.valid_frames} outside [0, {self.frames.shape[0]}]"
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]

    def valid(self) -> np.ndarray:
        return self.frames[: self.valid_frames]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int,
                   fmin: float, fmax: float) -> np.ndarray:
    """Triangular unit-peak filters on the HTK mel scale, (n_mels, n_fft//2+1)."""
    n_freqs = n_fft // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, n_freqs)
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_freqs))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (freqs - lo) / max(ctr - lo, 1e-8)
        down = (hi - freqs) / max(hi - ctr, 1e-8)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def num_frames_for(num_samples: int, cfg: FrontendConfig) -> int:
    """Closed-form frame count: floor((len - window)/hop) + 1."""
    return (num_samples - cfg.window_samples) // cfg.hop_samples + 1


def compute_mel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> MelSpectrogram:
    """Log-mel spectrogram of a waveform; frames fully inside the signal, no centering."""
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"sample rate {w.sample_rate} != configured {cfg.sample_rate}; "
            "resampling is not supported"
        )
    if cfg.mel_fmax > w.sample_rate / 2.0:
        raise ValueError(f"mel fmax {cfg.mel_fmax} above Nyquist {w.sample_rate / 2}")
    win = cfg.window_samples
    hop = cfg.hop_samples
    if w.samples.size < win:
        raise ValueError(
            f"waveform of {w.samples.size} samples shorter than one window ({win})"
        )
    n = num_frames_for(w.samples.size, cfg)
    idx = np.arange(n)[:, None] * hop + np.arange(win)[None, :]
    windows = w.samples[idx] * np.hanning(win)[None, :]
    spectrum = np.fft.rfft(windows, n=cfg.n_fft, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin_hz, cfg.mel_fmax)
    energies = power @ fb.T
    log_mel = np.log(np.maximum(energies, cfg.energy_floor))
    return MelSpectrogram(
        frames=log_mel,
        valid_frames=n,
        hop_ms=cfg.hop_ms,
        window_ms=cfg.window_ms,
        pad_value=float(np.log(cfg.energy_floor)),
    )


def fix_length(m: MelSpectrogram, target: int = 1024) -> MelSpectrogram:
    """Truncate (keeping the earliest frames) or pad with the log-floor value."""
    if m.num_frames >= target:
        frames = m.frames[:target].copy()
        valid = min(m.valid_frames, target)
    else:
        frames = np.full((target, m.n_mels), m.pad_value)
        frames[: m.num_frames] = m.frames
        valid = m.valid_frames
    return MelSpectrogram(
        frames=frames,
        valid_frames=valid,
        hop_ms=m.hop_ms,
        window_ms=m.window_ms,
        pad_value=m.pad_value,
    )


def read_wav(path: str | Path) -> Waveform:
    """Read mono 16-bit PCM WAV into a [-1, 1] float waveform."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono WAV, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
        if fh.getcomptype() != "NONE":
            raise ValueError(f"{path}: compressed WAV not supported")
        raw = fh.readframes(fh.getnframes())
        rate = fh.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=rate)
