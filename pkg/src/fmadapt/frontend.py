"""Log-Mel features, dataset normalization and SpecAugment."""

from __future__ import annotations

import wave
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate_hz: int = 16000
    window_ms: float = 32.0
    hop_ms: float = 10.0
    n_mels: int = 128
    log_floor: float = 1e-10
    fmin_hz: float = 125.0
    fmax_hz: float = 7500.0

    def __post_init__(self):
        if not (self.window_ms > self.hop_ms > 0):
            raise ValueError("need window_ms > hop_ms > 0")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def window(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate_hz * self.hop_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        return 1 << max(0, (self.window - 1).bit_length())


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # (T, n_mels)
    frame_rate_ms: float = 10.0

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


def num_frames(num_samples: int, window: int, hop: int) -> int:
    if num_samples < window:
        return 0
    return (num_samples - window) // hop + 1


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey FFT over the last axis (length must be a power of two)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError(f"FFT length {n} is not a power of two")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(x.shape[:-1] + (n,))
        size *= 2
    return a


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(config: FrontendConfig) -> np.ndarray:
    pts = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def mel_filterbank(config: FrontendConfig) -> np.ndarray:
    """(n_fft//2 + 1, n_mels) triangular HTK-scale filters over [fmin, fmax]."""
    n_bins = config.n_fft // 2 + 1
    freqs = np.arange(n_bins) * config.sample_rate_hz / config.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mels + 2))
    lo, mid, hi = edges[:-2], edges[1:-1], edges[2:]
    f = freqs[:, None]
    up = (f - lo) / (mid - lo)
    down = (hi - f) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_spectrum(frames: np.ndarray, config: FrontendConfig) -> np.ndarray:
    win = frames * hann(config.window)
    padded = np.zeros(frames.shape[:-1] + (config.n_fft,))
    padded[..., : config.window] = win
    spec = fft_radix2(padded)[..., : config.n_fft // 2 + 1]
    return spec.real**2 + spec.imag**2


def compute_logmel(waveform, config: FrontendConfig = FrontendConfig()) -> FeatureMatrix:
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected mono samples")
    T = num_frames(x.size, config.window, config.hop)
    if T == 0:
        return FeatureMatrix(np.zeros((0, config.n_mels)))
    starts = np.arange(T) * config.hop
    frames = x[starts[:, None] + np.arange(config.window)]
    energy = power_spectrum(frames, config) @ mel_filterbank(config)
    return FeatureMatrix(np.log(np.maximum(energy, config.log_floor)))


def read_wav(path: str | Path, config: FrontendConfig = FrontendConfig()) -> np.ndarray:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: need 16-bit mono PCM")
        if w.getframerate() != config.sample_rate_hz:
            raise ValueError(f"{path}: sample rate {w.getframerate()} != {config.sample_rate_hz}; resample first")
        raw = w.readframes(w.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


# --------------------------------------------------------------- normalization

STD_FLOOR = 1e-6


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, feats: np.ndarray) -> np.ndarray:
        return (np.asarray(feats) - self.mean) / self.std

    def invert(self, feats: np.ndarray) -> np.ndarray:
        return np.asarray(feats) * self.std + self.mean


def fit_normalization(feature_mats: Iterable[np.ndarray]) -> NormalizationStats:
    """Exact two-pass per-dimension mean/std over every frame."""
    mats = [np.asarray(m.frames if isinstance(m, FeatureMatrix) else m, dtype=np.float64) for m in feature_mats]
    mats = [m for m in mats if m.shape[0] > 0]
    if not mats:
        raise ValueError("cannot fit normalization on an empty manifest")
    n = sum(m.shape[0] for m in mats)
    total = np.zeros(mats[0].shape[1])
    for m in mats:
        total += m.sum(axis=0)
    mean = total / n
    sq = np.zeros_like(mean)
    for m in mats:
        d = m - mean
        sq += (d * d).sum(axis=0)
    std = np.maximum(np.sqrt(sq / n), STD_FLOOR)
    return NormalizationStats(mean, std)


# --------------------------------------------------------------- SpecAugment

@dataclass(frozen=True)
class SpecAugmentPolicy:
    n_freq_masks: int = 2
    max_freq_width: int = 27
    n_time_masks: int = 2
    max_time_width: int = 50
    mask_value: float = 0.0

    def __post_init__(self):
        if min(self.n_freq_masks, self.max_freq_width, self.n_time_masks, self.max_time_width) < 0:
            raise ValueError("mask counts and widths must be >= 0")


def spec_augment_bands(shape, policy: SpecAugmentPolicy, seed: int) -> tuple[list, list]:
    """Draw mask bands in the documented order.

    For each frequency mask and then each time mask: width uniform in
    [0, max_width] (clamped to the axis), then start uniform over the
    valid positions.  Returns ``(freq_bands, time_bands)`` as (start, width).
    """
    T, F = shape
    g = rngmod.generator(seed)
    bands = []
    for count, max_w, extent in (
        (policy.n_freq_masks, policy.max_freq_width, F),
        (policy.n_time_masks, policy.max_time_width, T),
    ):
        axis_bands = []
        for _ in range(count):
            w = min(int(g.integers(0, max_w + 1)), extent)
            start = int(g.integers(0, extent - w + 1))
            axis_bands.append((start, w))
        bands.append(axis_bands)
    return bands[0], bands[1]


def spec_augment(features, policy: SpecAugmentPolicy, rng_seed: int):
    frames = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features)
    out = np.array(frames, dtype=np.float64, copy=True)
    freq, time = spec_augment_bands(out.shape, policy, rng_seed)
    for start, w in freq:
        out[:, start:start + w] = policy.mask_value
    for start, w in time:
        out[start:start + w, :] = policy.mask_value
    if isinstance(features, FeatureMatrix):
        return FeatureMatrix(out, features.frame_rate_ms)
    return out
