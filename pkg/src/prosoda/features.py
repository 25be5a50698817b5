"""Log-mel frame features, the stand-in for self-supervised content features.

Pipeline per utterance: :func:`prosoda.audio.frame` (25 ms window, 20 ms hop)
-> :func:`power_spectrum` (Hann window, zero-padded real FFT) ->
:func:`log_mel` (HTK-scale triangular filterbank, natural log).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .audio import FRAME_LEN, HOP, FrameSeq, Waveform, frame

HOP_SECONDS = 0.020


@dataclass(frozen=True)
class FeatureConfig:
    n_fft: int = 512
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    sample_rate: int = 16000

    def validate(self):
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be positive")
        if not 0.0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= fmin < fmax <= {self.sample_rate / 2}, got {self.fmin}, {self.fmax}"
            )
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FeatureSeq:
    vectors: np.ndarray  # (n_frames, dim)
    hop_seconds: float = HOP_SECONDS

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_spectrum(fr: FrameSeq, n_fft: int = 512) -> np.ndarray:
    """Magnitude-squared rfft of Hann-windowed frames, shape (n_frames, n_fft//2 + 1)."""
    if n_fft < fr.frame_len:
        raise ValueError(f"n_fft={n_fft} shorter than frame_len={fr.frame_len}")
    if n_fft & (n_fft - 1):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    windowed = fr.frames * hann(fr.frame_len)
    spec = np.fft.rfft(windowed, n=n_fft, axis=1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: FeatureConfig) -> np.ndarray:
    edges = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(edges[1:-1])


@lru_cache(maxsize=16)
def _filterbank(n_fft, n_mels, fmin, fmax, sample_rate):
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lo) / (mid - lo)
    falling = (hi - bin_hz) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, n_fft//2 + 1)."""
    cfg.validate()
    fb = _filterbank(cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax, cfg.sample_rate)
    if np.any(fb.sum(axis=1) <= 0):
        raise ValueError("mel filterbank has empty filters; use fewer mels or a larger n_fft")
    return fb


def log_mel(spec: np.ndarray, cfg: FeatureConfig) -> FeatureSeq:
    spec = np.asarray(spec, dtype=np.float64)
    if np.any(spec < 0):
        raise ValueError("power spectrum must be nonnegative")
    fb = mel_filterbank(cfg)
    if spec.shape[-1] != fb.shape[1]:
        raise ValueError(f"spectrum has {spec.shape[-1]} bins, filterbank expects {fb.shape[1]}")
    return FeatureSeq(np.log(spec @ fb.T + cfg.log_floor))


def extract_features(w: Waveform, cfg: FeatureConfig = FeatureConfig()) -> FeatureSeq:
    """Log-mel features at a fixed 20 ms hop."""
    cfg.validate()
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz audio, got {w.sample_rate}")
    fr = frame(w, FRAME_LEN, HOP)
    if fr.n_frames == 0:
        return FeatureSeq(np.zeros((0, cfg.n_mels)))
    return log_mel(power_spectrum(fr, cfg.n_fft), cfg)


def mean_normalize(fs: FeatureSeq) -> FeatureSeq:
    """Subtract the per-utterance mean vector (cepstral-mean-style normalization).

    Used for the content (unit) stream so that utterance-level spectral
    colouring does not leak into the discrete units.
    """
    if fs.n_frames == 0:
        return fs
    return FeatureSeq(fs.vectors - fs.vectors.mean(axis=0, keepdims=True), fs.hop_seconds)
