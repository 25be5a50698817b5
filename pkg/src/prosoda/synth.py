"""Source-filter unit-to-speech synthesizer.

Each 20 ms frame gets an excitation (a continuous-phase pulse train at the
commanded F0 when voiced, seeded white noise otherwise). The excitation is
shaped by a spectral envelope rebuilt from the frame's unit centroid: log-mel
values sit at the mel band centers, are interpolated onto the FFT grid, and
give the magnitude ``exp(logmel / 2)``. Windowed grains of two hops are
filtered in the frequency domain and overlap-added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FRAME_LEN, HOP, SAMPLE_RATE, Waveform
from .emotion import EMBED_DIM
from .features import FeatureConfig, hann, mel_center_frequencies
from .pitch import PitchTrack
from .units import Codebook

MODES = ("oracle", "baseline", "proposed")


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP
    frame_len: int = FRAME_LEN
    n_fft: int = 1024
    noise_seed: int = 0
    peak: float = 0.9

    def validate(self):
        if self.hop != HOP or self.sample_rate != SAMPLE_RATE:
            raise ValueError("synthesizer hop and rate must match the 20 ms unit rate at 16 kHz")
        if self.n_fft < 2 * self.hop:
            raise ValueError("n_fft must cover a two-hop grain")


def n_samples_for(n_frames: int, cfg: SynthConfig = SynthConfig()) -> int:
    """Output length: frames * hop + frame_len - hop."""
    return n_frames * cfg.hop + cfg.frame_len - cfg.hop


def _resample_f0(f0: PitchTrack, n: int):
    m = len(f0)
    if m == n:
        return f0.f0_hz.copy(), f0.voiced.copy()
    pos = (np.arange(n) + 0.5) * m / n - 0.5
    nearest = np.clip(np.floor(pos + 0.5).astype(np.int64), 0, m - 1)
    voiced = f0.voiced[nearest]
    src = np.flatnonzero(f0.voiced)
    if src.size == 0:
        return np.zeros(n), np.zeros(n, dtype=bool)
    hz = np.interp(pos, src, f0.f0_hz[src])
    return np.where(voiced, hz, 0.0), voiced


def align_conditioning(units, f0: PitchTrack, e, speaker: int, n_speakers: int = 1) -> np.ndarray:
    """Per-frame conditioning ``[unit, f0_hz, voiced, embedding(96), speaker one-hot]``.

    F0 is resampled to the unit rate by linear interpolation at frame time
    centers (over voiced values; voicing follows the nearest source frame).
    The embedding and speaker one-hot are replicated on every frame.
    """
    u = np.asarray(units, dtype=np.int64)
    if u.ndim != 1 or u.size == 0 or len(f0) == 0:
        raise ValueError("units and F0 must be nonempty")
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (EMBED_DIM,):
        raise ValueError(f"embedding must have shape ({EMBED_DIM},)")
    if not 0 <= speaker < n_speakers:
        raise ValueError(f"speaker index {speaker} outside [0, {n_speakers})")
    n = u.size
    hz, voiced = _resample_f0(f0, n)
    onehot = np.zeros((n, n_speakers))
    onehot[:, speaker] = 1.0
    return np.column_stack([u, hz, voiced.astype(np.float64), np.tile(e, (n, 1)), onehot])


def _envelopes(codebook: Codebook, feature_cfg: FeatureConfig, n_fft: int, sample_rate: int):
    centers = mel_center_frequencies(feature_cfg)
    if centers.shape[0] != codebook.feature_dim:
        raise ValueError("codebook dimension does not match the mel band count")
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    logmel = np.stack([np.interp(freqs, centers, row) for row in codebook.centroids])
    return np.exp(0.5 * logmel)


def _excitation(hz, voiced, n_samples, cfg: SynthConfig):
    n = hz.shape[0]
    centers = np.arange(n) * cfg.hop + cfg.frame_len // 2
    t = np.arange(n_samples)
    frame_of = np.clip((t - cfg.frame_len // 2 + cfg.hop // 2) // cfg.hop, 0, n - 1)
    v_s = voiced[frame_of]
    noise = np.random.default_rng(cfg.noise_seed).standard_normal(n_samples)
    if not voiced.any():
        return noise
    idx = np.flatnonzero(voiced)
    f_s = np.interp(t, centers[idx], hz[idx])
    phase = np.cumsum(f_s / cfg.sample_rate)
    wraps = np.floor(phase)
    pulses = np.zeros(n_samples)
    pulses[1:] = wraps[1:] != wraps[:-1]
    # unit power per sample, matching the noise
    pulses *= np.sqrt(cfg.sample_rate / f_s)
    return np.where(v_s, pulses, noise)


def synthesize(
    units,
    f0: PitchTrack,
    e,
    speaker: int,
    codebook: Codebook,
    cfg: SynthConfig = SynthConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    n_speakers: int = 1,
) -> Waveform:
    """Render frame-rate units with F0 into a waveform peak-normalized to ``cfg.peak``."""
    cfg.validate()
    cond = align_conditioning(units, f0, e, speaker, max(n_speakers, speaker + 1))
    u = cond[:, 0].astype(np.int64)
    if u.min() < 0 or u.max() >= codebook.K:
        raise ValueError(f"unit id outside codebook of size {codebook.K}")
    hz, voiced = cond[:, 1], cond[:, 2] > 0
    n = u.size
    n_samples = n_samples_for(n, cfg)
    excitation = _excitation(hz, voiced, n_samples, cfg)
    env = _envelopes(codebook, feature_cfg, cfg.n_fft, cfg.sample_rate)

    grain = 2 * cfg.hop
    win = hann(grain)
    lead = grain // 2 - cfg.frame_len // 2
    padded = np.concatenate([np.zeros(lead), excitation, np.zeros(grain)])
    out = np.zeros(padded.shape[0])
    wsum = np.zeros(padded.shape[0])
    for i in range(n):
        # grain i is centered on analysis frame i's center
        a = i * cfg.hop
        seg = padded[a : a + grain] * win
        shaped = np.fft.irfft(np.fft.rfft(seg, cfg.n_fft) * env[u[i]], cfg.n_fft)[:grain]
        out[a : a + grain] += shaped
        wsum[a : a + grain] += win
    out = out[lead : lead + n_samples] / np.maximum(wsum[lead : lead + n_samples], 1e-3)
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out * (cfg.peak / peak)
    return Waveform(out, cfg.sample_rate)


@dataclass(frozen=True)
class Resynthesis:
    waveform: Waveform
    units: np.ndarray  # reduced unit ids
    durations: np.ndarray  # frames per reduced unit in the output
    f0: PitchTrack  # commanded frame-rate F0


def render(w: Waveform, mode: str, bundle, speaker: str, embedding=None, cfg: SynthConfig = SynthConfig()) -> Resynthesis:
    """Resynthesize ``w`` under one experiment condition.

    ``oracle`` keeps the tracked F0 and the observed unit durations;
    ``baseline`` uses the unconditioned predictors; ``proposed`` uses the
    conditioned predictors with ``embed(w)`` or the given donor ``embedding``.
    """
    from . import emotion, prosody
    from .features import extract_features, mean_normalize
    from .pitch import estimate_f0
    from .units import assign, expand, reduce

    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if bundle is None or not bundle.is_trained():
        raise ValueError("resynthesis needs a trained bundle")
    stats = bundle.speaker_stats.get(speaker)
    if stats is None:
        raise KeyError(f"no F0 statistics for speaker {speaker!r}")
    spk_index = bundle.speaker_index(speaker)
    feats = extract_features(w, bundle.feature_cfg)
    r = reduce(assign(mean_normalize(feats), bundle.codebook))
    e = emotion.embed(bundle.emotion, feats) if embedding is None else np.asarray(embedding, dtype=np.float64)

    if mode == "oracle":
        durations = r.durations
        f0 = estimate_f0(w)
    else:
        dur_m, pitch_m = (bundle.duration, bundle.pitch) if mode == "proposed" else (bundle.duration_base, bundle.pitch_base)
        durations = prosody.predict_durations(dur_m, r.units, e)
        f0 = prosody.predict_pitch(pitch_m, expand(r, durations), e, stats, bundle.grid)
    units = expand(r, durations)
    out = synthesize(units, f0, e, spk_index, bundle.codebook, cfg, bundle.feature_cfg, len(bundle.speakers))
    return Resynthesis(out, r.units, durations, f0)


def resynthesize(w: Waveform, mode: str, bundle, speaker: str, embedding=None, cfg: SynthConfig = SynthConfig()) -> Waveform:
    return render(w, mode, bundle, speaker, embedding, cfg).waveform
