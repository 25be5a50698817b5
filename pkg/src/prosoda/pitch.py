"""F0 tracking, per-speaker statistics and the binned pitch representation.

The tracker computes a normalized cross-correlation function (NCCF) per
20 ms frame, keeps the strongest lag peaks as F0 candidates, and picks one
candidate per voiced frame with a Viterbi search whose transition cost
penalizes log-frequency jumps and octave jumps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .audio import FRAME_LEN, HOP, Waveform, n_frames_for
from .features import HOP_SECONDS


@dataclass(frozen=True)
class TrackerParams:
    f_min: float = 60.0
    f_max: float = 400.0
    voicing_threshold: float = 0.30
    transition_weight: float = 0.35
    octave_cost: float = 0.5
    # log-frequency jumps larger than log(octave_ratio) pay octave_cost
    octave_ratio: float = 1.5
    n_candidates: int = 8
    # favours the shortest period among near-equal peaks (period multiples)
    lag_weight: float = 0.2
    silence_rms: float = 1e-4

    def validate(self):
        if not 50.0 <= self.f_min < self.f_max <= 600.0:
            raise ValueError(f"need 50 <= f_min < f_max <= 600, got {self.f_min}, {self.f_max}")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be positive")


@dataclass(frozen=True)
class PitchTrack:
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_seconds: float = HOP_SECONDS

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape or f0.ndim != 1:
            raise ValueError("f0_hz and voiced must be equal-length 1-D arrays")
        if np.any((f0 > 0) != voiced):
            raise ValueError("f0_hz must be positive exactly on voiced frames")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self):
        return self.f0_hz.shape[0]

    @classmethod
    def from_hz(cls, f0_hz, hop_seconds=HOP_SECONDS):
        """Build a track treating non-positive or NaN values as unvoiced."""
        f0 = np.nan_to_num(np.asarray(f0_hz, dtype=np.float64), nan=0.0)
        f0 = np.where(f0 > 0, f0, 0.0)
        return cls(f0, f0 > 0, hop_seconds)


@dataclass(frozen=True)
class SpeakerStats:
    speaker_id: int
    mean_f0: float
    std_f0: float
    n_voiced_frames: int


@dataclass(frozen=True)
class StandardizedTrack:
    """Speaker-standardized F0; unvoiced frames hold NaN.

    ``residual_hz`` is the rounding left over by the forward transform, so
    :func:`destandardize` reproduces the source track bit for bit. It is zero
    for values that did not come from :func:`standardize` (model output).
    """

    values: np.ndarray
    voiced: np.ndarray
    residual_hz: np.ndarray | None = None


@dataclass(frozen=True)
class BinGrid:
    edges: np.ndarray
    centers: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly ascending with at least 2 entries")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "centers", 0.5 * (edges[:-1] + edges[1:]))

    @property
    def d(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def uniform(cls, d=32, lo=-4.0, hi=4.0):
        return cls(np.linspace(lo, hi, d + 1))


class InsufficientVoicingError(ValueError):
    pass


# --------------------------------------------------------------------- tracking


def _peak_candidates(row, lag_min, n_cand):
    """Parabolically refined local maxima of one NCCF row, strongest first."""
    inner = row[1:-1]
    is_peak = (inner > row[:-2]) & (inner >= row[2:]) & (inner > 0)
    idx = np.flatnonzero(is_peak) + 1
    if idx.size == 0:
        return np.zeros(0), np.zeros(0)
    left, mid, right = row[idx - 1], row[idx], row[idx + 1]
    curv = left - 2.0 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(curv < 0, 0.5 * (left - right) / curv, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    value = np.minimum(mid - 0.25 * (left - right) * delta, 1.0)
    lag = lag_min + idx + delta
    order = np.argsort(-value, kind="stable")[:n_cand]
    return lag[order], value[order]


def candidate_table(w: Waveform, params: TrackerParams = TrackerParams()):
    """Per-frame candidate log-F0 values, local costs and best NCCF.

    Returns ``(log_f0, local_cost, best_nccf)`` where missing candidates are
    NaN / inf.
    """
    params.validate()
    x = w.samples - (w.samples.mean() if len(w) else 0.0)
    sr = w.sample_rate
    n = n_frames_for(len(x), FRAME_LEN, HOP)
    lag_min = int(math.floor(sr / params.f_max))
    lag_max = int(math.ceil(sr / params.f_min))
    padded = np.concatenate([x, np.zeros(lag_max + 1)])
    nccf = _kernels.nccf_matrix(padded, n, HOP, FRAME_LEN, lag_min, lag_max)

    c = params.n_candidates
    log_f0 = np.full((n, c), np.nan)
    cost = np.full((n, c), np.inf)
    best = np.zeros(n)
    starts = np.arange(n) * HOP
    frames = np.lib.stride_tricks.sliding_window_view(padded, FRAME_LEN)[starts] if n else None
    for i in range(n):
        if np.sqrt(np.mean(frames[i] ** 2)) < params.silence_rms:
            continue
        lags, vals = _peak_candidates(nccf[i], lag_min, c)
        if vals.size == 0:
            continue
        f0 = np.clip(sr / lags, params.f_min, params.f_max)
        k = vals.size
        log_f0[i, :k] = np.log(f0)
        cost[i, :k] = 1.0 - vals + params.lag_weight * lags / lag_max
        best[i] = vals[0]
    return log_f0, cost, best


def transition_cost(a, b, params: TrackerParams = TrackerParams()):
    diff = abs(a - b)
    extra = params.octave_cost if diff > math.log(params.octave_ratio) else 0.0
    return params.transition_weight * diff + extra


def path_cost(local_cost, log_f0, path, params: TrackerParams = TrackerParams()):
    total = float(local_cost[0, path[0]])
    for t in range(1, len(path)):
        total += transition_cost(log_f0[t - 1, path[t - 1]], log_f0[t, path[t]], params)
        total += float(local_cost[t, path[t]])
    return total


def best_path(local_cost, log_f0, params: TrackerParams = TrackerParams()):
    """Minimum-cost candidate index per frame (dynamic programming)."""
    return _kernels.viterbi(
        local_cost,
        log_f0,
        params.transition_weight,
        params.octave_cost,
        params.octave_ratio,
    )


def brute_force_path(local_cost, log_f0, params: TrackerParams = TrackerParams()):
    """Exhaustive search over all finite candidate paths; for verification."""
    n = local_cost.shape[0]
    options = [np.flatnonzero(np.isfinite(local_cost[t])) for t in range(n)]
    best, best_cost = None, math.inf
    for combo in itertools.product(*options):
        cost = path_cost(local_cost, log_f0, combo, params)
        if cost < best_cost:
            best, best_cost = np.array(combo), cost
    return best, best_cost


def estimate_f0(w: Waveform, f_min: float = 60.0, f_max: float = 400.0, params=None) -> PitchTrack:
    """Track F0 at a 20 ms hop; one value per analysis frame."""
    if len(w) == 0:
        raise ValueError("empty waveform")
    if params is None:
        params = TrackerParams(f_min=f_min, f_max=f_max)
    log_f0, cost, best = candidate_table(w, params)
    voiced = best >= params.voicing_threshold
    f0 = np.zeros(len(best))
    # independent searches over each run of voiced frames
    t = 0
    while t < len(voiced):
        if not voiced[t]:
            t += 1
            continue
        end = t
        while end < len(voiced) and voiced[end]:
            end += 1
        path = best_path(cost[t:end], log_f0[t:end], params)
        f0[t:end] = np.exp(log_f0[np.arange(t, end), path])
        t = end
    return PitchTrack(f0, voiced)


# ------------------------------------------------------ speaker normalization


def compute_speaker_stats(tracks, speaker_id: int) -> SpeakerStats:
    """Population mean/std of voiced F0 over all ``tracks``.

    Sums are exactly rounded (``math.fsum``) so the result does not depend on
    the order of the tracks.
    """
    values = [t.f0_hz[t.voiced] for t in tracks]
    values = np.concatenate(values) if values else np.zeros(0)
    n = values.shape[0]
    if n < 2:
        raise InsufficientVoicingError(f"speaker {speaker_id}: {n} voiced frames, need >= 2")
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / n
    std = math.sqrt(var)
    if not std > 0:
        raise InsufficientVoicingError(f"speaker {speaker_id}: voiced F0 has zero variance")
    return SpeakerStats(int(speaker_id), mean, std, int(n))


def standardize(t: PitchTrack, s: SpeakerStats) -> StandardizedTrack:
    if not s.std_f0 > 0:
        raise ValueError("speaker std_f0 must be positive")
    z = np.full(len(t), np.nan)
    v = t.voiced
    z[v] = (t.f0_hz[v] - s.mean_f0) / s.std_f0
    residual = np.zeros(len(t))
    # by Sterbenz' lemma the difference below is exact, so adding it back is too
    residual[v] = t.f0_hz[v] - (z[v] * s.std_f0 + s.mean_f0)
    return StandardizedTrack(z, v.copy(), residual)


def destandardize(z: StandardizedTrack, s: SpeakerStats) -> PitchTrack:
    if not s.std_f0 > 0:
        raise ValueError("speaker std_f0 must be positive")
    f0 = np.zeros(z.values.shape[0])
    v = z.voiced
    f0[v] = z.values[v] * s.std_f0 + s.mean_f0
    if z.residual_hz is not None:
        f0[v] = f0[v] + z.residual_hz[v]
    voiced = v & (f0 > 0)
    return PitchTrack(np.where(voiced, f0, 0.0), voiced)


# ------------------------------------------------------------------ bin codes


def bin_index(z, g: BinGrid):
    """Bin whose half-open interval holds ``z``; out-of-range values clamp."""
    idx = np.searchsorted(g.edges, z, side="right") - 1
    return np.clip(idx, 0, g.d - 1)


def encode_bins(z: float, g: BinGrid) -> np.ndarray:
    out = np.zeros(g.d)
    out[int(bin_index(z, g))] = 1.0
    return out


def encode_track(z: StandardizedTrack, g: BinGrid):
    """One-hot targets (n_frames, d); unvoiced rows are zero. Also returns the voicing mask."""
    out = np.zeros((z.values.shape[0], g.d))
    rows = np.flatnonzero(z.voiced)
    out[rows, bin_index(z.values[rows], g)] = 1.0
    return out, z.voiced.copy()


def decode_bins(a, g: BinGrid, activation_floor: float = 0.1):
    """Weighted average of bin centers; NaN (unvoiced) when total activation is too low.

    Accepts a single activation vector or a (n_frames, d) matrix.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != g.d:
        raise ValueError(f"activation width {a.shape[-1]} != grid size {g.d}")
    mass = a.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = (a @ g.centers) / mass
    value = np.where(mass >= activation_floor, value, np.nan)
    return float(value) if value.ndim == 0 else value
