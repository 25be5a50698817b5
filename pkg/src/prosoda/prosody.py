"""Duration and pitch predictors conditioned on the emotion embedding.

Both models read a ``(T, 1 + 96)`` input: column 0 holds unit ids, the other
columns the standardized emotion embedding broadcast to every step. The
embedding table turns ids into vectors and the conditioning columns ride
along into the convolution stack::

    embedding(K, e) -> conv1d -> relu -> conv1d -> relu -> dense(->1)        duration
    embedding(K, e) -> conv1d -> relu -> conv1d -> relu -> dense(->d) -> sigmoid   pitch

The unconditioned baseline is the same architecture trained and run with the
conditioning columns held at zero.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .emotion import EMBED_DIM
from .pitch import BinGrid, PitchTrack, SpeakerStats, StandardizedTrack, decode_bins, destandardize

log = logging.getLogger(__name__)


# exp(20) frames is far beyond any utterance; the cap keeps the integer cast finite
MAX_LOG_DURATION = 20.0


@dataclass(frozen=True)
class PredictorConfig:
    unit_dim: int = 64
    hidden: int = 64
    kernel: int = 5
    epochs: int = 30
    batch_size: int = 8
    lr: float = 2e-3
    seed: int = 0


@dataclass
class _Predictor:
    network: nn.Network
    K: int
    cond_mean: np.ndarray
    cond_std: np.ndarray
    conditioned: bool = True
    meta: dict = field(default_factory=dict)

    def _inputs(self, units, e):
        u = np.asarray(units, dtype=np.int64)
        if u.ndim != 1 or u.size == 0:
            raise ValueError("need a nonempty 1-D unit sequence")
        if u.min() < 0 or u.max() >= self.K:
            raise ValueError(f"unit id out of range [0, {self.K})")
        x = np.zeros((u.size, 1 + EMBED_DIM))
        x[:, 0] = u
        if self.conditioned:
            e = np.asarray(e, dtype=np.float64)
            if e.shape != (EMBED_DIM,):
                raise ValueError(f"emotion embedding must have shape ({EMBED_DIM},), got {e.shape}")
            x[:, 1:] = (e - self.cond_mean) / self.cond_std
        return x

    def _head(self) -> dict:
        return {"K": self.K, "conditioned": self.conditioned, "meta": self.meta}

    def to_bytes(self) -> bytes:
        head = json.dumps(self._head(), sort_keys=True).encode()
        norm = np.concatenate([self.cond_mean, self.cond_std]).astype("<f8").tobytes()
        return len(head).to_bytes(4, "little") + head + norm + self.network.to_bytes()

    @classmethod
    def _split(cls, data: bytes):
        n = int.from_bytes(data[:4], "little")
        head = json.loads(data[4 : 4 + n].decode())
        pos = 4 + n
        norm = np.frombuffer(data[pos : pos + 16 * EMBED_DIM], dtype="<f8").astype(np.float64)
        net = nn.Network.from_bytes(data[pos + 16 * EMBED_DIM :])
        return head, norm[:EMBED_DIM], norm[EMBED_DIM:], net


@dataclass
class DurationModel(_Predictor):
    @classmethod
    def from_bytes(cls, data: bytes) -> "DurationModel":
        head, mean, std, net = cls._split(data)
        return cls(net, head["K"], mean, std, head["conditioned"], head["meta"])


@dataclass
class PitchModel(_Predictor):
    grid: BinGrid = field(default_factory=BinGrid.uniform)

    def _head(self) -> dict:
        head = super()._head()
        head["edges"] = self.grid.edges.tolist()
        return head

    @classmethod
    def from_bytes(cls, data: bytes) -> "PitchModel":
        head, mean, std, net = cls._split(data)
        return cls(net, head["K"], mean, std, head["conditioned"], head["meta"], BinGrid(np.array(head["edges"])))


def _stack(in_dim, cfg: PredictorConfig, K):
    return [
        nn.embedding(K, cfg.unit_dim),
        nn.conv1d(cfg.unit_dim + in_dim - 1, cfg.hidden, cfg.kernel),
        nn.relu(),
        nn.conv1d(cfg.hidden, cfg.hidden, cfg.kernel),
        nn.relu(),
    ]


def _cond_stats(embeddings, conditioned):
    if not conditioned:
        return np.zeros(EMBED_DIM), np.ones(EMBED_DIM)
    e = np.stack([np.asarray(x, dtype=np.float64) for x in embeddings])
    std = e.std(axis=0)
    # constant dimensions carry no information; leave them unscaled
    return e.mean(axis=0), np.where(std > 1e-6, std, 1.0)


def _fit(net, items, loss, cfg: PredictorConfig):
    rng = np.random.default_rng([cfg.seed, 29])
    opt = nn.Adam(lr=cfg.lr)
    curve = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(items))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[lo : lo + cfg.batch_size]]
            total += nn.train_step(net, batch, loss, opt) * len(batch)
        curve.append(round(total / len(items), 6))
    return curve


def train_duration(pairs, K: int, cfg: PredictorConfig = PredictorConfig(), conditioned: bool = True) -> DurationModel:
    """MSE regression of log duration per reduced unit.

    ``pairs`` holds ``(ReducedUnits, embedding)``. With ``conditioned=False``
    the embedding columns are zero at train and inference time.
    """
    if not pairs:
        raise ValueError("empty duration corpus")
    for r, _ in pairs:
        if np.any(r.durations < 1):
            raise ValueError("durations must be at least 1")
    mean, std = _cond_stats([e for _, e in pairs], conditioned)
    spec = _stack(1 + EMBED_DIM, cfg, K) + [nn.dense(cfg.hidden, 1)]
    model = DurationModel(nn.Network(spec, 1 + EMBED_DIM, seed=cfg.seed), K, mean, std, conditioned)
    items = [(model._inputs(r.units, e), np.log(r.durations.astype(np.float64))[:, None]) for r, e in pairs]
    curve = _fit(model.network, items, "mse", cfg)
    model.meta = {"loss_curve": curve, "config": asdict(cfg)}
    log.info("duration model (conditioned=%s): final loss %.4f", conditioned, curve[-1])
    return model


def predict_log_durations(m: DurationModel, units, e) -> np.ndarray:
    return nn.forward(m.network, m._inputs(units, e))[:, 0]


def predict_durations(m: DurationModel, units, e) -> np.ndarray:
    """Integer repetitions per unit: ``exp`` of the output rounded half up, at least 1."""
    y = np.minimum(predict_log_durations(m, units, e), MAX_LOG_DURATION)
    return np.maximum(np.floor(np.exp(y) + 0.5), 1).astype(np.int64)


def train_pitch(
    pairs, K: int, grid: BinGrid, cfg: PredictorConfig = PredictorConfig(), conditioned: bool = True
) -> PitchModel:
    """Masked binary cross-entropy against one-hot F0 bins at frame rate.

    ``pairs`` holds ``(expanded units, embedding, targets, voiced mask)``;
    targets come from :func:`prosoda.pitch.encode_track`.
    """
    if not pairs:
        raise ValueError("empty pitch corpus")
    for u, _, t, v in pairs:
        if len(u) != len(t) or len(u) != len(v):
            raise ValueError(f"unit length {len(u)} does not match target length {len(t)}")
        if np.asarray(t).shape[1] != grid.d:
            raise ValueError("target width must equal the bin grid size")
    mean, std = _cond_stats([p[1] for p in pairs], conditioned)
    spec = _stack(1 + EMBED_DIM, cfg, K) + [nn.dense(cfg.hidden, grid.d), nn.sigmoid()]
    model = PitchModel(nn.Network(spec, 1 + EMBED_DIM, seed=cfg.seed), K, mean, std, conditioned, grid=grid)
    items = [(model._inputs(u, e), np.asarray(t, dtype=np.float64), np.asarray(v, dtype=np.float64)) for u, e, t, v in pairs]
    curve = _fit(model.network, items, "bce", cfg)
    model.meta = {"loss_curve": curve, "config": asdict(cfg)}
    log.info("pitch model (conditioned=%s): final loss %.4f", conditioned, curve[-1])
    return model


def pitch_activations(m: PitchModel, units, e) -> np.ndarray:
    """Sigmoid bin activations, shape (n_frames, d)."""
    return nn.forward(m.network, m._inputs(units, e))


def activations_to_track(a, s: SpeakerStats, g: BinGrid, activation_floor: float = 0.1) -> PitchTrack:
    z = decode_bins(np.atleast_2d(a), g, activation_floor)
    voiced = np.isfinite(z)
    return destandardize(StandardizedTrack(np.where(voiced, z, np.nan), voiced), s)


def predict_pitch(
    m: PitchModel, units, e, s: SpeakerStats, g: BinGrid, activation_floor: float = 0.1, hook=None
) -> PitchTrack:
    """Decoded F0 in Hz; frames whose total activation is below the floor are unvoiced.

    ``hook`` may replace the activation matrix before decoding (testing aid).
    """
    if g.d != m.grid.d or not np.array_equal(g.edges, m.grid.edges):
        raise ValueError(f"bin grid (d={g.d}) does not match the model's grid (d={m.grid.d})")
    a = pitch_activations(m, units, e)
    if hook is not None:
        a = np.asarray(hook(a), dtype=np.float64)
    return activations_to_track(a, s, g, activation_floor)

