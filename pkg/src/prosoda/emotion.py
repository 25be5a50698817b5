"""Emotion classifier with a 96-dim bottleneck; its pooled bottleneck is the emotion embedding.

Architecture over frame features::

    conv1d(k=5) -> relu -> conv1d(k=5) -> relu -> dense(->96)   [bottleneck]
    -> mean_pool_time -> dense(96->4) -> softmax
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .corpus import EMOTIONS
from .features import FeatureSeq

log = logging.getLogger(__name__)

EMBED_DIM = 96
N_CLASSES = len(EMOTIONS)


@dataclass(frozen=True)
class EmotionConfig:
    hidden: int = 32
    kernel: int = 5
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0


@dataclass
class EmotionModel:
    network: nn.Network
    feature_mean: np.ndarray
    feature_std: np.ndarray
    labels: tuple = EMOTIONS
    feature_kind: str = "logmel"
    meta: dict = field(default_factory=dict)

    # index of the mean_pool_time layer; the embedding is read right after it
    @property
    def pool_layer(self) -> int:
        return next(i for i, l in enumerate(self.network.spec) if l["type"] == "mean_pool_time")

    def to_bytes(self) -> bytes:
        head = json.dumps(
            {
                "labels": list(self.labels),
                "feature_kind": self.feature_kind,
                "meta": self.meta,
                "dim": int(self.feature_mean.shape[0]),
            },
            sort_keys=True,
        ).encode()
        norm = np.concatenate([self.feature_mean, self.feature_std]).astype("<f8").tobytes()
        return len(head).to_bytes(4, "little") + head + norm + self.network.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmotionModel":
        n = int.from_bytes(data[:4], "little")
        head = json.loads(data[4 : 4 + n].decode())
        dim = head["dim"]
        pos = 4 + n
        norm = np.frombuffer(data[pos : pos + 16 * dim], dtype="<f8").astype(np.float64)
        net = nn.Network.from_bytes(data[pos + 16 * dim :])
        return cls(net, norm[:dim], norm[dim:], tuple(head["labels"]), head["feature_kind"], head["meta"])


def _vectors(f):
    return f.vectors if isinstance(f, FeatureSeq) else np.asarray(f, dtype=np.float64)


def build_network(in_dim, cfg: EmotionConfig) -> nn.Network:
    spec = [
        nn.conv1d(in_dim, cfg.hidden, cfg.kernel),
        nn.relu(),
        nn.conv1d(cfg.hidden, cfg.hidden, cfg.kernel),
        nn.relu(),
        nn.dense(cfg.hidden, EMBED_DIM),
        nn.mean_pool_time(),
        nn.dense(EMBED_DIM, N_CLASSES),
        nn.softmax(),
    ]
    return nn.Network(spec, in_dim, seed=cfg.seed)


def class_balance(labels) -> dict:
    counts = Counter(int(l) for l in labels)
    return {EMOTIONS[k]: counts.get(k, 0) for k in range(N_CLASSES)}


def _normalize(m: EmotionModel, f):
    x = _vectors(f)
    if x.ndim != 2 or x.shape[1] != m.feature_mean.shape[0]:
        raise ValueError(f"feature dim {x.shape[-1]} != model dim {m.feature_mean.shape[0]}")
    if x.shape[0] == 0:
        raise ValueError("empty feature sequence")
    return (x - m.feature_mean) / m.feature_std


def accuracy(m: EmotionModel, dataset) -> float:
    if not dataset:
        return float("nan")
    hits = sum(int(np.argmax(classify(m, item[0])) == item[1]) for item in dataset)
    return hits / len(dataset)


def train_emotion(dataset, cfg: EmotionConfig = EmotionConfig(), eval_set=None, feature_kind="logmel") -> EmotionModel:
    """Train the classifier with cross-entropy.

    ``dataset`` and ``eval_set`` hold ``(features, label, language)`` items;
    the caller performs the train/eval split. The returned model's ``meta``
    records class balance, the loss curve and eval accuracy.
    """
    if not dataset:
        raise ValueError("empty emotion dataset")
    labels = [int(item[1]) for item in dataset]
    if len(set(labels)) < 2:
        raise ValueError("emotion training needs at least two classes")
    balance = class_balance(labels)
    log.info("emotion class balance: %s", balance)

    stacked = np.concatenate([_vectors(item[0]) for item in dataset], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0) + 1e-6
    net = build_network(stacked.shape[1], cfg)
    model = EmotionModel(net, mean, std, EMOTIONS, feature_kind)

    xs = [(_vectors(item[0]) - mean) / std for item in dataset]
    rng = np.random.default_rng([cfg.seed, 17])
    opt = nn.Adam(lr=cfg.lr, weight_decay=cfg.weight_decay)
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xs))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [(xs[i], labels[i]) for i in order[lo : lo + cfg.batch_size]]
            total += nn.train_step(net, batch, "cross_entropy", opt) * len(batch)
        curve.append(total / len(xs))
    model.meta = {
        "class_balance": balance,
        "loss_curve": [round(c, 6) for c in curve],
        "train_accuracy": accuracy(model, dataset),
        "eval_accuracy": accuracy(model, eval_set) if eval_set else None,
        "languages": sorted({str(item[2]) for item in dataset}) if len(dataset[0]) > 2 else [],
    }
    log.info("emotion model: train acc %.3f eval acc %s", model.meta["train_accuracy"], model.meta["eval_accuracy"])
    return model


def classify(m: EmotionModel, f) -> np.ndarray:
    """Class probabilities (sums to 1)."""
    return nn.forward(m.network, _normalize(m, f))


def embed(m: EmotionModel, f) -> np.ndarray:
    """Mean-pooled bottleneck activations, a 96-dim vector."""
    return nn.forward(m.network, _normalize(m, f), stop=m.pool_layer + 1)
