"""Model bundle: one versioned file holding every trained component.

Layout (little endian)::

    b"PRSD" | u32 version | u32 n_sections
    n_sections x ( u16 name_len | name | u64 blob_len | blob )

The ``index`` section is JSON with the sha256 of every other section and
the cross-component facts (K, d, feature dim) verified on load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .emotion import EmotionModel
from .features import FeatureConfig
from .pitch import BinGrid, SpeakerStats
from .prosody import DurationModel, PitchModel
from .units import Codebook

MAGIC = b"PRSD"
VERSION = 1


class BundleError(ValueError):
    pass


def codebook_to_bytes(c: Codebook) -> bytes:
    head = json.dumps({"K": c.K, "dim": c.feature_dim, "seed": c.seed}, sort_keys=True).encode()
    return len(head).to_bytes(4, "little") + head + c.centroids.astype("<f8").tobytes()


def codebook_from_bytes(data: bytes) -> Codebook:
    n = int.from_bytes(data[:4], "little")
    head = json.loads(data[4 : 4 + n].decode())
    flat = np.frombuffer(data[4 + n :], dtype="<f8").astype(np.float64)
    if flat.size != head["K"] * head["dim"]:
        raise BundleError("codebook blob size does not match its header")
    return Codebook(flat.reshape(head["K"], head["dim"]), head["seed"])


@dataclass
class ModelBundle:
    feature_cfg: FeatureConfig
    codebook: Codebook
    emotion: EmotionModel
    duration: DurationModel
    pitch: PitchModel
    duration_base: DurationModel
    pitch_base: PitchModel
    grid: BinGrid
    speaker_stats: dict  # speaker id -> SpeakerStats
    ser: EmotionModel | None = None  # prosodic classifier for evaluating resyntheses
    meta: dict = field(default_factory=dict)

    @property
    def speakers(self) -> list:
        return sorted(self.speaker_stats)

    def speaker_index(self, speaker: str) -> int:
        return self.speakers.index(speaker)

    def is_trained(self) -> bool:
        return all(x is not None for x in (self.codebook, self.emotion, self.duration, self.pitch))

    def check(self):
        """Raise :class:`BundleError` when components disagree."""
        K = self.codebook.K
        for name, m in (("duration", self.duration), ("pitch", self.pitch), ("duration_base", self.duration_base), ("pitch_base", self.pitch_base)):
            if m.K != K:
                raise BundleError(f"{name} model vocabulary {m.K} != codebook K {K}")
        for name, m in (("pitch", self.pitch), ("pitch_base", self.pitch_base)):
            if m.network.out_width != self.grid.d or not np.array_equal(m.grid.edges, self.grid.edges):
                raise BundleError(f"{name} model output width {m.network.out_width} != bin grid d {self.grid.d}")
        if self.codebook.feature_dim != self.feature_cfg.n_mels:
            raise BundleError("codebook dimension does not match the feature configuration")
        if self.emotion.feature_mean.shape[0] != self.feature_cfg.n_mels:
            raise BundleError("emotion model input does not match the feature configuration")

    def sections(self) -> dict:
        stats = {
            k: {"speaker_id": s.speaker_id, "mean_f0": s.mean_f0, "std_f0": s.std_f0, "n_voiced_frames": s.n_voiced_frames}
            for k, s in sorted(self.speaker_stats.items())
        }
        out = {
            "features": json.dumps(self.feature_cfg.to_dict(), sort_keys=True).encode(),
            "codebook": codebook_to_bytes(self.codebook),
            "emotion": self.emotion.to_bytes(),
            "duration": self.duration.to_bytes(),
            "pitch": self.pitch.to_bytes(),
            "duration_base": self.duration_base.to_bytes(),
            "pitch_base": self.pitch_base.to_bytes(),
            "grid": self.grid.edges.astype("<f8").tobytes(),
            "speaker_stats": json.dumps(stats, sort_keys=True).encode(),
            "meta": json.dumps(self.meta, sort_keys=True).encode(),
        }
        if self.ser is not None:
            out["ser"] = self.ser.to_bytes()
        return out

    def component_hashes(self) -> dict:
        return {k: hashlib.sha256(v).hexdigest() for k, v in self.sections().items()}

    def to_bytes(self) -> bytes:
        self.check()
        secs = self.sections()
        index = {
            "hashes": {k: hashlib.sha256(v).hexdigest() for k, v in secs.items()},
            "K": self.codebook.K,
            "d": self.grid.d,
            "feature_dim": self.codebook.feature_dim,
        }
        secs = {"index": json.dumps(index, sort_keys=True).encode(), **secs}
        parts = [MAGIC, struct.pack("<II", VERSION, len(secs))]
        for name, blob in secs.items():
            raw = name.encode()
            parts += [struct.pack("<H", len(raw)), raw, struct.pack("<Q", len(blob)), blob]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelBundle":
        if data[:4] != MAGIC:
            raise BundleError("not a model bundle (bad magic bytes)")
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise BundleError(f"unsupported bundle version {version}")
        pos, secs = 12, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2 : pos + 2 + n].decode()
            (size,) = struct.unpack_from("<Q", data, pos + 2 + n)
            start = pos + 10 + n
            if start + size > len(data):
                raise BundleError(f"section {name!r} is truncated")
            secs[name] = data[start : start + size]
            pos = start + size
        if "index" not in secs:
            raise BundleError("bundle has no index section")
        index = json.loads(secs.pop("index").decode())
        for name, digest in index["hashes"].items():
            if name not in secs:
                raise BundleError(f"missing section {name!r}")
            if hashlib.sha256(secs[name]).hexdigest() != digest:
                raise BundleError(f"section {name!r} fails its hash check")
        stats = {
            k: SpeakerStats(v["speaker_id"], v["mean_f0"], v["std_f0"], v["n_voiced_frames"])
            for k, v in json.loads(secs["speaker_stats"].decode()).items()
        }
        b = cls(
            feature_cfg=FeatureConfig(**json.loads(secs["features"].decode())),
            codebook=codebook_from_bytes(secs["codebook"]),
            emotion=EmotionModel.from_bytes(secs["emotion"]),
            duration=DurationModel.from_bytes(secs["duration"]),
            pitch=PitchModel.from_bytes(secs["pitch"]),
            duration_base=DurationModel.from_bytes(secs["duration_base"]),
            pitch_base=PitchModel.from_bytes(secs["pitch_base"]),
            grid=BinGrid(np.frombuffer(secs["grid"], dtype="<f8").astype(np.float64)),
            speaker_stats=stats,
            ser=EmotionModel.from_bytes(secs["ser"]) if "ser" in secs else None,
            meta=json.loads(secs["meta"].decode()),
        )
        if (index["K"], index["d"], index["feature_dim"]) != (b.codebook.K, b.grid.d, b.codebook.feature_dim):
            raise BundleError("bundle index disagrees with its components")
        b.check()
        return b

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelBundle":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()
