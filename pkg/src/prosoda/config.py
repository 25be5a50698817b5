"""Flat ``key = value`` configuration with command-line overrides.

A config file is an INI file whose keys live in a ``[prosoda]`` section (a
file without section headers is accepted too). Every key is a field of
:class:`PipelineConfig`; unknown keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace

from .emotion import EmotionConfig
from .pitch import BinGrid, TrackerParams
from .prosody import PredictorConfig
from .synth import SynthConfig

SECTION = "prosoda"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    # synthetic corpus
    n_languages: int = 2
    n_speakers: int = 3
    utts_per_cell: int = 10
    eval_ratio: float = 0.2
    # content units
    K: int = 100
    kmeans_max_iter: int = 300
    # F0
    f_min: float = 60.0
    f_max: float = 400.0
    n_bins: int = 32
    bin_lo: float = -4.0
    bin_hi: float = 4.0
    activation_floor: float = 0.1
    # emotion encoder
    emotion_hidden: int = 32
    emotion_epochs: int = 40
    emotion_lr: float = 1e-3
    emotion_batch: int = 8
    # prosody predictors
    unit_dim: int = 64
    pred_hidden: int = 64
    pred_kernel: int = 5
    pred_epochs: int = 30
    pred_lr: float = 2e-3
    pred_batch: int = 8
    # prosodic emotion classifier used to score resyntheses
    ser_epochs: int = 60
    ser_lr: float = 2e-3
    # experiment
    n_donor_draws: int = 5
    noise_seed: int = 0

    def emotion_config(self, seed=None) -> EmotionConfig:
        return EmotionConfig(
            hidden=self.emotion_hidden,
            epochs=self.emotion_epochs,
            batch_size=self.emotion_batch,
            lr=self.emotion_lr,
            seed=self.seed if seed is None else seed,
        )

    def ser_config(self) -> EmotionConfig:
        return EmotionConfig(hidden=self.emotion_hidden, epochs=self.ser_epochs, batch_size=self.emotion_batch, lr=self.ser_lr, seed=self.seed)

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(
            unit_dim=self.unit_dim,
            hidden=self.pred_hidden,
            kernel=self.pred_kernel,
            epochs=self.pred_epochs,
            batch_size=self.pred_batch,
            lr=self.pred_lr,
            seed=self.seed,
        )

    def tracker(self) -> TrackerParams:
        return TrackerParams(f_min=self.f_min, f_max=self.f_max)

    def grid(self) -> BinGrid:
        return BinGrid.uniform(self.n_bins, self.bin_lo, self.bin_hi)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(noise_seed=self.noise_seed)

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _coerce(key, value: str):
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    try:
        return _CASTS[_TYPES[key]](value.strip())
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {value!r} as {_TYPES[key]}") from exc


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not key=value")
        out[key.strip()] = _coerce(key.strip(), value)
    return out


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Defaults, then the file (if any), then ``overrides`` (``key=value`` strings or a dict)."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.lstrip().startswith("["):
            text = f"[{SECTION}]\n" + text
        parser.read_string(text)
        for section in parser.sections():
            for key, value in parser.items(section):
                values[key] = _coerce(key, value)
    if isinstance(overrides, dict):
        values.update({k: _coerce(k, str(v)) for k, v in overrides.items()})
    else:
        values.update(parse_overrides(overrides))
    return replace(PipelineConfig(), **values)


def dump_config(cfg: PipelineConfig) -> str:
    lines = [f"[{SECTION}]"] + [f"{k} = {v}" for k, v in cfg.to_dict().items()]
    return "\n".join(lines) + "\n"
