"""End-to-end training and the experiment grid.

``train_all`` runs the stages in a fixed order (features, k-means, F0 and
speaker statistics, emotion encoder, predictors, prosodic classifier) and
tags any failure with the stage name. ``run_experiment`` resynthesizes the
held-out split under each condition and scores F0 concordance and emotion
recognition on the output.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import emotion, metrics, prosody
from .audio import read_wav
from .bundle import ModelBundle
from .config import PipelineConfig
from .corpus import EMOTIONS, read_manifest
from .features import FeatureConfig, extract_features, mean_normalize
from .pitch import PitchTrack, compute_speaker_stats, encode_track, estimate_f0, standardize
from .synth import render
from .units import assign, fit_kmeans, reduce

log = logging.getLogger(__name__)

STAGES = ("features", "kmeans", "f0", "emotion", "predictors", "ser")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, kind, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _records(manifest):
    if isinstance(manifest, (str, Path)):
        return read_manifest(manifest)
    return list(manifest)


def prosodic_features(track: PitchTrack, stats) -> np.ndarray:
    """Per-frame ``[z, voiced, delta z]`` with z the speaker-standardized F0 (0 when unvoiced)."""
    z = standardize(track, stats).values
    z = np.where(track.voiced, z, 0.0)
    dz = np.diff(z, prepend=z[:1])
    dz = np.where(track.voiced & np.roll(track.voiced, 1), dz, 0.0)
    return np.column_stack([z, track.voiced.astype(np.float64), dz])


@dataclass
class _Utt:
    record: object
    wave: object
    feats: object = None
    track: object = None


def _load(records, fcfg, tracker):
    out = []
    for r in records:
        w = read_wav(r.audio_path)
        out.append(_Utt(r, w, extract_features(w, fcfg), estimate_f0(w, params=tracker)))
    return out


def train_all(manifest, cfg: PipelineConfig = PipelineConfig(), feature_cfg: FeatureConfig = FeatureConfig()) -> ModelBundle:
    """Train every component on the manifest's train split."""
    records = _records(manifest)
    train = [r for r in records if r.split == "train"]
    held = [r for r in records if r.split == "eval"]
    if not train:
        raise StageError("features", "manifest has no training records")

    with _Stage("features"):
        feature_cfg.validate()
        tracker = cfg.tracker()
        tracker.validate()
        utts = _load(train, feature_cfg, tracker)
        held_utts = [_Utt(r, None, extract_features(read_wav(r.audio_path), feature_cfg)) for r in held]
        content = [mean_normalize(u.feats) for u in utts]

    with _Stage("kmeans"):
        codebook = fit_kmeans(content, cfg.K, cfg.seed, cfg.kmeans_max_iter)
        unit_seqs = [assign(c, codebook) for c in content]

    with _Stage("f0"):
        stats = {}
        for spk in sorted({u.record.speaker_id for u in utts}):
            tracks = [u.track for u in utts if u.record.speaker_id == spk]
            stats[spk] = compute_speaker_stats(tracks, len(stats))

    with _Stage("emotion"):
        data = [(u.feats, u.record.emotion, u.record.language) for u in utts]
        held_data = [(u.feats, u.record.emotion, u.record.language) for u in held_utts]
        emo = emotion.train_emotion(data, cfg.emotion_config(), held_data or None)
        embeds = [emotion.embed(emo, u.feats) for u in utts]

    with _Stage("predictors"):
        grid = cfg.grid()
        pcfg = cfg.predictor_config()
        dur_pairs = [(reduce(s), e) for s, e in zip(unit_seqs, embeds)]
        pitch_pairs = []
        for u, s, e in zip(utts, unit_seqs, embeds):
            target, mask = encode_track(standardize(u.track, stats[u.record.speaker_id]), grid)
            pitch_pairs.append((s, e, target, mask))
        models = {}
        for cond in (True, False):
            models[("d", cond)] = prosody.train_duration(dur_pairs, codebook.K, pcfg, conditioned=cond)
            models[("p", cond)] = prosody.train_pitch(pitch_pairs, codebook.K, grid, pcfg, conditioned=cond)

    with _Stage("ser"):
        ser_data = [
            (prosodic_features(u.track, stats[u.record.speaker_id]), u.record.emotion, u.record.language) for u in utts
        ]
        ser = emotion.train_emotion(ser_data, cfg.ser_config(), feature_kind="prosody")

    bundle = ModelBundle(
        feature_cfg=feature_cfg,
        codebook=codebook,
        emotion=emo,
        duration=models[("d", True)],
        pitch=models[("p", True)],
        duration_base=models[("d", False)],
        pitch_base=models[("p", False)],
        grid=grid,
        speaker_stats=stats,
        ser=ser,
        meta={"config": cfg.to_dict(), "n_train": len(train), "languages": sorted({r.language for r in train})},
    )
    bundle.check()
    return bundle


# ------------------------------------------------------------------ experiment


@dataclass
class Report:
    conditions: list
    # condition -> language -> emotion -> list of per-utterance CCC
    ccc: dict = field(default_factory=dict)
    # condition -> (confusion matrix, accuracy)
    ser: dict = field(default_factory=dict)
    n_dropped: dict = field(default_factory=dict)

    def cell(self, condition, language=None, emotion_id=None) -> float:
        vals = [
            v
            for lang, by_emo in self.ccc.get(condition, {}).items()
            if language is None or lang == language
            for emo, vs in by_emo.items()
            if emotion_id is None or emo == emotion_id
            for v in vs
        ]
        return float(np.mean(vals)) if vals else float("nan")

    def corpus_mean(self, condition, languages=None) -> float:
        vals = [
            v
            for lang, by_emo in self.ccc.get(condition, {}).items()
            if languages is None or lang in languages
            for vs in by_emo.values()
            for v in vs
        ]
        return float(np.mean(vals)) if vals else float("nan")

    def ccc_rows(self):
        rows = []
        for cond in self.conditions:
            for lang in sorted(self.ccc.get(cond, {})):
                for k, name in enumerate(EMOTIONS):
                    vs = self.ccc[cond][lang].get(k, [])
                    rows.append((cond, lang, name, float(np.mean(vs)) if vs else float("nan"), len(vs)))
        return rows

    def ccc_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["condition", "language", "emotion", "ccc", "n_utts"])
        for cond, lang, name, value, n in self.ccc_rows():
            w.writerow([cond, lang, name, f"{value:.6f}", n])
        return buf.getvalue()

    def ser_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["condition", "true"] + [f"pred_{e}" for e in EMOTIONS] + ["accuracy"])
        for cond, (m, acc) in self.ser.items():
            for k, name in enumerate(EMOTIONS):
                w.writerow([cond, name] + [int(x) for x in m[k]] + [f"{acc:.6f}"])
        return buf.getvalue()

    def text(self) -> str:
        lines = ["F0 concordance (CCC), mean over utterances", ""]
        head = f"{'condition':<14}{'language':<10}" + "".join(f"{e:>10}" for e in EMOTIONS) + f"{'mean':>10}"
        lines.append(head)
        for cond in self.conditions:
            for lang in sorted(self.ccc.get(cond, {})):
                cells = "".join(f"{self.cell(cond, lang, k):>10.3f}" for k in range(len(EMOTIONS)))
                lines.append(f"{cond:<14}{lang:<10}{cells}{self.cell(cond, lang):>10.3f}")
        if self.ser:
            lines += ["", "Emotion recognition on prosody (rows true, columns predicted)"]
            for cond, (m, acc) in self.ser.items():
                lines.append(f"{cond}: accuracy {acc:.3f}")
                lines.append(" " * 10 + "".join(f"{e:>9}" for e in EMOTIONS))
                for k, name in enumerate(EMOTIONS):
                    lines.append(f"{name:<10}" + "".join(f"{int(x):>9}" for x in m[k]))
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.text(), encoding="utf-8")
        (out / "ccc.tsv").write_text(self.ccc_tsv(), encoding="utf-8")
        if self.ser:
            (out / "ser.tsv").write_text(self.ser_tsv(), encoding="utf-8")


def _utt_ccc(ref_track, ref_durations, res, tracker):
    out_track = estimate_f0(res.waveform, params=tracker)
    x, y = metrics.align_tracks(ref_track, out_track, ref_durations, res.durations)
    if x.size < 2 or (np.ptp(x) == 0 and np.ptp(y) == 0):
        return None, out_track
    return metrics.ccc(x, y), out_track


def _ser_predict(bundle, track, speaker):
    p = emotion.classify(bundle.ser, prosodic_features(track, bundle.speaker_stats[speaker]))
    return int(np.argmax(p))


def parse_condition(c: str):
    if c in ("oracle", "baseline", "proposed"):
        return c, None
    if c.startswith("cross:") and len(c) > 6:
        return "proposed", c[6:]
    raise ValueError(f"unknown condition {c!r}")


def run_experiment(manifest, bundle: ModelBundle, conditions=("oracle", "baseline", "proposed"), cfg: PipelineConfig = PipelineConfig(), with_ser=True) -> Report:
    """Resynthesize the eval split per condition and score it.

    ``cross:<lang>`` conditions resynthesize every eval utterance of the other
    languages with embeddings of ``n_donor_draws`` distinct same-emotion
    donor utterances from ``<lang>`` (uniform, without replacement) and
    average their CCC.
    """
    records = [r for r in _records(manifest) if r.split == "eval"]
    if not records:
        raise ValueError("manifest has no eval records")
    if not bundle.is_trained():
        raise ValueError("bundle is not trained")
    parsed = [(c, *parse_condition(c)) for c in conditions]
    if with_ser and bundle.ser is None:
        raise ValueError("bundle has no prosodic classifier; rerun training or disable SER scoring")
    tracker = cfg.tracker()
    scfg = cfg.synth_config()
    utts = _load(records, bundle.feature_cfg, tracker)
    embeds = [emotion.embed(bundle.emotion, u.feats) for u in utts]
    ref_durs = [reduce(assign(mean_normalize(u.feats), bundle.codebook)).durations for u in utts]
    report = Report([c for c, _, _ in parsed])
    rng = np.random.default_rng([cfg.seed, 31])

    if with_ser:
        preds = [_ser_predict(bundle, u.track, u.record.speaker_id) for u in utts]
        report.ser["original"] = metrics.confusion_and_accuracy([u.record.emotion for u in utts], preds)

    for name, mode, donor in parsed:
        if donor is not None and not any(u.record.language == donor for u in utts):
            raise ValueError(f"condition {name}: no eval utterances in donor language {donor!r}")
        table = report.ccc.setdefault(name, {})
        truth, preds = [], []
        dropped = 0
        for i, u in enumerate(utts):
            r = u.record
            if donor is None:
                draws = [None if mode == "oracle" else embeds[i]]
            else:
                if r.language == donor:
                    continue
                pool = [j for j, v in enumerate(utts) if v.record.language == donor and v.record.emotion == r.emotion]
                if len(pool) < cfg.n_donor_draws:
                    raise ValueError(f"condition {name}: only {len(pool)} donors for {EMOTIONS[r.emotion]}")
                picks = rng.choice(len(pool), size=cfg.n_donor_draws, replace=False)
                draws = [embeds[pool[int(k)]] for k in picks]
            values = []
            for e in draws:
                res = render(u.wave, mode, bundle, r.speaker_id, e, scfg)
                value, out_track = _utt_ccc(u.track, ref_durs[i], res, tracker)
                if value is not None:
                    values.append(value)
                if with_ser and donor is None:
                    truth.append(r.emotion)
                    preds.append(_ser_predict(bundle, out_track, r.speaker_id))
            if values:
                table.setdefault(r.language, {}).setdefault(r.emotion, []).append(float(np.mean(values)))
            else:
                dropped += 1
        report.n_dropped[name] = dropped
        if with_ser and donor is None:
            report.ser[name] = metrics.confusion_and_accuracy(truth, preds)
    return report


# ------------------------------------------------------- language accuracy grid


def language_matrix(manifest, cfg: PipelineConfig = PipelineConfig(), feature_cfg: FeatureConfig = FeatureConfig()):
    """Emotion accuracy of models trained per language and on all languages jointly.

    Returns ``(train_sets, languages, matrix)`` with ``matrix[i][j]`` the
    accuracy of the model trained on ``train_sets[i]`` on eval language
    ``languages[j]``; the last train set is ``"all"``.
    """
    records = _records(manifest)
    langs = sorted({r.language for r in records})
    feats = {r.audio_path: extract_features(read_wav(r.audio_path), feature_cfg) for r in records}

    def items(split, lang=None):
        return [
            (feats[r.audio_path], r.emotion, r.language)
            for r in records
            if r.split == split and (lang is None or r.language == lang)
        ]

    train_sets = langs + ["all"]
    matrix = np.zeros((len(train_sets), len(langs)))
    for i, ts in enumerate(train_sets):
        m = emotion.train_emotion(items("train", None if ts == "all" else ts), cfg.emotion_config())
        for j, lang in enumerate(langs):
            matrix[i, j] = emotion.accuracy(m, items("eval", lang))
    return train_sets, langs, matrix


def matrix_tsv(train_sets, langs, matrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["trained_on"] + [f"eval_{l}" for l in langs])
    for ts, row in zip(train_sets, matrix):
        w.writerow([ts] + [f"{v:.6f}" for v in row])
    return buf.getvalue()
