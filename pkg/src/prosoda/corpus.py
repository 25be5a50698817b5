"""Synthetic multi-language emotional speech corpora and dataset manifests.

Each utterance is a random phone string rendered with a source-filter model:
a sawtooth glottal source (or noise for fricatives) through per-phone formant
resonators, a spectral-tilt filter and an amplitude envelope. Emotions differ
in F0 level, pitch-accent gain and pattern, intra-phone slope, speaking rate,
tilt and loudness; languages differ in phone inventory, rhythm and in how
tilt and loudness are realized.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import FRAME_LEN, HOP, SAMPLE_RATE, Waveform, write_wav

EMOTIONS = ("neutral", "angry", "happy", "sad")
SPLITS = ("train", "eval")
MANIFEST_COLUMNS = ("path", "speaker", "emotion", "language", "split")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    audio_path: str
    speaker_id: str
    emotion: int
    language: str
    split: str = "train"

    def __post_init__(self):
        if not 0 <= self.emotion < len(EMOTIONS):
            raise ManifestError(f"emotion index {self.emotion} outside 0..{len(EMOTIONS) - 1}")
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")


def emotion_index(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    try:
        return EMOTIONS.index(str(name).strip().lower())
    except ValueError:
        raise ManifestError(f"unknown emotion label {name!r}") from None


def write_manifest(records, path) -> None:
    """Tab-separated manifest; audio paths are stored relative to the manifest."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in records:
            p = Path(r.audio_path)
            if p.is_absolute():
                try:
                    p = p.resolve().relative_to(base)
                except ValueError:
                    pass
            w.writerow([p.as_posix(), r.speaker_id, EMOTIONS[r.emotion], r.language, r.split])


def read_manifest(path, check_files=True) -> list[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or tuple(rows[0]) != MANIFEST_COLUMNS:
        raise ManifestError(f"manifest header must be {MANIFEST_COLUMNS}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} fields")
        audio = Path(row[0])
        if not audio.is_absolute():
            audio = path.parent / audio
        if check_files and not audio.exists():
            raise ManifestError(f"line {lineno}: audio file missing: {audio}")
        records.append(ManifestRecord(str(audio), row[1], emotion_index(row[2]), row[3], row[4]))
    return records


def assign_splits(records, eval_ratio=0.2):
    """Stratified split per (language, emotion), interleaving speakers.

    Within each stratum records are ordered by (speaker, original order) and
    every k-th one goes to eval, so eval counts are within one record of
    ``eval_ratio`` and every speaker is represented.
    """
    strata = {}
    for i, r in enumerate(records):
        strata.setdefault((r.language, r.emotion), []).append(i)
    out = list(records)
    for idx in strata.values():
        n = len(idx)
        n_eval = int(round(n * eval_ratio))
        by_speaker = {}
        for i in idx:
            by_speaker.setdefault(records[i].speaker_id, []).append(i)
        # round-robin over speakers from the end of each speaker's list
        queues = [list(reversed(v)) for _, v in sorted(by_speaker.items())]
        chosen = set()
        while len(chosen) < n_eval:
            for q in queues:
                if q and len(chosen) < n_eval:
                    chosen.add(q.pop(0))
        for i in idx:
            r = records[i]
            out[i] = ManifestRecord(r.audio_path, r.speaker_id, r.emotion, r.language,
                                    "eval" if i in chosen else "train")
    return out


# ------------------------------------------------------------ corpus profiles


@dataclass(frozen=True)
class EmotionProfile:
    pitch_offset: float  # speaker-standardized units
    accent_gain: float
    phone_slope: float  # rise across each phone, standardized units
    duration_mult: float
    tilt: float  # first-difference pre-emphasis coefficient
    loudness: float


DEFAULT_EMOTIONS = {
    0: EmotionProfile(pitch_offset=-0.2, accent_gain=0.8, phone_slope=0.0, duration_mult=1.0, tilt=0.8, loudness=0.6),
    1: EmotionProfile(pitch_offset=0.5, accent_gain=1.0, phone_slope=-1.0, duration_mult=0.75, tilt=0.8, loudness=1.7),
    2: EmotionProfile(pitch_offset=1.1, accent_gain=1.2, phone_slope=1.0, duration_mult=0.95, tilt=0.1, loudness=1.7),
    3: EmotionProfile(pitch_offset=-1.1, accent_gain=0.4, phone_slope=-0.3, duration_mult=1.35, tilt=0.1, loudness=0.6),
}


@dataclass(frozen=True)
class LanguageProfile:
    tag: str
    phone_formants: tuple  # per phone (F1, F2, F3) in Hz; F1 == 0 marks a fricative
    base_duration: float  # frames per phone before emotion scaling
    tilt_shift: float
    loudness_scale: float


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    base_f0: float
    range_log: float  # log-F0 spread per standardized unit


@dataclass
class SynthCorpusSpec:
    languages: list
    speakers: dict  # language tag -> list of SpeakerProfile
    emotions: dict = field(default_factory=lambda: dict(DEFAULT_EMOTIONS))
    utts_per_cell: int = 10
    phones_per_utt: tuple = (8, 12)
    seed: int = 0
    eval_ratio: float = 0.2

    def generative_params(self, language: str, emotion: int, speaker: str):
        """Combined generative parameters for one (language, emotion, speaker) cell."""
        lang = next(l for l in self.languages if l.tag == language)
        spk = next(s for s in self.speakers[language] if s.speaker_id == speaker)
        emo = self.emotions[emotion]
        return {
            "base_f0": spk.base_f0,
            "range_log": spk.range_log,
            "pitch_offset": emo.pitch_offset,
            "accent_gain": emo.accent_gain,
            "phone_slope": emo.phone_slope,
            "duration_mult": emo.duration_mult,
            "phone_duration": lang.base_duration * emo.duration_mult,
            "tilt": float(np.clip(emo.tilt + lang.tilt_shift, -0.5, 0.97)),
            "loudness": emo.loudness * lang.loudness_scale,
        }


_LANG_TAGS = ("en", "fr", "de", "it", "pt")


def default_corpus_spec(n_languages=2, n_speakers=3, utts_per_cell=10, seed=0) -> SynthCorpusSpec:
    """Languages with disjoint phone inventories and distinct rhythm/voice quality."""
    rng = np.random.default_rng([seed, 7919])
    languages, speakers = [], {}
    for li in range(n_languages):
        tag = _LANG_TAGS[li] if li < len(_LANG_TAGS) else f"l{li}"
        phones = []
        for _ in range(6):
            f1 = rng.uniform(280, 850)
            f2 = rng.uniform(max(f1 + 350, 900), 2500)
            f3 = rng.uniform(max(f2 + 300, 2400), 3500)
            phones.append((round(f1), round(f2), round(f3)))
        for _ in range(2):
            phones.append((0, round(rng.uniform(3000, 6500)), 0))
        languages.append(
            LanguageProfile(
                tag=tag,
                phone_formants=tuple(phones),
                base_duration=5.0 - 0.8 * (li % 2),
                tilt_shift=-0.2 * (li % 2) + 0.1 * (li // 2),
                loudness_scale=1.0 - 0.15 * (li % 2),
            )
        )
        speakers[tag] = [
            SpeakerProfile(f"{tag}_s{j}", base_f0=float(round(rng.uniform(100, 230))), range_log=0.18)
            for j in range(n_speakers)
        ]
    return SynthCorpusSpec(languages, speakers, utts_per_cell=utts_per_cell, seed=seed)


# ------------------------------------------------------------------ rendering


def _accent_tables(spec: SynthCorpusSpec, lang_index: int, n_phones: int):
    rng = np.random.default_rng([spec.seed, 104729, lang_index])
    shared = rng.uniform(-1.0, 1.0, n_phones)
    per_emotion = {e: rng.uniform(-1.0, 1.0, n_phones) for e in sorted(spec.emotions)}
    return shared, per_emotion


# segment levels before tilt and loudness; vowels dominate as in speech
_VOWEL_RMS = 1.0
_FRICATIVE_RMS = 0.25


def _rms(y):
    return max(float(np.sqrt(np.mean(y * y))), 1e-12)


def _resonator(freq, bw, sr=SAMPLE_RATE):
    r = np.exp(-np.pi * bw / sr)
    a = [1.0, -2.0 * r * np.cos(2 * np.pi * freq / sr), r * r]
    b = [1.0 - r]
    return b, a


@dataclass
class Utterance:
    waveform: Waveform
    phones: np.ndarray  # per frame phone index, -1 for silence
    f0_hz: np.ndarray  # per frame commanded F0 (0 = unvoiced)


def render_utterance(spec: SynthCorpusSpec, lang_index: int, emotion: int, speaker: str, rng) -> Utterance:
    lang = spec.languages[lang_index]
    p = spec.generative_params(lang.tag, emotion, speaker)
    n_inv = len(lang.phone_formants)
    shared, per_emotion = _accent_tables(spec, lang_index, n_inv)
    accent = p["accent_gain"] * (0.5 * shared + 0.5 * per_emotion[emotion])

    lo, hi = spec.phones_per_utt
    n_ph = int(rng.integers(lo, hi + 1))
    seq = []
    for _ in range(n_ph):
        choices = [q for q in range(n_inv) if not seq or q != seq[-1]]
        seq.append(int(rng.choice(choices)))
    durs = np.maximum(2, np.round(p["phone_duration"] * rng.uniform(0.75, 1.25, n_ph))).astype(int)

    sil = 3
    n_frames = sil + int(durs.sum()) + sil
    phones = np.full(n_frames, -1)
    z = np.zeros(n_frames)
    pos = sil
    for ph, d in zip(seq, durs):
        phones[pos : pos + d] = ph
        z[pos : pos + d] = accent[ph] + p["phone_slope"] * (np.arange(d) / max(d - 1, 1) - 0.5)
        pos += d
    z += p["pitch_offset"] + rng.normal(0.0, 0.12)
    micro = np.zeros(n_frames)
    for t in range(1, n_frames):
        micro[t] = 0.7 * micro[t - 1] + rng.normal(0.0, 0.06)
    z = np.convolve(z + micro, np.ones(3) / 3.0, mode="same")
    is_vowel = np.array([lang.phone_formants[q][0] > 0 for q in range(n_inv)])
    voiced = (phones >= 0) & is_vowel[np.maximum(phones, 0)]
    f0 = np.where(voiced, p["base_f0"] * np.exp(p["range_log"] * z), 0.0)

    # per-sample rendering: frame values are anchored at frame centers
    n_samples = (n_frames - 1) * HOP + FRAME_LEN
    centers = np.arange(n_frames) * HOP + FRAME_LEN // 2
    t = np.arange(n_samples)
    if voiced.any():
        f0_fill = np.interp(np.arange(n_frames), np.flatnonzero(voiced), f0[voiced])
    else:
        f0_fill = np.full(n_frames, p["base_f0"])
    phase = np.cumsum(np.interp(t, centers, f0_fill) / SAMPLE_RATE)
    saw = 2.0 * (phase % 1.0) - 1.0
    noise = rng.standard_normal(n_samples)
    ph_s = phones[np.clip((t - FRAME_LEN // 2 + HOP // 2) // HOP, 0, n_frames - 1)]
    edges = np.flatnonzero(np.concatenate(([True], ph_s[1:] != ph_s[:-1], [True])))

    out = np.zeros(n_samples)
    # filter states carry across phone boundaries
    zi = [np.zeros(2) for _ in range(3)]
    for a, b in zip(edges[:-1], edges[1:]):
        ph = ph_s[a]
        if ph < 0:
            out[a:b] = 1e-4 * noise[a:b]
            continue
        f1, f2, f3 = lang.phone_formants[ph]
        if f1 == 0:
            bb, aa = _resonator(f2, 1500.0)
            y, zi[0] = lfilter(bb, aa, 0.5 * noise[a:b], zi=zi[0])
            out[a:b] = y * (_FRICATIVE_RMS / _rms(y))
            continue
        y = saw[a:b]
        for k, (fr, bw) in enumerate(((f1, 90.0), (f2, 120.0), (f3, 180.0))):
            bb, aa = _resonator(fr, bw)
            y, zi[k] = lfilter(bb, aa, y, zi=zi[k])
        out[a:b] = y * (_VOWEL_RMS / _rms(y))

    out = lfilter([1.0, -p["tilt"]], [1.0], out)
    env = np.ones(n_samples)
    ramp = 160
    for a, b in zip(edges[:-1], edges[1:]):
        if ph_s[a] >= 0 and b - a > 2 * ramp:
            env[a : a + ramp] *= np.linspace(0.3, 1.0, ramp)
            env[b - ramp : b] *= np.linspace(1.0, 0.3, ramp)
    out = out * env * 0.12 * p["loudness"]
    out = np.clip(out, -0.99, 0.99)
    return Utterance(Waveform(out), phones, f0)


def utterance_rng(spec: SynthCorpusSpec, lang_index, speaker_index, emotion, utt):
    return np.random.default_rng([spec.seed, lang_index, speaker_index, emotion, utt])


def gen_corpus(spec: SynthCorpusSpec, out_dir) -> list[ManifestRecord]:
    """Render every (language, speaker, emotion, utterance) cell and write a manifest.

    Files land in ``out_dir/wav``; the manifest is ``out_dir/manifest.tsv``.
    Output depends only on ``spec`` (including its seed).
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    os.makedirs(wav_dir, exist_ok=True)
    records = []
    for li, lang in enumerate(spec.languages):
        for si, spk in enumerate(spec.speakers[lang.tag]):
            for emo in sorted(spec.emotions):
                for u in range(spec.utts_per_cell):
                    utt = render_utterance(spec, li, emo, spk.speaker_id, utterance_rng(spec, li, si, emo, u))
                    name = f"{spk.speaker_id}_{EMOTIONS[emo]}_{u:03d}.wav"
                    write_wav(wav_dir / name, utt.waveform)
                    records.append(ManifestRecord(str(wav_dir / name), spk.speaker_id, emo, lang.tag))
    records = assign_splits(records, spec.eval_ratio)
    write_manifest(records, out_dir / "manifest.tsv")
    return records
