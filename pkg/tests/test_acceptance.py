"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (printed again in the terminal
summary) and then asserts. Criteria 5, 7, 8 and 9 share one trained bundle
and experiment report per seed on the default-size synthetic corpus.
"""

import hashlib
import itertools
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from prosoda import cli, nn
from prosoda.audio import Waveform, read_wav, write_wav
from prosoda.bundle import ModelBundle
from prosoda.config import dump_config, load_config
from prosoda.corpus import default_corpus_spec, gen_corpus, read_manifest
from prosoda.emotion import EmotionConfig, build_network, embed
from prosoda.features import extract_features, hann, power_spectrum
from prosoda.audio import FrameSeq
from prosoda.metrics import ccc, v_measure
from prosoda.pipeline import language_matrix, run_experiment, train_all
from prosoda.pitch import (
    PitchTrack,
    SpeakerStats,
    TrackerParams,
    best_path,
    brute_force_path,
    destandardize,
    estimate_f0,
    path_cost,
    standardize,
)
from prosoda.prosody import PredictorConfig, _stack
from prosoda.units import assign, expand, fit_kmeans, reduce

SEEDS = (0, 1, 2, 3, 4)
EMBED_SEEDS = (0, 1, 2)
CONDITIONS = ("oracle", "baseline", "proposed", "cross:fr", "cross:en")
EMOTION_NAMES = ("neutral", "angry", "happy", "sad")


# ------------------------------------------------------------- shared runs


class Experiment:
    def __init__(self, seed, root):
        self.seed = seed
        self.cfg = load_config(overrides={"seed": seed})
        out = root / f"corpus_{seed}"
        spec = default_corpus_spec(self.cfg.n_languages, self.cfg.n_speakers, self.cfg.utts_per_cell, seed)
        gen_corpus(replace(spec, eval_ratio=self.cfg.eval_ratio), out)
        self.manifest = out / "manifest.tsv"
        t = time.perf_counter()
        self.bundle = train_all(self.manifest, self.cfg)
        self.train_seconds = time.perf_counter() - t
        t = time.perf_counter()
        self.report = run_experiment(self.manifest, self.bundle, CONDITIONS, self.cfg)
        self.experiment_seconds = time.perf_counter() - t


@pytest.fixture(scope="session")
def experiments(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(seed):
        if seed not in cache:
            cache[seed] = Experiment(seed, root)
        return cache[seed]

    return get


# ------------------------------------------------------------ criterion 1


def test_criterion_1_round_trips(criterion, tiny_bundle, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    failures = []

    worst = 0.0
    for i in range(200):
        x = rng.uniform(-1, 1, int(rng.integers(1, 2000)))
        x[: min(4, x.size)] = [-1.0, 1.0, 0.0, 1.0 / 65536][: min(4, x.size)]
        p = tmp_path / "rt.wav"
        write_wav(p, Waveform(x))
        worst = max(worst, float(np.max(np.abs(read_wav(p).samples - x))))
    if worst > 1 / 32768:
        failures.append(f"wav error {worst:.3g}")

    for _ in range(10_000):
        u = rng.integers(0, int(rng.integers(1, 8)), int(rng.integers(1, 50)))
        r = reduce(u)
        back = reduce(expand(r))
        if not (np.array_equal(expand(r), u) and np.array_equal(back.units, r.units) and np.array_equal(back.durations, r.durations)):
            failures.append("reduce/expand")
            break

    mismatched = 0
    for _ in range(2000):
        hz = np.where(rng.random(50) < 0.7, rng.uniform(50, 600, 50), 0.0)
        s = SpeakerStats(0, float(rng.uniform(80, 300)), float(rng.uniform(1, 80)), 10)
        t = PitchTrack.from_hz(hz)
        mismatched += not np.array_equal(destandardize(standardize(t, s), s).f0_hz, t.f0_hz)
    if mismatched:
        failures.append(f"standardize mismatched on {mismatched} tracks")

    data = tiny_bundle.to_bytes()
    p = tmp_path / "b.prsd"
    tiny_bundle.save(p)
    if ModelBundle.load(p).to_bytes() != data:
        failures.append("bundle bytes differ")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    criterion(1, "round-trip suite", ok, f"{elapsed:.1f}s; wav max err {worst * 32768:.3f} steps" + ("; " + ", ".join(failures) if failures else ""))
    assert ok


# ------------------------------------------------------------ criterion 2


def _naive_dft_power(x, n):
    xp = np.zeros(n)
    xp[: len(x)] = x
    k = np.arange(n // 2 + 1)[:, None]
    return np.abs((xp * np.exp(-2j * np.pi * k * np.arange(n) / n)).sum(axis=1)) ** 2


def _set_partitions(n):
    if n == 0:
        yield []
        return
    for p in _set_partitions(n - 1):
        for label in range(max(p, default=-1) + 2):
            yield p + [label]


def _brute_v(a, b):
    n = len(a)

    def h(xs):
        return -sum(xs.count(v) / n * math.log(xs.count(v) / n) for v in set(xs))

    def h_cond(xs, given):
        total = 0.0
        for g in set(given):
            sub = [x for x, y in zip(xs, given) if y == g]
            total += len(sub) / n * -sum(sub.count(v) / len(sub) * math.log(sub.count(v) / len(sub)) for v in set(sub))
        return total

    hom = 1.0 if h(a) == 0 else 1 - h_cond(a, b) / h(a)
    com = 1.0 if h(b) == 0 else 1 - h_cond(b, a) / h(b)
    return 0.0 if hom + com == 0 else 2 * hom * com / (hom + com)


def test_criterion_2_numerical_oracles(criterion):
    rng = np.random.default_rng(2)
    notes = []

    fft_err = 0.0
    for frame_len, n_fft in ((16, 16), (100, 128), (400, 512), (1000, 1024), (1024, 1024)):
        x = rng.standard_normal((2, frame_len))
        got = power_spectrum(FrameSeq(x, 320, frame_len, 16000), n_fft)
        for row, g in zip(x, got):
            ref = _naive_dft_power(row * hann(frame_len), n_fft)
            fft_err = max(fft_err, float(np.max(np.abs(g - ref)) / np.max(ref)))
    notes.append(f"fft rel {fft_err:.1e}")

    nets = {
        "conv/relu/dense": ([nn.conv1d(3, 4, 3), nn.relu(), nn.dense(4, 2)], 3, "mse"),
        "sigmoid+bce": ([nn.conv1d(3, 5, 4), nn.sigmoid()], 3, "bce"),
        "softmax+ce": ([nn.dense(3, 4), nn.mean_pool_time(), nn.dense(4, 3), nn.softmax()], 3, "cross_entropy"),
        "dropout(p=0 at eval)": ([nn.dense(3, 3), nn.dropout(0.5), nn.dense(3, 1)], 3, "mse"),
        "emotion encoder": (build_network(5, EmotionConfig(hidden=4, kernel=5)).spec, 5, "cross_entropy"),
        "duration predictor": (_stack(1 + 4, PredictorConfig(unit_dim=3, hidden=4, kernel=5), 6) + [nn.dense(4, 1)], 5, "mse"),
        "pitch predictor": (_stack(1 + 4, PredictorConfig(unit_dim=3, hidden=4, kernel=5), 6) + [nn.dense(4, 8), nn.sigmoid()], 5, "bce"),
    }
    grad_err = 0.0
    for spec, width, loss in nets.values():
        for seed in range(3):
            net = nn.Network(spec, width, seed)
            for p in net.params:
                if "b" in p:
                    p["b"] = rng.uniform(0.05, 0.2, p["b"].shape)
            x = rng.standard_normal((7, width))
            if spec[0]["type"] == "embedding":
                x[:, 0] = rng.integers(0, spec[0]["vocab"], 7)
            y = nn.forward(net, x)
            mask = None
            if loss == "cross_entropy":
                target = int(rng.integers(y.shape[-1]))
            elif loss == "bce":
                target = (rng.random(y.shape) < 0.3).astype(float)
                mask = (rng.random(7) < 0.8).astype(float)
            else:
                target = rng.standard_normal(y.shape)
            grad_err = max(grad_err, nn.gradient_check(net, x, loss, target, mask))
    notes.append(f"grad rel {grad_err:.1e}")

    dp_bad = 0
    params = TrackerParams()
    for _ in range(500):
        n, c = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        cost = rng.random((n, c))
        logf = np.log(rng.uniform(60, 400, (n, c)))
        path = best_path(cost, logf, params)
        _, best = brute_force_path(cost, logf, params)
        dp_bad += abs(path_cost(cost, logf, path, params) - best) > 1e-12
    notes.append(f"dp mismatches {dp_bad}/500")

    v_err = 0.0
    for n in range(1, 7):
        parts = list(_set_partitions(n))
        for a, b in itertools.product(parts, parts):
            v_err = max(v_err, abs(v_measure(a, b)[2] - _brute_v(a, b)))
    notes.append(f"v-measure abs {v_err:.1e}")

    ok = fft_err <= 1e-9 and grad_err <= 1e-4 and dp_bad == 0 and v_err <= 1e-12
    criterion(2, "numerical oracle suite", ok, "; ".join(notes))
    assert ok


# ------------------------------------------------------------ criterion 3


def test_criterion_3_metric_axioms(criterion):
    rng = np.random.default_rng(3)
    checks = {}
    xs = [rng.standard_normal(int(rng.integers(2, 50))) for _ in range(200)]
    checks["ccc(x,x)=1"] = all(abs(ccc(x, x) - 1.0) <= 1e-12 for x in xs)
    checks["symmetric"] = all(ccc(x, y) == ccc(y, x) for x in xs for y in [rng.standard_normal(x.size)])
    checks["4/11"] = abs(ccc([1, 2, 3], [2, 4, 6]) - 4 / 11) <= 1e-12
    checks["perfect v=1"] = v_measure([0, 0, 1, 1, 2, 3], [7, 7, 2, 2, 0, 5])[2] == 1.0
    checks["2/3 case"] = v_measure([0, 0, 1, 1], [0, 1, 2, 3])[2] == 2 / 3
    ok = all(checks.values())
    criterion(3, "metric axioms", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


# ------------------------------------------------------------ criterion 4


def _sawtooth(freq_per_sample, sr=16000):
    phase = np.cumsum(freq_per_sample) / sr
    return 0.5 * (2.0 * (phase % 1.0) - 1.0)


def test_criterion_4_tracker(criterion):
    t0 = time.perf_counter()
    sr = 16000
    results = []
    # rising and falling sweeps across the whole range plus steady tones at the ends
    curves = [np.linspace(80, 350, 2 * sr), np.linspace(350, 80, 2 * sr)] + [np.full(sr, f) for f in (80.0, 350.0)]
    for fc in curves:
        tr = estimate_f0(Waveform(_sawtooth(fc)))
        centres = np.arange(len(tr)) * 320 + 200
        ref = fc[centres]
        sl = slice(2, len(tr) - 2)
        v = tr.voiced[sl]
        err = np.abs(tr.f0_hz[sl] - ref[sl])[v]
        results.append((float(v.mean()), float(np.mean(err <= 5.0))))
    noise = estimate_f0(Waveform(np.random.default_rng(4).standard_normal(2 * sr) * 0.3))
    unvoiced = float(np.mean(~noise.voiced))
    elapsed = time.perf_counter() - t0
    within = min(r[1] for r in results)
    ok = within >= 0.95 and unvoiced >= 0.8 and elapsed < 30
    criterion(4, "tracker accuracy", ok, f"min share within 5 Hz {within:.3f}, min voiced {min(r[0] for r in results):.3f}, noise unvoiced {unvoiced:.3f}, {elapsed:.1f}s")
    assert ok


# ------------------------------------------------------------ criterion 5


def test_criterion_5_embedding_quality(criterion, experiments):
    rows = []
    seconds = 0.0
    for seed in EMBED_SEEDS:
        ex = experiments(seed)
        seconds += ex.train_seconds
        ev = [r for r in read_manifest(ex.manifest) if r.split == "eval"]
        emb = np.array([embed(ex.bundle.emotion, extract_features(read_wav(r.audio_path))) for r in ev])
        clusters = assign(emb, fit_kmeans([emb], 4, seed))
        v = v_measure([r.emotion for r in ev], clusters)[2]
        rows.append((seed, ex.bundle.emotion.meta["eval_accuracy"], v))
    ok = all(acc >= 0.90 and v >= 0.7 for _, acc, v in rows) and seconds < 600
    detail = "; ".join(f"seed {s}: acc {a:.3f} V {v:.3f}" for s, a, v in rows) + f"; training {seconds:.0f}s"
    criterion(5, "emotion embedding quality", ok, detail)
    assert ok


# ------------------------------------------------------------ criterion 6


def test_criterion_6_language_matrix(criterion, experiments):
    ex = experiments(0)
    sets, langs, m = language_matrix(ex.manifest, ex.cfg)
    joint = m[sets.index("all")]
    ok = True
    parts = []
    for j, lang in enumerate(langs):
        for i, ts in enumerate(sets[:-1]):
            if ts != lang:
                ok &= joint[j] >= m[i, j]
                parts.append(f"eval {lang}: all {joint[j]:.3f} vs {ts} {m[i, j]:.3f}")
    criterion(6, "joint training vs single-language models", bool(ok), "; ".join(parts))
    assert ok


# ------------------------------------------------------------ criterion 7


def test_criterion_7_prosody_ordering(criterion, experiments):
    ok = True
    parts = []
    seconds = 0.0
    for seed in SEEDS:
        ex = experiments(seed)
        seconds += ex.train_seconds + ex.experiment_seconds
        r = ex.report
        for k in range(4):
            o, p, b = (r.cell(c, None, k) for c in ("oracle", "proposed", "baseline"))
            if not o >= p >= b:
                ok = False
                parts.append(f"seed {seed} {EMOTION_NAMES[k]}: {o:.3f}/{p:.3f}/{b:.3f}")
        gap = r.corpus_mean("proposed") - r.corpus_mean("baseline")
        ok &= gap >= 0.05
        parts.append(f"seed {seed}: oracle {r.corpus_mean('oracle'):.3f} proposed {r.corpus_mean('proposed'):.3f} baseline {r.corpus_mean('baseline'):.3f} gap {gap:.3f}")
    ok &= seconds < 900
    parts.append(f"{seconds:.0f}s")
    criterion(7, "prosody ordering oracle >= proposed >= baseline", bool(ok), "; ".join(parts))
    assert ok


# ------------------------------------------------------------ criterion 8


def test_criterion_8_cross_lingual(criterion, experiments):
    ok = True
    parts = []
    for seed in SEEDS:
        r = experiments(seed).report
        for donor in ("fr", "en"):
            targets = [lang for lang in ("en", "fr") if lang != donor]
            cross = r.corpus_mean(f"cross:{donor}")
            base = r.corpus_mean("baseline", targets)
            ok &= cross > base
            parts.append(f"seed {seed} {donor}->{targets[0]}: {cross:.3f} vs {base:.3f}")
    criterion(8, "cross-lingual donor embeddings beat baseline", bool(ok), "; ".join(parts))
    assert ok


# ------------------------------------------------------------ criterion 9


def test_criterion_9_ser_on_synthesis(criterion, experiments):
    ok = True
    parts = []
    for seed in SEEDS:
        ser = experiments(seed).report.ser
        orig, prop, base = ser["original"][1], ser["proposed"][1], ser["baseline"][1]
        ok &= abs(prop - orig) <= 0.15 and prop > base
        parts.append(f"seed {seed}: original {orig:.3f} proposed {prop:.3f} baseline {base:.3f}")
    criterion(9, "SER on resyntheses", bool(ok), "; ".join(parts))
    assert ok


# ----------------------------------------------------------- criterion 10

SMALL = {
    "n_speakers": 2,
    "utts_per_cell": 5,
    "K": 24,
    "emotion_epochs": 6,
    "pred_epochs": 3,
    "ser_epochs": 3,
    "n_donor_draws": 2,
}


def _run_cli(root, config):
    corpus, model, report = root / "corpus", root / "model", root / "report"
    steps = [
        ["gen-corpus", "--config", str(config), "--seed", "11", "--out", str(corpus)],
        ["train", "--config", str(config), "--seed", "11", "--manifest", str(corpus / "manifest.tsv"), "--out", str(model)],
        ["eval", "--config", str(config), "--seed", "11", "--manifest", str(corpus / "manifest.tsv"), "--bundle", str(model / "bundle.prsd"),
         "--conditions", "oracle,baseline,proposed,cross:fr", "--lang-matrix", "--out", str(report)],
        ["export-embeddings", "--config", str(config), "--seed", "11", "--manifest", str(corpus / "manifest.tsv"), "--bundle", str(model / "bundle.prsd"),
         "--out", str(root / "emb.tsv")],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, argv
    first = read_manifest(corpus / "manifest.tsv")[0]
    assert cli.main(["resynth", "--config", str(config), "--bundle", str(model / "bundle.prsd"), "--wav", first.audio_path,
                     "--speaker", first.speaker_id, "--out", str(root / "resynth.wav")]) == 0
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_10_determinism(criterion, tmp_path, capsys):
    config = tmp_path / "small.ini"
    config.write_text(dump_config(load_config(overrides=SMALL)))
    a = _run_cli(tmp_path / "run_a", config)
    b = _run_cli(tmp_path / "run_b", config)
    capsys.readouterr()
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = not differing and "model/bundle.prsd" in a
    criterion(10, "determinism across two CLI runs", ok, f"{len(a)} files compared" + (f"; differing: {differing}" if differing else f"; bundle sha256 {a['model/bundle.prsd'][:16]}"))
    assert ok
