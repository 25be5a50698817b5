"""Evaluation metrics: concordance correlation, V-measure, confusion matrices, embedding export."""

from __future__ import annotations

import csv
import math
from collections import Counter

import numpy as np

from .corpus import EMOTIONS
from .emotion import EMBED_DIM


def ccc(x, y) -> float:
    """Concordance correlation coefficient with population moments.

    ``2 cov(x, y) / (var x + var y + (mean x - mean y)^2)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("ccc needs two equal-length 1-D sequences")
    if x.size < 2:
        raise ValueError("ccc needs at least 2 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("ccc inputs must be finite")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    if vx == 0.0 and vy == 0.0:
        raise ValueError("ccc is undefined when both sequences are constant")
    cov = np.mean(dx * dy)
    return float(2.0 * cov / (vx + vy + (mx - my) ** 2))


def _entropy(counts, total):
    return -math.fsum(c / total * math.log(c / total) for c in counts if c)


def v_measure(true_labels, clusters):
    """Homogeneity, completeness and their harmonic mean ``v``.

    Degenerate cases follow the usual convention: when the class (or
    cluster) entropy is zero the corresponding score is 1.
    """
    a = list(true_labels)
    b = list(clusters)
    if len(a) != len(b):
        raise ValueError("labelings must have equal length")
    n = len(a)
    if n == 0:
        raise ValueError("v_measure of an empty labeling")
    joint = Counter(zip(a, b))
    h_c = _entropy(Counter(a).values(), n)
    h_k = _entropy(Counter(b).values(), n)
    h_joint = _entropy(joint.values(), n)
    h_c_given_k = h_joint - h_k
    h_k_given_c = h_joint - h_c
    hom = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    com = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    hom, com = min(max(hom, 0.0), 1.0), min(max(com, 0.0), 1.0)
    v = 0.0 if hom + com == 0 else 2.0 * hom * com / (hom + com)
    return hom, com, v


def confusion_and_accuracy(true_labels, predicted, n_classes: int = len(EMOTIONS)):
    """Rows are true classes, columns predictions; accuracy is trace / total."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("label sequences must be equal-length 1-D")
    for arr in (t, p):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    acc = float(np.trace(m) / t.size) if t.size else float("nan")
    return m, acc


def align_tracks(ref, out, ref_durations, out_durations):
    """Pair frames of two F0 tracks through their unit-level durations.

    Frame ``j`` of reference unit ``i`` maps to output frame
    ``start_i' + floor(j * D_i' / D_i)``. Returns the paired Hz values for
    frames voiced in both tracks.
    """
    rd = np.asarray(ref_durations, dtype=np.int64)
    od = np.asarray(out_durations, dtype=np.int64)
    if rd.shape != od.shape:
        raise ValueError("duration sequences must have the same number of units")
    if len(ref) != rd.sum() or len(out) != od.sum():
        raise ValueError("track lengths must equal the summed durations")
    unit = np.repeat(np.arange(rd.size), rd)
    within = np.arange(rd.sum()) - np.repeat(np.cumsum(rd) - rd, rd)
    target = (np.cumsum(od) - od)[unit] + (within * od[unit]) // rd[unit]
    keep = ref.voiced & out.voiced[target]
    return ref.f0_hz[keep], out.f0_hz[target[keep]]


def export_embeddings(records, path):
    """Tab-separated file: ``e0..e95``, label, language, one row per record in input order."""
    if not records:
        raise ValueError("no embeddings to export")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow([f"e{i}" for i in range(EMBED_DIM)] + ["label", "language"])
        for e, label, lang in records:
            e = np.asarray(e, dtype=np.float64)
            if e.shape != (EMBED_DIM,):
                raise ValueError(f"embedding must have shape ({EMBED_DIM},)")
            name = EMOTIONS[label] if isinstance(label, (int, np.integer)) else str(label)
            w.writerow([f"{v:.12g}" for v in e] + [name, lang])


def read_embeddings(path):
    """Inverse of :func:`export_embeddings`: ``(matrix, labels, languages)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or len(rows[0]) != EMBED_DIM + 2:
        raise ValueError(f"{path}: expected a header with {EMBED_DIM + 2} columns")
    body = rows[1:]
    mat = np.array([[float(v) for v in r[:EMBED_DIM]] for r in body]).reshape(len(body), EMBED_DIM)
    return mat, [r[EMBED_DIM] for r in body], [r[EMBED_DIM + 1] for r in body]
