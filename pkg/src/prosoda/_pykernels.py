"""Pure numpy implementations of the hot loops.

Signatures mirror ``_ckernels``; the compiled module is preferred when it
imports (see ``prosoda._kernels``).
"""

import numpy as np

_ASSIGN_CHUNK_ELEMS = 1 << 22


def nccf_matrix(x, n_frames, hop, win, lag_min, lag_max):
    """Normalized cross-correlation of every frame against lagged copies.

    ``x`` must hold at least ``(n_frames - 1) * hop + win + lag_max`` samples.
    Row ``i`` column ``j`` correlates ``x[s:s+win]`` with
    ``x[s+lag:s+lag+win]`` where ``s = i * hop`` and ``lag = lag_min + j``.
    Zero-energy windows give 0.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_lags = lag_max - lag_min + 1
    out = np.zeros((n_frames, n_lags))
    if n_frames == 0:
        return out
    need = (n_frames - 1) * hop + win + lag_max
    if x.shape[0] < need:
        raise ValueError(f"signal too short: need {need} samples, got {x.shape[0]}")
    windows = np.lib.stride_tricks.sliding_window_view(x, win)
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    energy = csum[win:] - csum[:-win]
    starts = np.arange(n_frames) * hop
    ref = windows[starts]
    e0 = energy[starts]
    for j in range(n_lags):
        idx = starts + lag_min + j
        num = np.einsum("ij,ij->i", ref, windows[idx])
        den = np.sqrt(e0 * energy[idx])
        out[:, j] = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return out


def viterbi(local_cost, log_f0, lam, octave_cost, octave_ratio):
    """Minimum-cost path through per-frame candidates.

    Transition cost between candidates with log frequencies ``a`` and ``b`` is
    ``lam * |a - b|`` plus ``octave_cost`` when ``|a - b| > log(octave_ratio)``.
    Missing candidates carry ``inf`` local cost. Ties keep the lowest index.
    """
    local_cost = np.asarray(local_cost, dtype=np.float64)
    log_f0 = np.asarray(log_f0, dtype=np.float64)
    n, c = local_cost.shape
    path = np.zeros(n, dtype=np.int64)
    if n == 0:
        return path
    jump = np.log(octave_ratio)
    acc = local_cost[0].copy()
    back = np.zeros((n, c), dtype=np.int64)
    for t in range(1, n):
        diff = np.abs(log_f0[t - 1][:, None] - log_f0[t][None, :])
        trans = lam * diff + np.where(diff > jump, octave_cost, 0.0)
        trans[~np.isfinite(trans)] = np.inf
        total = acc[:, None] + trans
        back[t] = np.argmin(total, axis=0)
        acc = total[back[t], np.arange(c)] + local_cost[t]
    path[-1] = int(np.argmin(acc))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def nearest_centroid(points, centroids):
    """Index of, and squared distance to, the closest centroid per row.

    Distances are summed from explicit differences so equidistant points
    break ties toward the lowest centroid index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n)
    step = max(1, _ASSIGN_CHUNK_ELEMS // max(1, k * dim))
    for lo in range(0, n, step):
        block = points[lo : lo + step]
        diff = block[:, None, :] - centroids[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        lab = np.argmin(d2, axis=1)
        labels[lo : lo + step] = lab
        dists[lo : lo + step] = d2[np.arange(block.shape[0]), lab]
    return labels, dists
