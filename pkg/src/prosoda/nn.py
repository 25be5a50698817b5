"""A small reverse-mode network library for sequence models.

Inputs are either a sequence ``(T, C)`` or, after ``mean_pool_time``, a vector
``(C,)``. A network is a list of layer descriptors (plain dicts, so they
serialize as JSON) plus one parameter dict per layer.

Layer types::

    conv1d{in_ch, out_ch, kernel}   "same" zero padding, weight (out, in, kernel)
    dense{n_in, n_out}              applied per time step, weight (n_in, n_out)
    embedding{vocab, dim}           column 0 holds unit ids; the remaining
                                    columns are passed through after the
                                    looked-up rows (broadcast conditioning)
    relu, sigmoid, softmax, mean_pool_time, dropout{p}
"""

from __future__ import annotations

import json
import math

import numpy as np

# ---------------------------------------------------------------- descriptors


def conv1d(in_ch, out_ch, kernel):
    return {"type": "conv1d", "in_ch": int(in_ch), "out_ch": int(out_ch), "kernel": int(kernel)}


def dense(n_in, n_out):
    return {"type": "dense", "n_in": int(n_in), "n_out": int(n_out)}


def embedding(vocab, dim):
    return {"type": "embedding", "vocab": int(vocab), "dim": int(dim)}


def relu():
    return {"type": "relu"}


def sigmoid():
    return {"type": "sigmoid"}


def softmax():
    return {"type": "softmax"}


def mean_pool_time():
    return {"type": "mean_pool_time"}


def dropout(p=0.0):
    return {"type": "dropout", "p": float(p)}


class ShapeError(ValueError):
    pass


def _check_spec(spec, in_width):
    """Walk the layer list tracking (width, is_sequence); raise on mismatches."""
    width, seq = in_width, True
    for i, layer in enumerate(spec):
        kind = layer["type"]
        if kind == "conv1d":
            if not seq:
                raise ShapeError(f"layer {i}: conv1d after pooling")
            if layer["in_ch"] != width:
                raise ShapeError(f"layer {i}: conv1d expects {layer['in_ch']} channels, gets {width}")
            if layer["kernel"] < 1:
                raise ShapeError(f"layer {i}: kernel must be >= 1")
            width = layer["out_ch"]
        elif kind == "dense":
            if layer["n_in"] != width:
                raise ShapeError(f"layer {i}: dense expects {layer['n_in']} inputs, gets {width}")
            width = layer["n_out"]
        elif kind == "embedding":
            if i != 0:
                raise ShapeError("embedding must be the first layer")
            width = layer["dim"] + width - 1
        elif kind == "mean_pool_time":
            if not seq:
                raise ShapeError(f"layer {i}: pooled twice")
            seq = False
        elif kind == "dropout":
            if not 0.0 <= layer["p"] < 1.0:
                raise ShapeError(f"layer {i}: dropout p must be in [0, 1)")
        elif kind not in ("relu", "sigmoid", "softmax"):
            raise ShapeError(f"layer {i}: unknown layer type {kind!r}")
    return width


# -------------------------------------------------------------------- network


class Network:
    """Layer descriptors plus parameters.

    Parameters are initialized Glorot-uniform, ``U(-a, a)`` with
    ``a = sqrt(6 / (fan_in + fan_out))``; biases start at zero.
    """

    def __init__(self, spec, in_width, seed=0, params=None):
        self.spec = [dict(layer) for layer in spec]
        self.in_width = int(in_width)
        self.out_width = _check_spec(self.spec, self.in_width)
        self.seed = int(seed)
        if params is None:
            params = _init_params(self.spec, np.random.default_rng(self.seed))
        self.params = params
        self._dropout_rng = np.random.default_rng([self.seed, 1])

    def param_arrays(self):
        """Flat list of parameter arrays in a fixed order (layer, then name)."""
        return [p[name] for p in self.params for name in sorted(p)]

    def n_params(self):
        return sum(a.size for a in self.param_arrays())

    def copy(self):
        params = [{k: v.copy() for k, v in p.items()} for p in self.params]
        return Network(self.spec, self.in_width, self.seed, params)

    def to_bytes(self) -> bytes:
        header = json.dumps(
            {"version": 1, "spec": self.spec, "in_width": self.in_width, "seed": self.seed},
            sort_keys=True,
        ).encode()
        flat = np.concatenate([a.ravel() for a in self.param_arrays()]) if self.n_params() else np.zeros(0)
        blob = flat.astype("<f8").tobytes()
        return len(header).to_bytes(4, "little") + header + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> "Network":
        n = int.from_bytes(data[:4], "little")
        meta = json.loads(data[4 : 4 + n].decode())
        if meta.get("version") != 1:
            raise ValueError(f"unsupported network blob version {meta.get('version')}")
        net = cls(meta["spec"], meta["in_width"], meta["seed"])
        flat = np.frombuffer(data[4 + n :], dtype="<f8")
        if flat.size != net.n_params():
            raise ValueError(f"parameter blob holds {flat.size} values, spec needs {net.n_params()}")
        pos = 0
        for p in net.params:
            for name in sorted(p):
                size = p[name].size
                p[name] = flat[pos : pos + size].reshape(p[name].shape).astype(np.float64)
                pos += size
        return net


def _glorot(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _init_params(spec, rng):
    params = []
    for layer in spec:
        kind = layer["type"]
        if kind == "conv1d":
            i, o, k = layer["in_ch"], layer["out_ch"], layer["kernel"]
            params.append({"W": _glorot(rng, (o, i, k), i * k, o * k), "b": np.zeros(o)})
        elif kind == "dense":
            i, o = layer["n_in"], layer["n_out"]
            params.append({"W": _glorot(rng, (i, o), i, o), "b": np.zeros(o)})
        elif kind == "embedding":
            v, d = layer["vocab"], layer["dim"]
            params.append({"E": _glorot(rng, (v, d), v, d)})
        else:
            params.append({})
    return params


# ------------------------------------------------------------ forward/backward


def _conv_cols(x, k):
    left = (k - 1) // 2
    xp = np.pad(x, ((left, k - 1 - left), (0, 0)))
    # (T, C, k) view -> (T, k*C) with kernel tap as the slow axis
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)
    return np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(x.shape[0], -1)


def _layer_forward(layer, p, x, train, rng):
    kind = layer["type"]
    if kind == "conv1d":
        k = layer["kernel"]
        cols = _conv_cols(x, k)
        wmat = p["W"].transpose(2, 1, 0).reshape(k * layer["in_ch"], layer["out_ch"])
        return cols @ wmat + p["b"], cols
    if kind == "dense":
        return x @ p["W"] + p["b"], x
    if kind == "embedding":
        ids = x[:, 0].astype(np.int64)
        if np.any(ids < 0) or np.any(ids >= layer["vocab"]) or np.any(ids != x[:, 0]):
            raise ValueError(f"unit ids must be integers in [0, {layer['vocab']})")
        return np.concatenate([p["E"][ids], x[:, 1:]], axis=1), ids
    if kind == "relu":
        return np.maximum(x, 0.0), x > 0
    if kind == "sigmoid":
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return y, y
    if kind == "softmax":
        z = x - np.max(x, axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        return y, y
    if kind == "mean_pool_time":
        if x.shape[0] == 0:
            raise ValueError("cannot pool an empty sequence")
        return x.mean(axis=0), x.shape[0]
    if kind == "dropout":
        if not train or layer["p"] == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= layer["p"]) / (1.0 - layer["p"])
        return x * keep, keep
    raise ShapeError(f"unknown layer type {kind!r}")


def _layer_backward(layer, p, cache, g, x_shape):
    kind = layer["type"]
    if kind == "conv1d":
        k, cin = layer["kernel"], layer["in_ch"]
        cols = cache
        wmat = p["W"].transpose(2, 1, 0).reshape(k * cin, layer["out_ch"])
        dw = (cols.T @ g).reshape(k, cin, layer["out_ch"]).transpose(2, 1, 0)
        grads = {"W": dw, "b": g.sum(axis=0)}
        dcols = (g @ wmat.T).reshape(g.shape[0], k, cin)
        t = x_shape[0]
        left = (k - 1) // 2
        dxp = np.zeros((t + k - 1, cin))
        for j in range(k):
            dxp[j : j + t] += dcols[:, j, :]
        return dxp[left : left + t], grads
    if kind == "dense":
        x = cache
        if x.ndim == 1:
            grads = {"W": np.outer(x, g), "b": g.copy()}
        else:
            grads = {"W": x.T @ g, "b": g.sum(axis=0)}
        return g @ p["W"].T, grads
    if kind == "embedding":
        ids = cache
        dim = layer["dim"]
        de = np.zeros_like(p["E"])
        np.add.at(de, ids, g[:, :dim])
        dx = np.concatenate([np.zeros((g.shape[0], 1)), g[:, dim:]], axis=1)
        return dx, {"E": de}
    if kind == "relu":
        return g * cache, {}
    if kind == "sigmoid":
        y = cache
        return g * y * (1.0 - y), {}
    if kind == "softmax":
        y = cache
        return y * (g - np.sum(g * y, axis=-1, keepdims=True)), {}
    if kind == "mean_pool_time":
        t = cache
        return np.broadcast_to(g / t, (t,) + g.shape).copy(), {}
    if kind == "dropout":
        return (g if cache is None else g * cache), {}
    raise ShapeError(f"unknown layer type {kind!r}")


def _as_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_width:
        raise ShapeError(f"expected input (T, {net.in_width}), got {x.shape}")
    return x


def forward_tape(net: Network, x, train=False, stop=None):
    """Run the network recording what backward needs.

    ``stop`` truncates after that many layers (used to read intermediate
    activations such as the emotion bottleneck).
    """
    x = _as_input(net, x)
    tape = []
    layers = net.spec if stop is None else net.spec[:stop]
    for layer, p in zip(layers, net.params):
        y, cache = _layer_forward(layer, p, x, train, net._dropout_rng)
        tape.append((cache, x.shape))
        x = y
    return x, tape


def forward(net: Network, x, stop=None) -> np.ndarray:
    """Inference-mode output (dropout disabled)."""
    return forward_tape(net, x, train=False, stop=stop)[0]


def backward_tape(net: Network, tape, loss_grad):
    """Parameter gradients (same structure as ``net.params``) and input gradient."""
    g = np.asarray(loss_grad, dtype=np.float64)
    grads = [None] * len(tape)
    for i in range(len(tape) - 1, -1, -1):
        cache, x_shape = tape[i]
        g, grads[i] = _layer_backward(net.spec[i], net.params[i], cache, g, x_shape)
    for i in range(len(tape), len(net.spec)):
        grads.append({k: np.zeros_like(v) for k, v in net.params[i].items()})
    return grads, g


def backward(net: Network, x, loss_grad):
    """Gradients of ``sum(forward(x) * loss_grad)`` with respect to every parameter."""
    _, tape = forward_tape(net, x, train=False)
    return backward_tape(net, tape, loss_grad)[0]


# --------------------------------------------------------------------- losses

_P_EPS = 1e-12


def mse_loss(y, target, mask=None):
    """Mean squared error over (optionally masked) elements."""
    y = np.asarray(y, dtype=np.float64)
    diff = y - np.asarray(target, dtype=np.float64)
    if mask is None:
        n = diff.size
        return float(np.sum(diff**2) / n), 2.0 * diff / n
    mask = np.asarray(mask, dtype=np.float64)
    m = np.broadcast_to(mask.reshape(mask.shape + (1,) * (diff.ndim - mask.ndim)), diff.shape)
    n = m.sum()
    if n == 0:
        return 0.0, np.zeros_like(diff)
    return float(np.sum(m * diff**2) / n), 2.0 * m * diff / n


def cross_entropy_loss(p, label):
    """Negative log-likelihood of ``label`` under probability vector ``p`` (softmax output)."""
    p = np.asarray(p, dtype=np.float64)
    pl = max(p[label], _P_EPS)
    grad = np.zeros_like(p)
    grad[label] = -1.0 / pl
    return float(-math.log(pl)), grad


def bce_loss(p, target, mask=None):
    """Binary cross-entropy averaged over bins of unmasked frames.

    ``p`` and ``target`` are (T, d); ``mask`` (T,) selects frames. A fully
    masked sequence contributes zero loss and zero gradient.
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    m = np.ones(p.shape[0]) if mask is None else np.asarray(mask, dtype=np.float64)
    count = m.sum() * p.shape[1]
    if count == 0:
        return 0.0, np.zeros_like(p)
    pc = np.clip(p, _P_EPS, 1.0 - _P_EPS)
    elem = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    loss = float(np.sum(elem * m[:, None]) / count)
    denom = np.maximum(pc * (1.0 - pc), _P_EPS)
    grad = (pc - t) / denom * m[:, None] / count
    return loss, grad


LOSSES = {"mse": mse_loss, "cross_entropy": cross_entropy_loss, "bce": bce_loss}


# ------------------------------------------------------------------ optimizer


class Adam:
    """Adam; ``weight_decay`` > 0 adds decoupled (AdamW-style) decay of weights, not biases."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = None
        self.v = None

    def step(self, net: Network, grads):
        if self.m is None:
            self.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]
            self.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(net.params, grads, self.m, self.v):
            for name in p:
                m[name] = b1 * m[name] + (1.0 - b1) * g[name]
                v[name] = b2 * v[name] + (1.0 - b2) * g[name] ** 2
                if self.lr:
                    update = (m[name] / corr1) / (np.sqrt(v[name] / corr2) + self.eps)
                    if self.weight_decay and name != "b":
                        update = update + self.weight_decay * p[name]
                    p[name] = p[name] - self.lr * update


def train_step(net: Network, batch, loss="mse", optimizer: Adam | None = None, train=True):
    """One optimizer update on the mean loss over ``batch``.

    ``batch`` items are ``(x, target)`` or ``(x, target, mask)``. Returns the
    pre-update loss. Raises ``FloatingPointError`` on a non-finite loss.
    """
    loss_fn = LOSSES[loss] if isinstance(loss, str) else loss
    if optimizer is None:
        optimizer = Adam()
    if not batch:
        raise ValueError("empty batch")
    total = 0.0
    acc = [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]
    for item in batch:
        x, target = item[0], item[1]
        y, tape = forward_tape(net, x, train=train)
        if len(item) > 2:
            value, g = loss_fn(y, target, item[2])
        else:
            value, g = loss_fn(y, target)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite {getattr(loss_fn, '__name__', loss)} value {value}")
        total += value
        grads, _ = backward_tape(net, tape, g)
        for a, gr in zip(acc, grads):
            for k in a:
                a[k] += gr[k]
    scale = 1.0 / len(batch)
    for a in acc:
        for k in a:
            a[k] *= scale
    optimizer.step(net, acc)
    return total * scale


# ----------------------------------------------------------- gradient check


def gradient_check(net: Network, x, loss="mse", target=None, mask=None, eps=1e-4):
    """Compare backprop gradients with central finite differences.

    Returns the worst relative error ``|a - n| / max(|a|, |n|, 1e-8)`` over
    every parameter entry. The network must be deterministic (dropout off).
    """
    loss_fn = LOSSES[loss] if isinstance(loss, str) else loss

    def value(with_grad):
        y, tape = forward_tape(net, x, train=False)
        v, g = loss_fn(y, target) if mask is None else loss_fn(y, target, mask)
        return v, (backward_tape(net, tape, g)[0] if with_grad else None)

    _, grads = value(True)
    worst = 0.0
    for p, gp in zip(net.params, grads):
        for name, arr in p.items():
            flat = arr.reshape(-1)
            analytic = gp[name].reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                up = value(False)[0]
                flat[i] = old - eps
                down = value(False)[0]
                flat[i] = old
                numeric = (up - down) / (2.0 * eps)
                scale = max(abs(analytic[i]), abs(numeric), 1e-8)
                worst = max(worst, abs(analytic[i] - numeric) / scale)
    return worst
