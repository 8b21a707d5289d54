"""The nine subword pooling operators, with forward outputs and exact gradients.

Methods: first, last, last2, f+l, sum, max, avg, attn, lstm.
f+l, attn and lstm carry trainable parameters; the rest are parameter-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tinynet import BiLstm, LstmCell, ShapeError, _sigmoid, relu, softmax

POOLING_METHODS = ("first", "last", "last2", "f+l", "sum", "max", "avg", "attn", "lstm")
TRAINABLE_METHODS = ("f+l", "attn", "lstm")


class EmptySpanError(ValueError):
    pass


@dataclass
class PoolingSpec:
    method: str
    hidden: int
    attn_hidden: int = 50
    lstm_hidden: int = 50
    params: dict = field(default_factory=dict)

    @property
    def output_dim(self):
        if self.method == "last2":
            return 2 * self.hidden
        if self.method == "lstm":
            return 2 * self.lstm_hidden
        return self.hidden


def make_pooling(method, hidden, rng=None, dtype=np.float32,
                 attn_hidden=50, lstm_hidden=50):
    """Build a PoolingSpec, initializing parameters where the method needs them."""
    if method not in POOLING_METHODS:
        raise ValueError(f"unknown pooling method {method!r}")
    spec = PoolingSpec(method, hidden, attn_hidden, lstm_hidden)
    if method == "f+l":
        spec.params["theta"] = np.zeros((), dtype=dtype)
    elif method == "attn":
        if rng is None:
            rng = np.random.default_rng(0)
        # scorer: hidden layer without bias, scalar output with bias
        a = np.sqrt(6.0 / (hidden + attn_hidden))
        spec.params["w1"] = rng.uniform(-a, a, size=(attn_hidden, hidden)).astype(dtype)
        a2 = np.sqrt(6.0 / (attn_hidden + 1))
        spec.params["w2"] = rng.uniform(-a2, a2, size=attn_hidden).astype(dtype)
        spec.params["b2"] = np.zeros((), dtype=dtype)
    elif method == "lstm":
        if rng is None:
            rng = np.random.default_rng(0)
        bi = BiLstm.create(hidden, lstm_hidden, rng, dtype)
        spec.params.update(bi.params)
    return spec


def _bilstm_from(spec):
    p = spec.params
    return BiLstm(
        LstmCell(p["fwd.w"], p["fwd.u"], p["fwd.b"]),
        LstmCell(p["bwd.w"], p["bwd.u"], p["bwd.b"]),
    )


def attention_weights(spec, v):
    """Softmax distribution the attn scorer assigns over the rows of v."""
    v = np.asarray(v)
    h1 = relu(v @ spec.params["w1"].T)
    scores = h1 @ spec.params["w2"] + spec.params["b2"]
    return softmax(scores)


def pool_forward(spec, v):
    """Pool the [n_subwords x hidden] matrix v into one vector.

    Returns (output, cache) where the cache feeds pool_backward.
    """
    v = np.asarray(v)
    if v.ndim != 2 or v.shape[0] == 0:
        raise EmptySpanError(f"need a nonempty [n x hidden] matrix, got {v.shape}")
    if v.shape[1] != spec.hidden:
        raise ShapeError(f"hidden size {v.shape[1]} != spec hidden {spec.hidden}")
    n = v.shape[0]
    m = spec.method
    if m == "first":
        return v[0].copy(), (v,)
    if m == "last":
        return v[-1].copy(), (v,)
    if m == "last2":
        # single-subword words duplicate their only subword
        second_last = v[-2] if n >= 2 else v[-1]
        return np.concatenate([second_last, v[-1]]), (v,)
    if m == "sum":
        return v.sum(axis=0), (v,)
    if m == "avg":
        return v.sum(axis=0) / n, (v,)
    if m == "max":
        return v.max(axis=0), (v,)
    if m == "f+l":
        w = _sigmoid(float(spec.params["theta"]))
        return w * v[0] + (1.0 - w) * v[-1], (v, w)
    if m == "attn":
        h1 = relu(v @ spec.params["w1"].T)
        scores = h1 @ spec.params["w2"] + spec.params["b2"]
        a = softmax(scores)
        return a @ v, (v, h1, a)
    if m == "lstm":
        bi = _bilstm_from(spec)
        out, cache = bi.forward(v)
        return out, (v, bi, cache)
    raise ValueError(f"unknown pooling method {m!r}")


def pool_backward(spec, cache, dout):
    """Gradient of the pooled output wrt the input rows and the parameters.

    Returns (dv [n x hidden], dparams dict matching spec.params keys).
    """
    v = cache[0]
    n = v.shape[0]
    dout = np.asarray(dout)
    if dout.shape != (spec.output_dim,):
        raise ShapeError(f"upstream grad shape {dout.shape} != ({spec.output_dim},)")
    m = spec.method
    dv = np.zeros_like(v)
    if m == "first":
        dv[0] = dout
        return dv, {}
    if m == "last":
        dv[-1] = dout
        return dv, {}
    if m == "last2":
        h = spec.hidden
        if n >= 2:
            dv[-2] += dout[:h]
        else:
            dv[-1] += dout[:h]
        dv[-1] += dout[h:]
        return dv, {}
    if m == "sum":
        dv[:] = dout
        return dv, {}
    if m == "avg":
        dv[:] = dout / n
        return dv, {}
    if m == "max":
        # ties routed to the lowest row index
        winners = np.argmax(v, axis=0)
        dv[winners, np.arange(v.shape[1])] = dout
        return dv, {}
    if m == "f+l":
        _, w = cache
        dv[0] += w * dout
        dv[-1] += (1.0 - w) * dout
        dtheta = float(dout @ (v[0] - v[-1])) * w * (1.0 - w)
        return dv, {"theta": np.asarray(dtheta, dtype=v.dtype)}
    if m == "attn":
        _, h1, a = cache
        da = v @ dout
        dv += np.outer(a, dout)
        ds = a * (da - float(a @ da))
        db2 = ds.sum()
        dw2 = h1.T @ ds
        dh1 = np.outer(ds, spec.params["w2"])
        dh1 = dh1 * (h1 > 0)
        dw1 = dh1.T @ v
        dv += dh1 @ spec.params["w1"]
        return dv, {
            "w1": dw1,
            "w2": dw2,
            "b2": np.asarray(db2, dtype=v.dtype),
        }
    if m == "lstm":
        _, bi, bicache = cache
        dseq, grads = bi.backward(bicache, dout)
        return dseq, grads
    raise ValueError(f"unknown pooling method {m!r}")


def pooler_param_count(spec):
    return int(sum(np.asarray(p).size for p in spec.params.values()))


def param_count(spec, num_classes, classifier_hidden=50):
    """(pooler-only, pooler + downstream MLP classifier) trainable scalar counts."""
    pooler = pooler_param_count(spec)
    d = spec.output_dim
    clf = classifier_hidden * (d + 1) + num_classes * (classifier_hidden + 1)
    return pooler, pooler + clf
