"""Minimal neural kernel: dense layers, ReLU MLP, biLSTM cell, Adam, gradient checking.

Everything is plain numpy. Training runs in float32; gradient checks run a
parallel float64 path. No autodiff graph, only the fixed architectures the
probes need.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC_PARAMS = b"SWPT"
PARAMS_VERSION = 1


class ShapeError(ValueError):
    pass


def glorot_uniform(rng, fan_out, fan_in, dtype=np.float32):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in)).astype(dtype)


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x):
    """Stable softmax along the last axis (max-subtraction)."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_xent(logits, label):
    """Cross-entropy of one sample. Returns (loss, grad wrt logits).

    grad = softmax(logits) - onehot(label)
    """
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ShapeError(f"expected 1-D logits, got shape {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ShapeError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - np.max(logits)
    logsumexp = np.log(np.sum(np.exp(shifted)))
    loss = float(logsumexp - shifted[label])
    grad = np.exp(shifted - logsumexp)
    grad[label] -= 1.0
    return loss, grad


@dataclass
class Mlp:
    """Affine -> ReLU -> ... -> affine. Weights stored as [out x in]."""

    weights: list
    biases: list

    @classmethod
    def create(cls, dims, rng, dtype=np.float32):
        if len(dims) < 2:
            raise ShapeError("need at least input and output dims")
        ws = [glorot_uniform(rng, o, i, dtype) for i, o in zip(dims[:-1], dims[1:])]
        bs = [np.zeros(o, dtype=dtype) for o in dims[1:]]
        return cls(ws, bs)

    @property
    def params(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}.weight"] = w
            out[f"layer{i}.bias"] = b
        return out

    def forward(self, x):
        """Returns (logits, cache). x is a single input vector."""
        x = np.asarray(x)
        if x.shape != (self.weights[0].shape[1],):
            raise ShapeError(
                f"input shape {x.shape} does not match ({self.weights[0].shape[1]},)"
            )
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ h + b
            pre.append(z)
            h = relu(z) if i < last else z
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, dout):
        """Returns (dx, grads dict keyed like .params)."""
        acts, pre = cache
        grads = {}
        d = np.asarray(dout)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i < last:
                d = d * (pre[i] > 0)
            grads[f"layer{i}.weight"] = np.outer(d, acts[i])
            grads[f"layer{i}.bias"] = d.copy()
            d = self.weights[i].T @ d
        return d, grads


@dataclass
class LstmCell:
    """Single-direction LSTM. Gate order in the stacked matrices: i, f, g, o."""

    w: np.ndarray  # [4h x in]
    u: np.ndarray  # [4h x h]
    b: np.ndarray  # [4h]

    @classmethod
    def create(cls, input_dim, hidden, rng, dtype=np.float32):
        a = 1.0 / np.sqrt(hidden)
        w = rng.uniform(-a, a, size=(4 * hidden, input_dim)).astype(dtype)
        u = rng.uniform(-a, a, size=(4 * hidden, hidden)).astype(dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden : 2 * hidden] = 1.0  # forget-gate bias
        return cls(w, u, b)

    @property
    def hidden(self):
        return self.u.shape[1]

    def forward(self, seq):
        """seq: [n x in]. Returns (final hidden state, cache)."""
        seq = np.asarray(seq)
        h = np.zeros(self.hidden, dtype=seq.dtype)
        c = np.zeros(self.hidden, dtype=seq.dtype)
        steps = []
        hd = self.hidden
        for x in seq:
            a = self.w @ x + self.u @ h + self.b
            i = _sigmoid(a[:hd])
            f = _sigmoid(a[hd : 2 * hd])
            g = np.tanh(a[2 * hd : 3 * hd])
            o = _sigmoid(a[3 * hd :])
            c_new = f * c + i * g
            h_new = o * np.tanh(c_new)
            steps.append((x, h, c, i, f, g, o, c_new))
            h, c = h_new, c_new
        return h, (seq, steps)

    def backward(self, cache, dh_final):
        """Backprop through time from the gradient of the final hidden state.

        Returns (dseq [n x in], grads {w, u, b}).
        """
        seq, steps = cache
        hd = self.hidden
        dw = np.zeros_like(self.w)
        du = np.zeros_like(self.u)
        db = np.zeros_like(self.b)
        dseq = np.zeros_like(seq)
        dh = np.asarray(dh_final, dtype=seq.dtype).copy()
        dc = np.zeros(hd, dtype=seq.dtype)
        for t in range(len(steps) - 1, -1, -1):
            x, h_prev, c_prev, i, f, g, o, c_new = steps[t]
            tc = np.tanh(c_new)
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            da = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ]
            )
            dw += np.outer(da, x)
            du += np.outer(da, h_prev)
            db += da
            dseq[t] = self.w.T @ da
            dh = self.u.T @ da
            dc = dc * f
        return dseq, {"w": dw, "u": du, "b": db}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass
class BiLstm:
    """Two independent LstmCells; output is concat of final states of both passes."""

    fwd: LstmCell
    bwd: LstmCell

    @classmethod
    def create(cls, input_dim, hidden, rng, dtype=np.float32):
        return cls(
            LstmCell.create(input_dim, hidden, rng, dtype),
            LstmCell.create(input_dim, hidden, rng, dtype),
        )

    @property
    def params(self):
        return {
            "fwd.w": self.fwd.w, "fwd.u": self.fwd.u, "fwd.b": self.fwd.b,
            "bwd.w": self.bwd.w, "bwd.u": self.bwd.u, "bwd.b": self.bwd.b,
        }

    def forward(self, seq):
        hf, cf = self.fwd.forward(seq)
        hb, cb = self.bwd.forward(np.asarray(seq)[::-1])
        return np.concatenate([hf, hb]), (cf, cb)

    def backward(self, cache, dout):
        cf, cb = cache
        hd = self.fwd.hidden
        dseq_f, gf = self.fwd.backward(cf, dout[:hd])
        dseq_b, gb = self.bwd.backward(cb, dout[hd:])
        dseq = dseq_f + dseq_b[::-1]
        grads = {f"fwd.{k}": v for k, v in gf.items()}
        grads.update({f"bwd.{k}": v for k, v in gb.items()})
        return dseq, grads


@dataclass
class Adam:
    """Bias-corrected Adam over a named parameter dict. Updates in place."""

    params: dict
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, p in self.params.items():
            self.m.setdefault(k, np.zeros_like(p, dtype=np.float64))
            self.v.setdefault(k, np.zeros_like(p, dtype=np.float64))

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = np.asarray(grads[k], dtype=np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def grad_check(f, params, analytic, step=1e-5, tolerance=1e-4, atol=1e-8):
    """Central finite differences of the scalar f(params) against analytic grads.

    params are perturbed in place and restored; run this on float64 copies.
    Absolute differences below atol count as zero (finite differences carry
    roundoff noise of that order, so tinier gradients cannot be resolved).
    """
    per_param = {}
    worst = 0.0
    for name, p in params.items():
        g = np.asarray(analytic[name])
        num = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(params)
            flat[i] = orig - step
            lo = f(params)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * step)
        diff = np.abs(g - num)
        denom = np.maximum(np.abs(g) + np.abs(num), 1e-12)
        rel = np.where(diff < atol, 0.0, diff / denom)
        err = float(rel.max()) if rel.size else 0.0
        per_param[name] = err
        worst = max(worst, err)
    return GradCheckReport(worst, per_param, tolerance)


def save_params(path, params):
    """Binary checkpoint: named f32 blobs, little-endian."""
    with open(path, "wb") as fh:
        fh.write(MAGIC_PARAMS)
        fh.write(struct.pack("<II", PARAMS_VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC_PARAMS:
        raise ValueError(f"bad magic in {path}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != PARAMS_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        out[name] = arr.copy()
    return out
