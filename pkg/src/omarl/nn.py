"""Small dense networks with exact backprop, Adam and stable softmax helpers.

Everything runs in float64.  Weight matrices are stored ``(fan_in, fan_out)``
so a batch ``x`` of shape ``(B, fan_in)`` maps to ``x @ W + b``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionError, NonFiniteError

FORMAT_TAG = "omarl.densenet/1"


def logsumexp(values, axis=-1):
    v = np.asarray(values, dtype=float)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("logsumexp of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    out = np.squeeze(out, axis=axis)
    return float(out) if out.ndim == 0 else out


def log_softmax(values, axis=-1):
    v = np.asarray(values, dtype=float)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    z = v - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax(values, axis=-1):
    return np.exp(log_softmax(values, axis=axis))


class ParamGrads(list):
    """Per-parameter gradient arrays that are views into one flat buffer."""

    def __init__(self, net):
        self.flat = np.empty(net.num_params)
        super().__init__(net._views(self.flat))


def flat_grads(net, grads):
    g = getattr(grads, "flat", None)
    if g is not None and g.size == net.num_params:
        return g
    return np.concatenate([np.ravel(x) for x in grads])


class DenseNet:
    """Feed-forward net: ReLU on hidden layers, identity output.

    Parameters live in one contiguous vector ``flat``; ``weights`` and
    ``biases`` are views into it.
    """

    activation = "relu"

    def __init__(self, layer_dims, rng=None, weights=None, biases=None):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise DimensionError(f"bad layer dims {layer_dims}")
        pairs = list(zip(self.layer_dims[:-1], self.layer_dims[1:]))
        if weights is None:
            rng = np.random.default_rng() if rng is None else rng
            weights = []
            for fan_in, fan_out in pairs:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases = [np.zeros(fan_out) for _, fan_out in pairs]
        for (fan_in, fan_out), w, b in zip(pairs, weights, biases):
            if np.shape(w) != (fan_in, fan_out) or np.shape(b) != (fan_out,):
                raise DimensionError("parameter shapes do not match layer dims")
        self._shapes = []
        for fan_in, fan_out in pairs:
            self._shapes += [(fan_in, fan_out), (fan_out,)]
        self.flat = np.empty(sum(int(np.prod(s)) for s in self._shapes))
        views = self._views(self.flat)
        self.weights, self.biases = views[0::2], views[1::2]
        for dst, src in zip(views, [p for pair in zip(weights, biases) for p in pair]):
            dst[...] = src
        # when set, backward writes into one buffer owned by the net; the
        # returned gradients are then only valid until the next backward call
        self.reuse_grad_buffer = False
        self._grad_buffer = None

    def _views(self, flat):
        out, pos = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(flat[pos:pos + size].reshape(shape))
            pos += size
        return out

    @property
    def num_params(self):
        return self.flat.size

    @property
    def num_layers(self):
        return len(self.weights)

    def params(self):
        """Parameters in the canonical order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.layer_dims[0]:
            raise DimensionError(f"input width {x.shape[-1]} != {self.layer_dims[0]}")
        return x

    def forward(self, x):
        h = self._check_input(x)
        last = self.num_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w
            h += b
            if k < last:
                np.maximum(h, 0.0, out=h)
        return h

    __call__ = forward

    def forward_cached(self, x):
        """Forward pass that also returns the layer inputs needed by ``backward``."""
        h = self._check_input(x)
        inputs = []
        last = self.num_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w
            h += b
            if k < last:
                np.maximum(h, 0.0, out=h)
        return h, inputs

    def backward(self, cache, grad_out, need_input_grad=True):
        """Reverse-mode gradients for a scalar loss with ``dL/d(output) = grad_out``.

        ``cache`` is the second value of :meth:`forward_cached` (or the input
        array itself, in which case the forward pass is recomputed).  Returns
        ``(param_grads, input_grad)`` with ``param_grads`` aligned to
        :meth:`params`.  ``input_grad`` is None when ``need_input_grad`` is
        false.
        """
        if not isinstance(cache, list):
            _, cache = self.forward_cached(cache)
        g = np.asarray(grad_out, dtype=float)
        if g.shape[-1] != self.layer_dims[-1]:
            raise DimensionError(f"output gradient width {g.shape[-1]} != {self.layer_dims[-1]}")
        if self.reuse_grad_buffer:
            if self._grad_buffer is None:
                self._grad_buffer = ParamGrads(self)
            grads = self._grad_buffer
        else:
            grads = ParamGrads(self)
        for k in range(self.num_layers - 1, -1, -1):
            h_in = cache[k]
            if h_in.ndim == 1:
                np.outer(h_in, g, out=grads[2 * k])
                grads[2 * k + 1][...] = g
            else:
                np.matmul(h_in.T, g, out=grads[2 * k])
                np.sum(g, axis=0, out=grads[2 * k + 1])
            if k > 0:
                g = g @ self.weights[k].T
                np.multiply(g, h_in > 0.0, out=g)
            elif need_input_grad:
                g = g @ self.weights[k].T
            else:
                g = None
        return grads, g

    def copy(self):
        return DenseNet(self.layer_dims, weights=[w.copy() for w in self.weights],
                        biases=[b.copy() for b in self.biases])

    def load_from(self, other):
        self.flat[...] = other.flat

    def to_dict(self, config_hash=""):
        return {
            "format": FORMAT_TAG,
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "params": [p.ravel().tolist() for p in self.params()],
            "config_hash": config_hash,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported network format {d.get('format')!r}")
        dims = d["layer_dims"]
        flat = d["params"]
        weights, biases = [], []
        for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            weights.append(np.array(flat[2 * k], dtype=float).reshape(fan_in, fan_out))
            biases.append(np.array(flat[2 * k + 1], dtype=float))
        return cls(dims, weights=weights, biases=biases)

    def fingerprint(self):
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()[:16]


def save_net(net, path, config_hash=""):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net.to_dict(config_hash), fh)


def load_net(path):
    with open(path, encoding="utf-8") as fh:
        return DenseNet.from_dict(json.load(fh))


def polyak_update(target, source, tau):
    """``target <- tau * source + (1 - tau) * target`` in place."""
    if tau == 1.0:
        target.load_from(source)
        return
    if tau == 0.0:
        return
    _blend(target.flat, source.flat, float(tau))


@numba.njit(cache=True)
def _blend(dst, src, tau):
    keep = 1.0 - tau
    for k in range(dst.size):
        dst[k] = keep * dst[k] + tau * src[k]


@numba.njit(cache=True, fastmath=True)
def _adam_update(p, g, m, v, b1, b2, step_size, eps_hat):
    for k in range(p.size):
        gk = g[k]
        mk = b1 * m[k] + (1.0 - b1) * gk
        vk = b2 * v[k] + (1.0 - b2) * gk * gk
        m[k] = mk
        v[k] = vk
        p[k] -= step_size * mk / (np.sqrt(vk) + eps_hat)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    @classmethod
    def for_net(cls, net, lr, **kw):
        return cls(lr=lr, m=np.zeros(net.num_params), v=np.zeros(net.num_params), **kw)


def adam_step(net, grads, state: AdamState):
    """One bias-corrected Adam update of ``net`` in place.

    Non-finite gradients raise :class:`NonFiniteError` before anything changes.
    """
    g = flat_grads(net, grads)
    if state.m is None:
        state.m = np.zeros(net.num_params)
        state.v = np.zeros(net.num_params)
    b1, b2 = state.beta1, state.beta2
    step = state.step + 1
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    step_size = state.lr * np.sqrt(c2) / c1
    if not np.isfinite(g).all():
        raise NonFiniteError("non-finite gradient")
    _adam_update(net.flat, g, state.m, state.v, b1, b2, step_size, state.eps * np.sqrt(c2))
    state.step = step
