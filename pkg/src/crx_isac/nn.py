"""Minimal dense-network substrate in numpy.

Fully-connected networks with a fixed activation vocabulary (relu, tanh,
sigmoid, softmax over an output segment, identity), hand-written batched
backpropagation, an Adam optimizer, and npz checkpointing that captures
parameters, optimizer moments, and the RNG state.

The terminal layer supports a segment map: the output vector is split into
contiguous slices, each with its own activation, which is how an actor head
can emit mixed bounded/simplex/fraction outputs in one pass.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "softmax-segment", "identity")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (two-branch form)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shift-stabilized softmax along `axis`."""
    x = np.asarray(x, dtype=float)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _apply(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "relu":
        return relu(z)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "sigmoid":
        return sigmoid(z)
    if tag == "softmax-segment":
        return softmax(z, axis=-1)
    if tag == "identity":
        return z
    raise ValueError(f"unknown activation tag {tag!r}")


def _apply_grad(tag: str, y: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the activation, expressed via its output y."""
    if tag == "relu":
        return grad * (y > 0)
    if tag == "tanh":
        return grad * (1.0 - y * y)
    if tag == "sigmoid":
        return grad * y * (1.0 - y)
    if tag == "softmax-segment":
        # J^T g = y * (g - <g, y>) rowwise
        inner = np.sum(grad * y, axis=-1, keepdims=True)
        return y * (grad - inner)
    if tag == "identity":
        return grad
    raise ValueError(f"unknown activation tag {tag!r}")


class DenseNetwork:
    """Stack of affine layers with per-layer hidden activation and a
    segment-mapped terminal activation.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths [input, hidden..., output].
    hidden : str
        Activation tag for every non-terminal layer.
    terminal : list of (int, str) or None
        Contiguous (length, tag) segments covering the output; None means a
        single identity segment.
    rng : np.random.Generator
        Source for the uniform +-1/sqrt(fan_in) initialization.
    """

    def __init__(self, sizes, *, hidden="relu", terminal=None, rng=None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output dimensions")
        if hidden not in ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {hidden!r}")
        if terminal is None:
            terminal = [(sizes[-1], "identity")]
        if sum(n for n, _ in terminal) != sizes[-1]:
            raise ValueError(
                f"terminal segments cover {sum(n for n, _ in terminal)} outputs, "
                f"layer has {sizes[-1]}"
            )
        for _, tag in terminal:
            if tag not in ACTIVATIONS:
                raise ValueError(f"unknown terminal activation {tag!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.sizes = list(sizes)
        self.hidden = hidden
        self.terminal = [(int(n), tag) for n, tag in terminal]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    # -- forward / backward -------------------------------------------------

    def _terminal_apply(self, z):
        out = np.empty_like(z)
        start = 0
        for n, tag in self.terminal:
            out[..., start : start + n] = _apply(tag, z[..., start : start + n])
            start += n
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cache(x)
        return y

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping per-layer inputs and outputs for backward."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]}, expected {self.sizes[0]}")
        inputs = []
        outputs = []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            h = self._terminal_apply(z) if i == last else _apply(self.hidden, z)
            outputs.append(h)
        y = h[0] if squeeze else h
        return y, (inputs, outputs, squeeze)

    def backward(self, cache, grad_out: np.ndarray):
        """Backpropagate `grad_out` through the cached forward pass.

        Returns (grads, grad_x) where grads is a flat list matching
        `parameters()` order [W0, b0, W1, b1, ...]. No batch averaging is
        applied; fold any 1/B factor into `grad_out`.
        """
        inputs, outputs, squeeze = cache
        g = np.asarray(grad_out, dtype=float)
        if squeeze:
            g = g[None, :]
        last = len(self.weights) - 1
        grads = [None] * (2 * len(self.weights))
        for i in range(last, -1, -1):
            y = outputs[i]
            if i == last:
                gz = np.empty_like(g)
                start = 0
                for n, tag in self.terminal:
                    sl = slice(start, start + n)
                    gz[:, sl] = _apply_grad(tag, y[:, sl], g[:, sl])
                    start += n
            else:
                gz = _apply_grad(self.hidden, y, g)
            grads[2 * i] = inputs[i].T @ gz
            grads[2 * i + 1] = gz.sum(axis=0)
            g = gz @ self.weights[i].T
        return grads, (g[0] if squeeze else g)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self):
        """Live references, ordered [W0, b0, W1, b1, ...]."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def copy(self) -> "DenseNetwork":
        dup = DenseNetwork.__new__(DenseNetwork)
        dup.sizes = list(self.sizes)
        dup.hidden = self.hidden
        dup.terminal = list(self.terminal)
        dup.weights = [W.copy() for W in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def load_parameters(self, params):
        flat = self.parameters()
        if len(flat) != len(params):
            raise ValueError(f"expected {len(flat)} arrays, got {len(params)}")
        for dst, src in zip(flat, params):
            if dst.shape != np.shape(src):
                raise ValueError(f"shape mismatch {dst.shape} vs {np.shape(src)}")
            dst[...] = src


@dataclass
class Adam:
    """Adaptive-moment optimizer over a flat list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        """One in-place update; raises DivergenceError on non-finite grads."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise DivergenceError(
                    f"non-finite gradient in parameter {i} (shape {np.shape(g)})"
                )
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- checkpointing ----------------------------------------------------------


def save_checkpoint(path, nets: dict, optimizers: dict | None = None,
                    rng: np.random.Generator | None = None,
                    extra: dict | None = None) -> None:
    """Write networks, optimizer moments, and RNG state to one .npz file.

    Layout: arrays "<name>.W<i>" / "<name>.b<i>" per layer, optimizer
    moments "<name>.m<j>" / "<name>.v<j>" over the flat parameter list, and
    a single JSON string under "meta" holding layer sizes, activation tags,
    segment maps, optimizer scalars, the generator state, and `extra`.
    """
    optimizers = optimizers or {}
    arrays = {}
    meta = {"version": 1, "nets": {}, "optimizers": {}, "extra": extra or {}}
    for name, net in nets.items():
        meta["nets"][name] = {
            "sizes": net.sizes,
            "hidden": net.hidden,
            "terminal": [[n, tag] for n, tag in net.terminal],
        }
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{name}.W{i}"] = W
            arrays[f"{name}.b{i}"] = b
    for name, opt in optimizers.items():
        meta["optimizers"][name] = {
            "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
            "eps": opt.eps, "t": opt.t, "n_arrays": 0 if opt.m is None else len(opt.m),
        }
        for j, (m, v) in enumerate(zip(opt.m or [], opt.v or [])):
            arrays[f"{name}.m{j}"] = m
            arrays[f"{name}.v{j}"] = v
    meta["rng_state"] = rng.bit_generator.state if rng is not None else None
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint.

    Returns (nets, optimizers, rng_state, extra); rng_state is a generator
    state dict assignable to `rng.bit_generator.state`, or None.
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        nets = {}
        for name, desc in meta["nets"].items():
            net = DenseNetwork.__new__(DenseNetwork)
            net.sizes = list(desc["sizes"])
            net.hidden = desc["hidden"]
            net.terminal = [(int(n), tag) for n, tag in desc["terminal"]]
            net.weights = []
            net.biases = []
            for i in range(len(net.sizes) - 1):
                net.weights.append(data[f"{name}.W{i}"].copy())
                net.biases.append(data[f"{name}.b{i}"].copy())
            nets[name] = net
        optimizers = {}
        for name, desc in meta["optimizers"].items():
            opt = Adam(lr=desc["lr"], beta1=desc["beta1"], beta2=desc["beta2"],
                       eps=desc["eps"])
            opt.t = int(desc["t"])
            n = int(desc["n_arrays"])
            if n:
                opt.m = [data[f"{name}.m{j}"].copy() for j in range(n)]
                opt.v = [data[f"{name}.v{j}"].copy() for j in range(n)]
            optimizers[name] = opt
    return nets, optimizers, meta["rng_state"], meta["extra"]
