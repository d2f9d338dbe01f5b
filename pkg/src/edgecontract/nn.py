"""Minimal fixed-architecture MLP with analytic gradients and Adam.

Supports batched inputs (leading axis), explicit gradient tapes so several
forward passes can coexist before their backward passes (needed when
backpropagating through a multi-step denoising chain), and flat parameter
views for the optimizer and soft target updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Mlp", "GradTape", "AdamState", "adam_step", "save_weights", "load_weights"]

_ACTIVATIONS = ("relu", "tanh", "identity")

CHECKPOINT_VERSION = 1


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


@dataclass
class GradTape:
    """Cached per-layer inputs and pre-activations from one forward pass."""

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    batched: bool


class Mlp:
    """Fully connected network with one activation tag per layer."""

    def __init__(self, widths: list[int], activations: list[str], rng: np.random.Generator | None = None):
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.widths = list(widths)
        self.activations = list(activations)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            if rng is None:
                w = np.zeros((d_in, d_out))
            else:
                # He-style fan-in scaling
                w = rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in)
            self.weights.append(w)
            self.biases.append(np.zeros(d_out))
        self._tape: GradTape | None = None

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def apply(self, x: np.ndarray) -> tuple[np.ndarray, GradTape]:
        """Forward pass returning the output and an explicit gradient tape."""
        x = np.asarray(x, dtype=float)
        batched = x.ndim == 2
        h = x if batched else x[None, :]
        if h.shape[1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {h.shape[1]}")
        inputs, preacts = [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = _act(act, z)
        tape = GradTape(inputs=inputs, preacts=preacts, batched=batched)
        return (h if batched else h[0]), tape

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Forward pass; records an internal tape for :meth:`backward`."""
        y, self._tape = self.apply(x)
        return y

    def grads(
        self, tape: GradTape, upstream: np.ndarray
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Gradients of sum(output * upstream) w.r.t. parameters and input.

        Returns ``([(dW, db), ...], dx)``; parameter gradients are summed over
        the batch, ``dx`` keeps the batch axis of the forward input.
        """
        upstream = np.asarray(upstream, dtype=float)
        g = upstream if tape.batched else upstream[None, :]
        param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        for i in reversed(range(len(self.weights))):
            g = g * _act_grad(self.activations[i], tape.preacts[i])
            dw = tape.inputs[i].T @ g
            db = g.sum(axis=0)
            param_grads[i] = (dw, db)
            g = g @ self.weights[i].T
        return param_grads, (g if tape.batched else g[0])

    def backward(self, upstream: np.ndarray):
        """Backward through the tape recorded by the last :meth:`forward`."""
        if self._tape is None:
            raise RuntimeError("forward must be called before backward")
        return self.grads(self._tape, upstream)

    # -- parameter plumbing ------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def clone(self) -> "Mlp":
        net = Mlp(self.widths, self.activations)
        net.copy_from(self)
        return net


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp) -> "AdamState":
        params = net.parameters()
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
    """In-place adaptive-moment update with bias correction."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def flatten_param_grads(param_grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """Interleave (dW, db) pairs to match :meth:`Mlp.parameters` order."""
    out = []
    for dw, db in param_grads:
        out.append(dw)
        out.append(db)
    return out


def save_weights(path, net: Mlp) -> None:
    """Versioned binary checkpoint (npz with layer dims header)."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "widths": np.array(net.widths),
        "activations": np.array(net.activations),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    np.savez(path, **payload)


def load_weights(path) -> Mlp:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        widths = [int(x) for x in data["widths"]]
        activations = [str(x) for x in data["activations"]]
        net = Mlp(widths, activations)
        for i in range(len(net.weights)):
            net.weights[i][...] = data[f"w{i}"]
            net.biases[i][...] = data[f"b{i}"]
    return net
