"""Small dense networks in numpy: ReLU MLPs with manual reverse mode, a
set max-pool, Adam and soft target updates.  Everything is float64."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NetParams:
    """Layers as (weights (out, in), biases (out,)).  ReLU follows every layer
    except the last, which is linear.  Gradients use the same type."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: weights {W.shape} and biases {b.shape} disagree")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k} expects {W.shape[1]} inputs, previous layer gives "
                                 f"{self.weights[k - 1].shape[0]}")

    @property
    def dims(self) -> list:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def arrays(self) -> list:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "NetParams":
        return NetParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetParams":
        return NetParams([np.zeros_like(W) for W in self.weights], [np.zeros_like(b) for b in self.biases])

    def congruent(self, other: "NetParams") -> bool:
        return self.dims == other.dims

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_mlp(dims, rng: np.random.Generator) -> NetParams:
    """Glorot-uniform weights, zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"bad layer sizes {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def mlp_forward(params: NetParams, x, *, cache: bool = False):
    """Evaluate on inputs of shape (..., in).  With ``cache`` also returns the
    per-layer inputs needed by :func:`mlp_backward`."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dims[0]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.dims[0]}")
    lead = x.shape[:-1]
    h = x.reshape(-1, x.shape[-1])
    inputs = []
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ W.T + b
        if k < last:
            h = np.maximum(h, 0.0)
    out = h.reshape(*lead, h.shape[-1])
    return (out, inputs) if cache else out


def mlp_backward(params: NetParams, inputs: list, grad_out):
    """Reverse pass given the cached layer inputs.  Returns (Gradients,
    gradient w.r.t. the network input)."""
    g = np.asarray(grad_out, dtype=float)
    if g.shape[-1] != params.dims[-1]:
        raise ValueError(f"upstream gradient has {g.shape[-1]} features, network outputs {params.dims[-1]}")
    lead = g.shape[:-1]
    g = g.reshape(-1, g.shape[-1])
    if g.shape[0] != inputs[0].shape[0]:
        raise ValueError("upstream gradient batch does not match the cached forward pass")
    n = len(params.weights)
    dW, db = [None] * n, [None] * n
    for k in range(n - 1, -1, -1):
        dW[k] = g.T @ inputs[k]
        db[k] = g.sum(axis=0)
        g = g @ params.weights[k]
        if k > 0:
            g = g * (inputs[k] > 0)  # inputs[k] is the ReLU output of layer k-1
    return NetParams(dW, db), g.reshape(*lead, g.shape[-1])


def backprop(params: NetParams, x, upstream_gradient) -> NetParams:
    """Parameter gradients of <upstream_gradient, f(x)>."""
    _, inputs = mlp_forward(params, x, cache=True)
    grads, _ = mlp_backward(params, inputs, upstream_gradient)
    return grads


def set_max_pool(features, axis: int = 0):
    """Elementwise maximum over a set of equal-length feature vectors."""
    F = np.asarray(features, dtype=float)
    if F.ndim == 0 or F.shape[axis] == 0:
        raise ValueError("cannot pool an empty set")
    return F.max(axis=axis)


def set_max_pool_backward(features, grad, axis: int = 0):
    """Route ``grad`` to the maximal element of each feature (first on ties)."""
    F = np.asarray(features, dtype=float)
    idx = np.expand_dims(np.argmax(F, axis=axis), axis)
    out = np.zeros_like(F)
    np.put_along_axis(out, idx, np.expand_dims(grad, axis), axis=axis)
    return out


# --- optimisation -------------------------------------------------------------

@dataclass
class AdamState:
    m: NetParams
    v: NetParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like())


def _check_congruent(a: NetParams, b: NetParams):
    if not a.congruent(b):
        raise ValueError(f"shape mismatch: {a.dims} vs {b.dims}")


def optimizer_step(params: NetParams, grads: NetParams, state: AdamState, lr: float = 1e-3):
    """One bias-corrected Adam step; returns new (params, state)."""
    _check_congruent(params, grads)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)

    def pack(arrs):
        return NetParams(arrs[0::2], arrs[1::2])

    return pack(new_p), AdamState(pack(new_m), pack(new_v), t, b1, b2, state.eps)


def soft_update(target: NetParams, online: NetParams, tau: float) -> NetParams:
    """tau * online + (1 - tau) * target, elementwise."""
    _check_congruent(target, online)
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    return NetParams([tau * o + (1.0 - tau) * t for o, t in zip(online.weights, target.weights)],
                     [tau * o + (1.0 - tau) * t for o, t in zip(online.biases, target.biases)])


def add_scaled(a: NetParams, b: NetParams, scale: float = 1.0) -> NetParams:
    _check_congruent(a, b)
    return NetParams([x + scale * y for x, y in zip(a.weights, b.weights)],
                     [x + scale * y for x, y in zip(a.biases, b.biases)])


# --- checkpoints --------------------------------------------------------------
# Layout inside an .npz: "<prefix>dims" holds the layer sizes, then
# "<prefix>W<k>" / "<prefix>b<k>" the row-major (out, in) weights and biases;
# Adam state adds "<prefix>adam_t" and "m."/"v." prefixed copies.

def params_to_arrays(params: NetParams, prefix: str = "") -> dict:
    out = {f"{prefix}dims": np.array(params.dims, dtype=np.int64)}
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}W{k}"] = W
        out[f"{prefix}b{k}"] = b
    return out


def params_from_arrays(arrays, prefix: str = "") -> NetParams:
    n = len(arrays[f"{prefix}dims"]) - 1
    return NetParams([np.array(arrays[f"{prefix}W{k}"]) for k in range(n)],
                     [np.array(arrays[f"{prefix}b{k}"]) for k in range(n)])


def adam_to_arrays(state: AdamState, prefix: str = "") -> dict:
    out = {f"{prefix}adam_t": np.array(state.t, dtype=np.int64)}
    out.update(params_to_arrays(state.m, prefix + "m."))
    out.update(params_to_arrays(state.v, prefix + "v."))
    return out


def adam_from_arrays(arrays, prefix: str = "") -> AdamState:
    return AdamState(params_from_arrays(arrays, prefix + "m."), params_from_arrays(arrays, prefix + "v."),
                     int(arrays[f"{prefix}adam_t"]))


def save_params(path, params: NetParams, state: AdamState | None = None):
    arrays = params_to_arrays(params)
    if state is not None:
        arrays.update(adam_to_arrays(state))
    np.savez(path, **arrays)


def load_params(path):
    with np.load(path) as z:
        params = params_from_arrays(z)
        state = adam_from_arrays(z) if "adam_t" in z.files else None
    return params, state
