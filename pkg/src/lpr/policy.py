"""Behaviour-cloned path policy: (start config, goal pose) -> whole path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import EePose, Path
from .nn import NetParams, init_mlp, mlp_backward, mlp_forward
from .world import check_collision_batch

HIDDEN = (64, 256, 256)


@dataclass
class PolicyInput:
    start_config: np.ndarray
    goal: EePose

    def __post_init__(self):
        self.start_config = np.asarray(self.start_config, dtype=float)

    def vector(self) -> np.ndarray:
        v = np.concatenate([self.start_config, self.goal.encode()])
        if not np.all(np.isfinite(v)):
            raise ValueError("policy input is not finite")
        return v


def init_policy(d: int, T: int, rng: np.random.Generator) -> NetParams:
    return init_mlp([d + 5, *HIDDEN, T * d], rng)


def _shape(params: NetParams):
    d = params.dims[0] - 5
    return d, params.dims[-1] // d


def predict_configs(params: NetParams, X) -> np.ndarray:
    """Batched raw prediction: inputs (N, d+5) -> configs (N, T, d) with the
    first config replaced by the start."""
    d, T = _shape(params)
    X = np.atleast_2d(X)
    Q = mlp_forward(params, X).reshape(len(X), T, d)
    Q[:, 0] = X[:, :d]
    return Q


def policy_predict(params: NetParams, inp: PolicyInput, scene=None) -> Path:
    """One path from the policy.  With a ``scene`` the collision flag is set."""
    configs = predict_configs(params, inp.vector()[None])[0]
    path = Path(configs, "policy")
    if scene is not None:
        path.in_collision = bool(check_collision_batch(scene, configs).any())
    return path


def bc_loss_and_grads(params: NetParams, inputs, targets):
    """Mean over the batch of summed squared config errors.

    ``inputs`` is a list of PolicyInput (or an (N, d+5) array) and ``targets``
    a list of Paths (or an (N, T, d) array) already normalized to T.
    """
    d, T = _shape(params)
    X = np.array([i.vector() for i in inputs]) if isinstance(inputs, list) else np.atleast_2d(inputs)
    Y = np.array([p.configs for p in targets]) if isinstance(targets, list) else np.asarray(targets, dtype=float)
    if Y.shape != (len(X), T, d):
        raise ValueError(f"targets must have shape {(len(X), T, d)}, got {Y.shape}")
    out, cache = mlp_forward(params, X, cache=True)
    pred = out.reshape(len(X), T, d)
    pred[:, 0] = X[:, :d]
    err = pred - Y
    loss = float(np.sum(err ** 2) / len(X))
    g = 2.0 * err / len(X)
    g[:, 0] = 0.0  # the first config is pinned to the start
    grads, _ = mlp_backward(params, cache, g.reshape(len(X), T * d))
    return loss, grads


def validity_filter(candidate: Path, sampled: list) -> bool:
    """Keep the policy path only if it is shorter in joint space than the
    average sampled path.  No comparison basis means no."""
    if not sampled:
        return False
    return candidate.cspace_length < float(np.mean([p.cspace_length for p in sampled]))
