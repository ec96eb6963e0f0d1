"""Path ranking Q-function: a shared per-config network, a max-pool over the
path and a head that also sees the path's collision flag."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import EePose, Path
from .nn import (AdamState, NetParams, init_mlp, mlp_backward, mlp_forward, optimizer_step,
                 soft_update)

PER_CONFIG = (64, 128, 1024)
HEAD = (512, 512, 1)


@dataclass
class RankerParams:
    per_config: NetParams
    head: NetParams

    def __post_init__(self):
        if self.head.dims[0] != self.per_config.dims[-1] + 1:
            raise ValueError("head input must be the pooled feature plus the collision flag")
        if self.head.dims[-1] != 1:
            raise ValueError("head must output a single value")

    @property
    def d(self) -> int:
        return self.per_config.dims[0] - 5

    def copy(self) -> "RankerParams":
        return RankerParams(self.per_config.copy(), self.head.copy())


def init_ranker(d: int, rng: np.random.Generator, per_config=PER_CONFIG, head=HEAD) -> RankerParams:
    pc = init_mlp([d + 5, *per_config], rng)
    return RankerParams(pc, init_mlp([per_config[-1] + 1, *head], rng))


def encode_paths(paths, goals):
    """Stack candidates into the network layout: per-config inputs
    (N, T, d+5) and collision flags (N,)."""
    C = np.array([p.configs for p in paths], dtype=float)
    G = np.array([g.encode() for g in goals], dtype=float)
    X = np.concatenate([C, np.broadcast_to(G[:, None, :], (*C.shape[:2], G.shape[1]))], axis=2)
    flags = np.array([1.0 if p.in_collision else 0.0 for p in paths])
    return X, flags


def q_forward(params: RankerParams, X, flags, *, cache: bool = False):
    """Q-values for a batch of encoded paths (N, T, d+5)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[-1] != params.per_config.dims[0]:
        raise ValueError(f"expected (N, T, {params.per_config.dims[0]}) path inputs, got {X.shape}")
    if not cache:
        pooled = mlp_forward(params.per_config, X).max(axis=1)
        z = np.concatenate([np.maximum(pooled, 0.0), np.asarray(flags, dtype=float)[:, None]], axis=1)
        return mlp_forward(params.head, z)[:, 0]
    H, pc_cache = mlp_forward(params.per_config, X, cache=True)
    arg = np.argmax(H, axis=1)  # (N, F), first index on ties
    pooled = np.take_along_axis(H, arg[:, None, :], axis=1)[:, 0]
    feat = np.maximum(pooled, 0.0)
    z = np.concatenate([feat, np.asarray(flags, dtype=float)[:, None]], axis=1)
    out, head_cache = mlp_forward(params.head, z, cache=True)
    return out[:, 0], (X.shape, pc_cache, arg, pooled, head_cache)


def q_backward(params: RankerParams, cache, dq) -> RankerParams:
    shape, pc_cache, arg, pooled, head_cache = cache
    g_head, dz = mlp_backward(params.head, head_cache, np.asarray(dq, dtype=float)[:, None])
    dpool = dz[:, :-1] * (pooled > 0)
    N, T, _ = shape
    dH = np.zeros((N, T, dpool.shape[1]))
    np.put_along_axis(dH, arg[:, None, :], dpool[:, None, :], axis=1)
    g_pc, _ = mlp_backward(params.per_config, pc_cache, dH)
    return RankerParams(g_pc, g_head)


def q_value(params: RankerParams, path: Path, goal: EePose) -> float:
    X, flags = encode_paths([path], [goal])
    return float(q_forward(params, X, flags)[0])


def q_values(params: RankerParams, paths: list, goal: EePose) -> np.ndarray:
    if not paths:
        return np.zeros(0)
    X, flags = encode_paths(paths, [goal] * len(paths))
    return q_forward(params, X, flags)


def select_path(params: RankerParams, candidates: list, goal: EePose, *, epsilon: float = 0.0,
                rng: np.random.Generator | None = None):
    """Highest-valued candidate (lowest index on ties).  With probability
    ``epsilon`` a uniformly random candidate is returned instead.

    Returns (path, index, q_values)."""
    if not candidates:
        raise ValueError("no candidate paths to rank")
    q = q_values(params, candidates, goal)
    idx = int(np.argmax(q))
    if epsilon > 0:
        if rng is None:
            raise ValueError("exploration needs an rng")
        if rng.random() < epsilon:
            idx = int(rng.integers(len(candidates)))
    return candidates[idx], idx, q


# --- temporal-difference training ----------------------------------------------

@dataclass
class RankerTrainerState:
    online: RankerParams
    target: RankerParams
    gamma: float = 0.99
    tau: float = 0.005
    opt: tuple | None = None  # Adam state for (per_config, head)
    lr: float = 1e-3
    steps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.online.per_config.dims != self.target.per_config.dims or \
                self.online.head.dims != self.target.head.dims:
            raise ValueError("online and target networks differ in shape")
        if self.opt is None:
            self.opt = (AdamState.for_params(self.online.per_config), AdamState.for_params(self.online.head))


def new_trainer_state(d: int, rng: np.random.Generator, *, gamma=0.99, tau=0.005, lr=1e-3,
                      per_config=PER_CONFIG, head=HEAD) -> RankerTrainerState:
    online = init_ranker(d, rng, per_config, head)
    return RankerTrainerState(online, online.copy(), gamma, tau, lr=lr)


@dataclass
class TDBatch:
    """Array form of a transition batch."""

    X: np.ndarray
    flags: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    X_next: np.ndarray  # rows for non-terminal transitions only
    flags_next: np.ndarray
    next_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def td_batch(transitions) -> TDBatch:
    for tr in transitions:
        if tr.reward not in (0, 1):
            raise ValueError("reward must be 0 or 1")
        if tr.terminal != (tr.next_executed_path is None):
            raise ValueError("a transition has a successor path iff it is non-terminal")
    X, flags = encode_paths([t.executed_path for t in transitions], [t.goal for t in transitions])
    rows = np.array([i for i, t in enumerate(transitions) if not t.terminal], dtype=int)
    nxt = [transitions[i] for i in rows]
    if nxt:
        Xn, fn = encode_paths([t.next_executed_path for t in nxt], [t.next_goal for t in nxt])
    else:
        Xn, fn = np.zeros((0, *X.shape[1:])), np.zeros(0)
    return TDBatch(X, flags, np.array([float(t.reward) for t in transitions]),
                   np.array([bool(t.terminal) for t in transitions]), Xn, fn, rows)


def td_targets(state: RankerTrainerState, batch: TDBatch) -> np.ndarray:
    """r for terminal rows, r + gamma * Q_target(successor) otherwise; the
    target network is only consulted for non-terminal rows."""
    y = batch.reward.copy()
    if len(batch.next_rows):
        y[batch.next_rows] += state.gamma * q_forward(state.target, batch.X_next, batch.flags_next)
    return y


def td_loss_and_grads(state: RankerTrainerState, transitions):
    batch = transitions if isinstance(transitions, TDBatch) else td_batch(transitions)
    y = td_targets(state, batch)
    q, cache = q_forward(state.online, batch.X, batch.flags, cache=True)
    err = q - y
    loss = float(np.mean(err ** 2))
    grads = q_backward(state.online, cache, 2.0 * err / len(err))
    return loss, grads


def ranker_train_step(state: RankerTrainerState, replay, batch_size: int, rng: np.random.Generator):
    """One Adam step on the TD loss followed by a soft target update."""
    if len(replay) < batch_size:
        raise ValueError(f"replay holds {len(replay)} transitions, need {batch_size}")
    loss, grads = td_loss_and_grads(state, replay.sample_batch(batch_size, rng))
    return apply_td_step(state, grads), loss


def apply_td_step(state: RankerTrainerState, grads: RankerParams) -> RankerTrainerState:
    pc, opt_pc = optimizer_step(state.online.per_config, grads.per_config, state.opt[0], state.lr)
    head, opt_head = optimizer_step(state.online.head, grads.head, state.opt[1], state.lr)
    online, opt = RankerParams(pc, head), (opt_pc, opt_head)
    target = RankerParams(soft_update(state.target.per_config, online.per_config, state.tau),
                          soft_update(state.target.head, online.head, state.tau))
    return RankerTrainerState(online, target, state.gamma, state.tau, opt, state.lr, state.steps + 1)


# --- diagnostics ----------------------------------------------------------------

@dataclass
class RankRecord:
    """What the ranker saw and chose at one environment step."""

    episode: int
    stage: int
    sources: list
    q_values: list
    chosen: int
    greedy: int

    def row(self) -> dict:
        return {"episode": self.episode, "stage": self.stage, "sources": self.sources,
                "q_values": [float(q) for q in self.q_values], "chosen": self.chosen,
                "greedy": self.greedy}
