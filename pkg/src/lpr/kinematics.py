"""Planar serial-arm kinematics.

Joint configurations are plain ``np.ndarray`` vectors of length ``d``.  Batched
helpers accept ``(N, d)`` arrays and are what the samplers use internally; the
scalar entry points wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

SOURCES = ("planner", "bezier", "policy", "demo")


class Unreachable(ValueError):
    """Target position lies outside the arm's reach."""


class NoConvergence(RuntimeError):
    """IK hit its iteration cap on every restart."""


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


@dataclass
class ArmSpec:
    link_lengths: np.ndarray
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    joint_limits: np.ndarray | None = None

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=float)
        self.base_position = np.asarray(self.base_position, dtype=float)
        if self.joint_limits is None:
            self.joint_limits = np.tile([-np.pi, np.pi], (len(self.link_lengths), 1))
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        if self.link_lengths.ndim != 1 or len(self.link_lengths) < 2:
            raise ValueError("arm needs at least two links")
        if np.any(self.link_lengths <= 0):
            raise ValueError("link lengths must be positive")
        if self.joint_limits.shape != (self.d, 2) or np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint_limits must be (d, 2) with lo < hi")

    @property
    def d(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    def clip(self, q):
        return np.clip(q, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def within_limits(self, q, tol=1e-12) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.joint_limits[:, 0] - tol) and np.all(q <= self.joint_limits[:, 1] + tol))

    def random_config(self, rng: np.random.Generator, n: int | None = None):
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        size = (self.d,) if n is None else (n, self.d)
        return rng.uniform(lo, hi, size=size)

    def to_dict(self) -> dict:
        return {
            "link_lengths": self.link_lengths.tolist(),
            "base_position": self.base_position.tolist(),
            "joint_limits": self.joint_limits.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmSpec":
        return cls(d["link_lengths"], d["base_position"], d["joint_limits"])


@dataclass
class EePose:
    position: np.ndarray
    orientation: float = 0.0
    gripper_closed: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.orientation = float(wrap_angle(self.orientation))

    def encode(self) -> np.ndarray:
        """(x, y, cos, sin, gripper) goal encoding shared by both networks."""
        return np.array([
            self.position[0], self.position[1],
            np.cos(self.orientation), np.sin(self.orientation),
            1.0 if self.gripper_closed else 0.0,
        ])

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "orientation": self.orientation,
                "gripper_closed": self.gripper_closed}

    @classmethod
    def from_dict(cls, d: dict) -> "EePose":
        return cls(d["position"], d["orientation"], d["gripper_closed"])


@dataclass
class Path:
    """Ordered joint configurations plus generation metadata."""

    configs: np.ndarray
    source: str = "planner"
    in_collision: bool = False

    def __post_init__(self):
        self.configs = np.atleast_2d(np.asarray(self.configs, dtype=float))
        if self.source not in SOURCES:
            raise ValueError(f"unknown path source {self.source!r}")

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def cspace_length(self) -> float:
        return path_length(self.configs)

    @property
    def start(self) -> np.ndarray:
        return self.configs[0]

    @property
    def end(self) -> np.ndarray:
        return self.configs[-1]

    def to_dict(self) -> dict:
        return {"configs": self.configs.tolist(), "source": self.source, "in_collision": self.in_collision}

    @classmethod
    def from_dict(cls, d: dict) -> "Path":
        return cls(np.array(d["configs"], dtype=float), d["source"], bool(d["in_collision"]))


def path_length(configs) -> float:
    configs = np.asarray(configs, dtype=float)
    if len(configs) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(configs, axis=0), axis=1).sum())


def joint_positions(spec: ArmSpec, Q) -> np.ndarray:
    """Positions of base, every joint and the end effector, shape (N, d+1, 2)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[-1] != spec.d:
        raise ValueError(f"expected {spec.d} joint values, got {Q.shape[-1]}")
    phi = np.cumsum(Q, axis=1)
    links = spec.link_lengths[None, :, None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    pts = np.concatenate([np.zeros((len(Q), 1, 2)), np.cumsum(links, axis=1)], axis=1)
    return pts + spec.base_position


def fk_batch(spec: ArmSpec, Q):
    """End-effector positions (N, 2) and orientations (N,)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    pts = joint_positions(spec, Q)
    return pts[:, -1], wrap_angle(Q.sum(axis=1))


def forward_kinematics(spec: ArmSpec, q, gripper_closed: bool = False) -> EePose:
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.d,):
        raise ValueError(f"expected {spec.d} joint values, got shape {q.shape}")
    pos, ori = fk_batch(spec, q[None])
    return EePose(pos[0], float(ori[0]), gripper_closed)


def ik_batch(spec: ArmSpec, pos, ori, seeds, *, orientation_weight=0.1, tol=1e-7, iters=60, polish_iters=60):
    """Solve many IK problems at once from the given seeds.

    Each row runs damped least squares on the weighted pose error, then a
    position-only pass if the orientation turned out to be infeasible.
    Returns ``(Q, ok)`` where ``ok`` marks rows whose position error is within
    ``tol``.  No restarts: callers decide what to do with failed rows.
    """
    pos = np.ascontiguousarray(np.atleast_2d(np.asarray(pos, dtype=float)))
    ori = np.ascontiguousarray(np.broadcast_to(np.asarray(ori, dtype=float), (len(pos),)))
    seeds = np.array(np.atleast_2d(seeds), dtype=float)
    lo, hi = spec.joint_limits[:, 0].copy(), spec.joint_limits[:, 1].copy()
    return _kernels.ik_many(spec.link_lengths, spec.base_position, lo, hi, pos, ori, seeds,
                            float(orientation_weight), iters, polish_iters, tol)


def orientation_error(spec: ArmSpec, Q, ori) -> np.ndarray:
    Q = np.atleast_2d(Q)
    return np.abs(wrap_angle(np.asarray(ori) - Q.sum(axis=1)))


def inverse_kinematics(spec: ArmSpec, target: EePose, seed_config, rng_seed: int = 0, *,
                       orientation_weight: float = 0.1, restarts: int = 20, tol: float = 1e-7,
                       iters: int = 100):
    """Damped-least-squares IK with seeded random restarts.

    The first attempt starts at ``seed_config``; restarts draw uniformly inside
    the joint limits from ``rng_seed``.  A solution matching the full pose is
    preferred; if the orientation is never met, the first position-exact
    solution is returned.
    """
    seed_config = np.asarray(seed_config, dtype=float)
    if seed_config.shape != (spec.d,):
        raise ValueError(f"expected {spec.d} joint values, got shape {seed_config.shape}")
    if np.linalg.norm(target.position - spec.base_position) > spec.reach + 1e-12:
        raise Unreachable(f"target {target.position} beyond reach {spec.reach:.3f}")
    rng = np.random.default_rng(rng_seed)
    seeds = np.vstack([seed_config[None], spec.random_config(rng, restarts)])
    fallback = None
    # small chunks first so the common case (seed converges) stays cheap
    for chunk in (seeds[:1], seeds[1:5], seeds[5:]):
        if len(chunk) == 0:
            continue
        Q, ok = ik_batch(spec, target.position[None].repeat(len(chunk), 0), target.orientation,
                         chunk, orientation_weight=orientation_weight, tol=tol,
                         iters=iters, polish_iters=iters)
        full = ok & (orientation_error(spec, Q, target.orientation) <= 1e-4)
        if full.any():
            return Q[np.argmax(full)]
        if fallback is None and ok.any():
            fallback = Q[np.argmax(ok)]
    if fallback is not None:
        return fallback
    raise NoConvergence(f"IK failed for target {target.position} after {len(seeds)} attempts")


def config_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def resample(configs, T: int) -> np.ndarray:
    """Arc-length-uniform linear resampling to exactly ``T`` configs."""
    configs = np.asarray(configs, dtype=float)
    if len(configs) < 2 or T < 2:
        raise ValueError("need at least 2 configs and T >= 2")
    seg = np.linalg.norm(np.diff(configs, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    keep = np.concatenate([[True], seg > 0])
    pts, s = configs[keep], s[keep]
    if len(pts) == 1:
        out = np.repeat(configs[:1], T, axis=0)
    else:
        u = np.linspace(0.0, s[-1], T)
        k = np.clip(np.searchsorted(s, u, side="right") - 1, 0, len(pts) - 2)
        frac = np.clip((u - s[k]) / (s[k + 1] - s[k]), 0.0, 1.0)
        out = pts[k] + frac[:, None] * (pts[k + 1] - pts[k])
    out[0] = configs[0]
    out[-1] = configs[-1]
    return out


def normalize_path(raw: Path, T: int = 32) -> Path:
    return Path(resample(raw.configs, T), raw.source, raw.in_collision)
