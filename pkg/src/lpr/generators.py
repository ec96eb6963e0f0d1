"""Sample-based path generators: RRT-Connect planning and quadratic Bezier
curves in the workspace converted to joint space by IK."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import EePose, Path, fk_batch, ik_batch, normalize_path, orientation_error, wrap_angle
from . import _kernels
from .world import SceneState, check_collision_batch, packed_primitives


@dataclass
class PlannerConfig:
    M: int = 20
    collision_free_fraction: float = 0.5
    step_size: float = 0.1
    max_iterations: int = 2000
    goal_ik_attempts: int = 8
    shortcut_attempts: int = 50

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0.0 <= self.collision_free_fraction <= 1.0:
            raise ValueError("collision_free_fraction must lie in [0, 1]")


@dataclass
class BezierConfig:
    B: int = 20
    midpoint_std: float = 0.2
    control_points: int = 3

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.midpoint_std <= 0:
            raise ValueError("midpoint_std must be positive")
        if self.control_points != 3:
            raise ValueError("only quadratic curves (3 control points) are supported")


# --- curves -----------------------------------------------------------------

def bernstein(n: int, i: int, t) -> float:
    if not (0 <= i <= n):
        raise ValueError(f"need 0 <= i <= n, got i={i}, n={n}")
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    return math.comb(n, i) * t ** i * (1.0 - t) ** (n - i)


def bernstein_basis(n: int, t) -> np.ndarray:
    """All n+1 basis values at each t: shape (len(t), n+1)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.stack([bernstein(n, i, t) for i in range(n + 1)], axis=-1)


def bezier_point(control_points, t: float) -> np.ndarray:
    P = np.asarray(control_points, dtype=float)
    if len(P) < 2:
        raise ValueError("need at least 2 control points")
    return bernstein_basis(len(P) - 1, t)[0] @ P


def bezier_curve(control_points, ts) -> np.ndarray:
    P = np.asarray(control_points, dtype=float)
    return bernstein_basis(len(P) - 1, ts) @ P


def midpoint_std(cfg: BezierConfig, start, goal) -> float:
    dist = float(np.linalg.norm(np.asarray(goal) - np.asarray(start)))
    return cfg.midpoint_std * min(max(dist, 0.5), 1.5)


def convert_waypoints(scene: SceneState, pts, oris, *, tol=1e-7, orientation_weight=0.1):
    """IK every curve in ``pts`` (K, T, 2) waypoint by waypoint, seeding each
    solve with the previous waypoint's solution.  Waypoint 0 is the current
    configuration.  Returns configs (K, T, d) and a per-curve success mask."""
    arm = scene.arm
    pts = np.ascontiguousarray(pts, dtype=float)
    oris = np.ascontiguousarray(np.broadcast_to(np.asarray(oris, dtype=float), (pts.shape[1],)))
    return _kernels.convert_curves(arm.link_lengths, arm.base_position, arm.joint_limits[:, 0].copy(),
                                   arm.joint_limits[:, 1].copy(), pts, oris, scene.q.astype(float),
                                   orientation_weight, 60, 60, tol)


def bezier_raw(scene: SceneState, goal: EePose, cfg: BezierConfig, rng_seed, T: int = 32):
    """Unnormalized Bezier conversions: (waypoints, configs, ok)."""
    rng = np.random.default_rng(rng_seed)
    start, start_ori = fk_batch(scene.arm, scene.q[None])
    start, start_ori = start[0], float(start_ori[0])
    std = midpoint_std(cfg, start, goal.position)
    mids = rng.normal(0.5 * (start + goal.position), std, size=(cfg.B, 2))
    ts = np.linspace(0.0, 1.0, T)
    W = bernstein_basis(2, ts)  # (T, 3)
    pts = (W[None, :, 0, None] * start + W[None, :, 1, None] * mids[:, None, :]
           + W[None, :, 2, None] * goal.position)
    oris = start_ori + ts * float(wrap_angle(goal.orientation - start_ori))
    Q, ok = convert_waypoints(scene, pts, oris)
    return pts, Q, ok


def sample_beziers(scene: SceneState, goal: EePose, cfg: BezierConfig, rng_seed, T: int = 32) -> list:
    _, Q, ok = bezier_raw(scene, goal, cfg, rng_seed, T)
    paths = []
    for k in np.flatnonzero(ok):
        p = normalize_path(Path(Q[k], "bezier"), T)
        p.in_collision = bool(check_collision_batch(scene, p.configs).any())
        paths.append(p)
    return paths


# --- planning ---------------------------------------------------------------

def rrt_connect(scene: SceneState, start, goal, rng, *, step=0.1, max_iterations=2000, check=True):
    """Bidirectional RRT with greedy connection between ``start`` and
    ``goal``.  With ``check`` off the scene is treated as empty.  Returns a
    vertex array, or ``None`` if the trees never met."""
    arm = scene.arm
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    samples = rng.uniform(lo, hi, size=(max_iterations, arm.d))
    verts = _kernels.rrt_connect(np.asarray(start, dtype=float), np.asarray(goal, dtype=float), samples,
                                 step, check, arm.link_lengths, arm.base_position, *packed_primitives(scene))
    return verts if len(verts) else None


def shortcut(scene: SceneState, verts, rng, *, attempts=50, res=0.05, check=True):
    """Replace random vertex spans with straight segments when the segment
    (sampled every ``res``) stays free."""
    arm = scene.arm
    draws = rng.random((attempts, 2))
    return _kernels.shortcut(np.asarray(verts, dtype=float), draws, res, check, arm.link_lengths,
                             arm.base_position, *packed_primitives(scene))


def _compress(verts, tol=1e-9):
    """Drop interior vertices that lie on the line through their neighbours."""
    out = [verts[0]]
    for k in range(1, len(verts) - 1):
        a, b, c = out[-1], verts[k], verts[k + 1]
        ab, bc = b - a, c - b
        nab, nbc = np.linalg.norm(ab), np.linalg.norm(bc)
        if nab < tol:
            continue
        if nbc > tol and abs(ab @ bc / (nab * nbc) - 1.0) < tol:
            continue
        out.append(b)
    out.append(verts[-1])
    return np.array(out)


def goal_configs(scene: SceneState, goal: EePose, n: int, attempts: int, rng) -> list:
    """Up to ``n`` IK solutions of ``goal``; sample 0 is seeded at the current
    configuration first so an already-satisfied goal is found."""
    arm = scene.arm
    seeds = arm.random_config(rng, n * attempts)
    seeds[0] = scene.q
    Q, ok = ik_batch(arm, np.repeat(goal.position[None], len(seeds), 0), goal.orientation, seeds)
    full = ok & (orientation_error(arm, Q, goal.orientation) <= 1e-4)
    out = []
    for s in range(n):
        block = slice(s * attempts, (s + 1) * attempts)
        # prefer a solution that also meets the goal orientation
        for mask in (full[block], ok[block]):
            if mask.any():
                out.append(Q[s * attempts + int(np.argmax(mask))])
                break
    return out


def sample_plans(scene: SceneState, goal: EePose, cfg: PlannerConfig, rng_seed, T: int = 32) -> list:
    """Up to ``cfg.M`` planner paths toward IK solutions of ``goal``.  The
    first ``ceil(fraction * M)`` are planned with collision checking, the rest
    ignore the scene; every path carries a post-hoc collision flag."""
    rng = np.random.default_rng(rng_seed)
    targets = goal_configs(scene, goal, cfg.M, cfg.goal_ik_attempts, rng)
    n_checked = math.ceil(cfg.collision_free_fraction * cfg.M)
    paths = []
    for s, qg in enumerate(targets):
        check = s < n_checked
        verts = rrt_connect(scene, scene.q, qg, rng, step=cfg.step_size,
                            max_iterations=cfg.max_iterations, check=check)
        if verts is None:
            continue
        verts = _compress(shortcut(scene, verts, rng, attempts=cfg.shortcut_attempts, check=check))
        p = normalize_path(Path(verts, "planner"), T)
        hits = check_collision_batch(scene, p.configs)
        if check and hits.any():
            # resampled points can fall between checked ones; never report them as free
            continue
        p.in_collision = bool(hits.any())
        paths.append(p)
    return paths
