"""The four shipped tasks, their scripted goal oracles and scripted experts.

Every task shares one 3-link arm based at the origin.  Objects sit in front
of the arm (positive x); the arm starts folded up and to the left.  Each
task has a small fixed stage count; the episode budget ``max_steps`` equals
it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .generators import PlannerConfig, convert_waypoints, sample_plans
from .kinematics import ArmSpec, EePose, Path, fk_batch, normalize_path, wrap_angle
from .world import ArticulatedObject, Circle, SceneState, Segment, execute_path

ARM = ArmSpec(
    link_lengths=[0.45, 0.35, 0.2],
    joint_limits=[[-np.pi, np.pi], [-2.7, 2.7], [-2.7, 2.7]],
)
HOME = np.array([1.0, 1.5, 1.2])
DEMO_FORMAT_VERSION = 1


class DemoFailed(RuntimeError):
    pass


def _unit(a):
    return np.array([np.cos(a), np.sin(a)])


def _perp(v):
    return np.array([-v[1], v[0]])


@dataclass
class TaskSpec:
    name: str
    scene_generator: Callable[[int], SceneState]
    stages: list  # one callable(scene) -> EePose per stage
    success_predicate: Callable[[SceneState], bool]
    max_steps: int
    experts: list  # "plan" | "arc" | "line" per stage

    @property
    def n_stages(self) -> int:
        return len(self.stages)


def _home(rng):
    return HOME + rng.uniform(-0.1, 0.1, size=3)


# --- reach_target -----------------------------------------------------------

def _reach_scene(seed: int) -> SceneState:
    rng = np.random.default_rng([seed, 0])
    r, a = rng.uniform(0.45, 0.85), rng.uniform(-1.0, 1.0)
    target = r * _unit(a)
    side = rng.choice([-1.0, 1.0])
    ob = rng.uniform(0.55, 0.75) * _unit(a + side * rng.uniform(0.35, 0.7))
    return SceneState(ARM, _home(rng), obstacles=[Circle(ob, 0.07)], task="reach_target",
                      seed=seed, target=target)


def _reach_goal(scene):
    t = scene.target
    return EePose(t, np.arctan2(t[1], t[0]), False)


def _reach_success(scene):
    return bool(np.linalg.norm(scene.ee() - scene.target) <= 0.02)


# --- push_block -------------------------------------------------------------

PUSH_DISTANCE = 0.25


def _push_scene(seed: int) -> SceneState:
    rng = np.random.default_rng([seed, 1])
    r, a = rng.uniform(0.55, 0.72), rng.uniform(-0.7, 0.1)
    home = r * _unit(a)
    axis = _unit(a + np.pi / 2)
    block = ArticulatedObject("free", home, axis, 0.0, (-0.5, 0.5), -0.07 * _unit(a),
                              PUSH_DISTANCE, body_size=0.04)
    ob = rng.uniform(0.85, 0.95) * _unit(a + rng.uniform(0.0, 0.5))
    return SceneState(ARM, _home(rng), obstacles=[Circle(ob, 0.06)], objects=[block],
                      task="push_block", seed=seed)


def _block_target(obj):
    return obj.anchor + obj.success_threshold * obj.axis_or_pivot


def _push_grasp(scene):
    b = scene.objects[0]
    return EePose(b.handle, np.arctan2(-b.handle_offset[1], -b.handle_offset[0]), False)


def _push_place(scene):
    b = scene.objects[0]
    p = _block_target(b) + b.handle_offset
    return EePose(p, np.arctan2(-b.handle_offset[1], -b.handle_offset[0]), True)


def _push_success(scene):
    b = scene.objects[0]
    return bool(np.linalg.norm(b.position - _block_target(b)) <= 0.03)


# --- open_drawer -------------------------------------------------------------
# The drawer slides tangentially past the arm at short range, so the handle
# line dips toward the base; joint-space interpolation keeps the radius
# nearly constant and drifts off the line.

DRAWER_PULL = 0.5
DRAWER_TOL = 0.02


def _drawer_scene(seed: int) -> SceneState:
    rng = np.random.default_rng([seed, 2])
    r, a = rng.uniform(0.42, 0.5), rng.uniform(-0.9, -0.6)
    front = r * _unit(a)
    axis = _unit(a + np.pi / 2 + rng.uniform(-0.15, 0.15))
    drawer = ArticulatedObject("prismatic", front, axis, 0.0, (0.0, 0.6), 0.06 * axis,
                               DRAWER_PULL, body_size=0.1)
    side = _perp(axis)
    cabinet = [Segment(front + s * 0.13 * side - 0.02 * axis, front + s * 0.13 * side - 0.3 * axis)
               for s in (1.0, -1.0)]
    return SceneState(ARM, _home(rng), obstacles=cabinet, objects=[drawer],
                      task="open_drawer", seed=seed)


def _drawer_orientation(obj):
    return np.arctan2(-obj.axis_or_pivot[1], -obj.axis_or_pivot[0])


def _drawer_grasp(scene):
    d = scene.objects[0]
    return EePose(d.handle, _drawer_orientation(d), False)


def _drawer_pull(scene):
    d = scene.objects[0]
    return EePose(d.handle_at(d.success_threshold), _drawer_orientation(d), True)


def _drawer_success(scene):
    o = scene.objects[0]
    return bool(o.joint_value >= o.success_threshold - DRAWER_TOL)


# --- open_lid ---------------------------------------------------------------
# The hinge sits far out with the lid pointing back at the arm, so the
# handle arc bows toward the base, against the outward bow of joint-space
# motion.

LID_LENGTH = 0.35
LID_OPEN = 1.3
LID_TOL = 0.05


def _lid_scene(seed: int) -> SceneState:
    rng = np.random.default_rng([seed, 3])
    pa = rng.uniform(-0.3, 0.1)
    pivot = rng.uniform(0.8, 0.9) * _unit(pa)
    u = _unit(pa + np.pi + rng.uniform(-0.2, 0.2))
    lid = ArticulatedObject("revolute", pivot + LID_LENGTH * u, pivot, 0.0, (0.0, np.pi / 2),
                            0.06 * _perp(u), LID_OPEN, body_size=0.0)
    return SceneState(ARM, _home(rng), objects=[lid], task="open_lid", seed=seed)


def _lid_orientation(obj, j):
    # gripper faces the lid across the handle offset
    u = obj.anchor - obj.axis_or_pivot
    return float(wrap_angle(np.arctan2(u[1], u[0]) + j - np.pi / 2))


def _lid_grasp(scene):
    o = scene.objects[0]
    return EePose(o.handle, _lid_orientation(o, o.joint_value), False)


def _lid_open(scene):
    o = scene.objects[0]
    j = o.joint_value + o.success_threshold
    return EePose(o.handle_at(j), _lid_orientation(o, j), True)


def _lid_success(scene):
    o = scene.objects[0]
    return bool(o.joint_value >= o.success_threshold - LID_TOL)


TASKS = {
    "reach_target": TaskSpec("reach_target", _reach_scene, [_reach_goal], _reach_success, 1, ["plan"]),
    "push_block": TaskSpec("push_block", _push_scene, [_push_grasp, _push_place], _push_success, 2,
                           ["plan", "plan"]),
    "open_drawer": TaskSpec("open_drawer", _drawer_scene, [_drawer_grasp, _drawer_pull],
                            _drawer_success, 2, ["plan", "line"]),
    "open_lid": TaskSpec("open_lid", _lid_scene, [_lid_grasp, _lid_open], _lid_success, 2,
                         ["plan", "arc"]),
}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise KeyError(f"unknown task {name!r}; valid tasks: {', '.join(sorted(TASKS))}") from None


def goal_oracle(task: TaskSpec, scene: SceneState, stage: int, noise_std: float = 0.0,
                rng: np.random.Generator | None = None) -> EePose:
    """Scripted next-best pose for ``stage``, optionally with position noise."""
    if not 0 <= stage < task.n_stages:
        raise IndexError(f"stage {stage} out of range for {task.name} ({task.n_stages} stages)")
    goal = task.stages[stage](scene)
    if noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        goal = EePose(goal.position + rng.normal(0.0, noise_std, 2), goal.orientation, goal.gripper_closed)
    return goal


def execute(task: TaskSpec, scene: SceneState, path: Path, gripper_closed: bool):
    return execute_path(scene, path, gripper_closed, task.success_predicate)


# --- scripted expert ----------------------------------------------------------

def _constraint_path(scene: SceneState, goal: EePose, kind: str, T: int):
    """IK-converted handle trajectory: circular arc or straight line."""
    obj = scene.objects[0]
    ts = np.linspace(0.0, 1.0, T)
    if kind == "arc":
        j0 = obj.joint_value
        js = j0 + ts * obj.success_threshold
        pts = np.array([obj.handle_at(j) for j in js])
        oris = np.array([_lid_orientation(obj, j) for j in js])
    else:
        start = obj.handle
        pts = start + ts[:, None] * (goal.position - start)
        oris = np.full(T, goal.orientation)
    pts[0] = fk_batch(scene.arm, scene.q[None])[0][0]
    Q, ok = convert_waypoints(scene, pts[None], oris)
    if not ok[0]:
        return None
    return normalize_path(Path(Q[0], "demo"), T)


def expert_path(task: TaskSpec, scene: SceneState, goal: EePose, stage: int, rng_seed, T: int = 32):
    kind = task.experts[stage]
    if kind in ("arc", "line"):
        return _constraint_path(scene, goal, kind, T)
    cfg = PlannerConfig(M=10, collision_free_fraction=1.0)
    plans = [p for p in sample_plans(scene, goal, cfg, rng_seed, T) if not p.in_collision]
    if not plans:
        return None
    best = min(plans, key=lambda p: p.cspace_length)
    return Path(best.configs, "demo")


def generate_demo(task: TaskSpec, seed: int, T: int = 32) -> list:
    """Scripted successful rollout: list of (scene, goal, path, reward)."""
    scene = task.scene_generator(seed)
    records = []
    for stage in range(task.n_stages):
        goal = goal_oracle(task, scene, stage)
        path = expert_path(task, scene, goal, stage, [seed, stage], T)
        if path is None:
            raise DemoFailed(f"{task.name} seed {seed}: no expert path for stage {stage}")
        nxt, reward, done = execute(task, scene, path, goal.gripper_closed)
        records.append((scene, goal, path, reward))
        scene = nxt
        if done:
            break
    if records[-1][3] != 1:
        raise DemoFailed(f"{task.name} seed {seed}: scripted expert did not succeed")
    return records


# --- persistence ----------------------------------------------------------------

def demo_to_dict(task_name: str, seed: int, demo: list) -> dict:
    return {
        "format": "lpr-demo",
        "version": DEMO_FORMAT_VERSION,
        "task": task_name,
        "seed": seed,
        "initial_scene": demo[0][0].to_dict(),
        "stages": [
            {"scene": s.to_dict(), "goal": g.to_dict(), "path": p.to_dict(), "reward": r}
            for s, g, p, r in demo
        ],
    }


def demo_from_dict(d: dict) -> list:
    if d.get("format") != "lpr-demo" or d.get("version") != DEMO_FORMAT_VERSION:
        raise ValueError("not a version-1 lpr demo file")
    return [
        (SceneState.from_dict(st["scene"]), EePose.from_dict(st["goal"]), Path.from_dict(st["path"]),
         int(st["reward"]))
        for st in d["stages"]
    ]


def save_demo(path, task_name: str, seed: int, demo: list):
    with open(path, "w") as f:
        json.dump(demo_to_dict(task_name, seed, demo), f)


def load_demo(path):
    with open(path) as f:
        d = json.load(f)
    return d["task"], d["seed"], demo_from_dict(d)


def replay_demo(task: TaskSpec, demo: list) -> int:
    """Re-execute stored paths from the stored initial scene; final reward."""
    scene = demo[0][0]
    reward = 0
    for _, goal, path, _ in demo:
        scene, reward, done = execute(task, scene, path, goal.gripper_closed)
        if done:
            break
    return reward
