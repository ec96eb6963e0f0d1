"""Planar scenes: obstacles, articulated objects, collision checking and
open-loop path execution with grasp constraints."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .kinematics import ArmSpec, Path, joint_positions, wrap_angle

GRASP_RADIUS = 0.05
KINDS = ("prismatic", "revolute", "free")


def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


@dataclass
class Circle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.radius = float(self.radius)

    def to_dict(self):
        return {"type": "circle", "center": self.center.tolist(), "radius": self.radius}


@dataclass
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    def to_dict(self):
        return {"type": "segment", "a": self.a.tolist(), "b": self.b.tolist()}


def primitive_from_dict(d):
    if d["type"] == "circle":
        return Circle(d["center"], d["radius"])
    if d["type"] == "segment":
        return Segment(d["a"], d["b"])
    raise ValueError(f"unknown primitive type {d['type']!r}")


@dataclass
class ArticulatedObject:
    """A single-joint object.

    Geometry by kind:

    * ``prismatic``: ``anchor`` is the front-face centre at joint 0 and
      ``axis_or_pivot`` the unit pull direction.  The body is a segment of
      half-width ``body_size`` across the axis.
    * ``revolute``: ``axis_or_pivot`` is the hinge point and ``anchor`` the
      lid tip at joint 0; positive joint values rotate counter-clockwise.
      The body is the hinge-to-tip segment.
    * ``free``: ``anchor`` is the home centre, ``axis_or_pivot`` the unit
      push direction and ``position`` the current centre.  The joint value is
      the displacement from home along the push direction.  The body is a
      disc of radius ``body_size``.

    ``handle_offset`` is expressed in the world frame at joint 0 (relative to
    the front centre, the tip, or the centre respectively) and moves rigidly
    with the object.
    """

    kind: str
    anchor: np.ndarray
    axis_or_pivot: np.ndarray
    joint_value: float
    joint_range: tuple
    handle_offset: np.ndarray
    success_threshold: float
    body_size: float = 0.1
    position: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.axis_or_pivot = np.asarray(self.axis_or_pivot, dtype=float)
        self.handle_offset = np.asarray(self.handle_offset, dtype=float)
        self.joint_range = (float(self.joint_range[0]), float(self.joint_range[1]))
        self.joint_value = float(self.joint_value)
        if self.kind == "free" and self.position is None:
            self.position = self.anchor + self.joint_value * self.axis_or_pivot
        if self.position is not None:
            self.position = np.asarray(self.position, dtype=float)
        lo, hi = self.joint_range
        if not lo <= self.joint_value <= hi:
            raise ValueError(f"joint value {self.joint_value} outside {self.joint_range}")
        if not lo <= self.success_threshold <= hi:
            raise ValueError(f"success threshold {self.success_threshold} outside {self.joint_range}")

    def handle_at(self, j: float) -> np.ndarray:
        if self.kind == "prismatic":
            return self.anchor + self.handle_offset + j * self.axis_or_pivot
        if self.kind == "revolute":
            pivot = self.axis_or_pivot
            return pivot + _rot(j) @ (self.anchor + self.handle_offset - pivot)
        return self.position + self.handle_offset

    @property
    def handle(self) -> np.ndarray:
        return self.handle_at(self.joint_value)

    def body(self):
        """Collision primitive for the current state."""
        if self.kind == "prismatic":
            c = self.anchor + self.joint_value * self.axis_or_pivot
            n = np.array([-self.axis_or_pivot[1], self.axis_or_pivot[0]]) * self.body_size
            return Segment(c - n, c + n)
        if self.kind == "revolute":
            pivot = self.axis_or_pivot
            return Segment(pivot, pivot + _rot(self.joint_value) @ (self.anchor - pivot))
        return Circle(self.position, self.body_size)

    def project(self, p) -> float:
        """Joint value whose handle lies closest to point ``p`` (clamped)."""
        lo, hi = self.joint_range
        if self.kind == "prismatic":
            j = float((p - self.anchor - self.handle_offset) @ self.axis_or_pivot)
        elif self.kind == "revolute":
            r0 = self.anchor + self.handle_offset - self.axis_or_pivot
            r = p - self.axis_or_pivot
            dj = np.arctan2(r0[0] * r[1] - r0[1] * r[0], r0 @ r)
            # unwrap around the current value so a sweep never jumps by 2*pi
            j = self.joint_value + float(wrap_angle(dj - self.joint_value))
        else:
            raise ValueError("free objects have no constraint surface")
        return float(np.clip(j, lo, hi))

    def to_dict(self):
        return {
            "kind": self.kind,
            "anchor": self.anchor.tolist(),
            "axis_or_pivot": self.axis_or_pivot.tolist(),
            "joint_value": self.joint_value,
            "joint_range": list(self.joint_range),
            "handle_offset": self.handle_offset.tolist(),
            "success_threshold": self.success_threshold,
            "body_size": self.body_size,
            "position": None if self.position is None else self.position.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["anchor"], d["axis_or_pivot"], d["joint_value"], d["joint_range"],
                   d["handle_offset"], d["success_threshold"], d["body_size"], d["position"])


@dataclass
class SceneState:
    arm: ArmSpec
    q: np.ndarray
    gripper_closed: bool = False
    obstacles: list = field(default_factory=list)
    objects: list = field(default_factory=list)
    attached: int | None = None
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    task: str = ""
    seed: int = 0
    target: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.grasp_offset = np.asarray(self.grasp_offset, dtype=float)
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=float)

    def copy(self) -> "SceneState":
        return SceneState(
            self.arm, self.q.copy(), self.gripper_closed, list(self.obstacles),
            [copy.copy(o) for o in self.objects], self.attached, self.grasp_offset.copy(),
            self.task, self.seed, self.target,
        )

    def ee(self) -> np.ndarray:
        return joint_positions(self.arm, self.q)[0, -1]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "arm": self.arm.to_dict(),
            "q": self.q.tolist(),
            "gripper_closed": self.gripper_closed,
            "obstacles": [o.to_dict() for o in self.obstacles],
            "objects": [o.to_dict() for o in self.objects],
            "attached": self.attached,
            "grasp_offset": self.grasp_offset.tolist(),
            "target": None if self.target is None else self.target.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "SceneState":
        return cls(
            ArmSpec.from_dict(d["arm"]), d["q"], d["gripper_closed"],
            [primitive_from_dict(o) for o in d["obstacles"]],
            [ArticulatedObject.from_dict(o) for o in d["objects"]],
            d["attached"], d["grasp_offset"], d["task"], d["seed"], d.get("target"),
        )


# --- geometry ---------------------------------------------------------------

def collision_primitives(scene: SceneState, include_objects: bool = True) -> list:
    prims = list(scene.obstacles)
    if include_objects:
        prims += [o.body() for i, o in enumerate(scene.objects) if i != scene.attached]
    return prims


def packed_primitives(scene: SceneState, include_objects: bool = True):
    """Circle centres, radii and segment endpoints as flat arrays."""
    prims = collision_primitives(scene, include_objects)
    circles = [p for p in prims if isinstance(p, Circle)]
    segs = [p for p in prims if isinstance(p, Segment)]
    return (np.array([c.center for c in circles], dtype=float).reshape(-1, 2),
            np.array([c.radius for c in circles], dtype=float),
            np.array([s.a for s in segs], dtype=float).reshape(-1, 2),
            np.array([s.b for s in segs], dtype=float).reshape(-1, 2))


def check_collision_batch(scene: SceneState, Q, include_objects: bool = True) -> np.ndarray:
    """Per-config flag: some link touches an obstacle or (optionally) a
    non-attached object body."""
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=float)))
    if Q.shape[1] != scene.arm.d:
        raise ValueError(f"expected {scene.arm.d} joint values, got {Q.shape[1]}")
    arm = scene.arm
    return _kernels.hits_many(Q, arm.link_lengths, arm.base_position,
                              *packed_primitives(scene, include_objects))


def check_collision(scene: SceneState, q) -> bool:
    """True iff some link touches an obstacle or a non-attached object body."""
    return bool(check_collision_batch(scene, np.asarray(q)[None])[0])


def path_in_collision(scene: SceneState, path: Path) -> bool:
    return bool(check_collision_batch(scene, path.configs).any())


# --- execution --------------------------------------------------------------

def _try_attach(scene: SceneState):
    ee = scene.ee()
    best, best_d = None, GRASP_RADIUS
    for i, o in enumerate(scene.objects):
        dist = float(np.linalg.norm(ee - o.handle))
        if dist <= best_d:
            best, best_d = i, dist
    if best is not None:
        scene.attached = best
        obj = scene.objects[best]
        scene.grasp_offset = ee - (obj.position if obj.kind == "free" else obj.handle)


def _follow(scene: SceneState, ee):
    """Drag the attached object with the end effector; break on deviation."""
    obj = scene.objects[scene.attached]
    if obj.kind == "free":
        obj.position = ee - scene.grasp_offset
        lo, hi = obj.joint_range
        obj.joint_value = float(np.clip((obj.position - obj.anchor) @ obj.axis_or_pivot, lo, hi))
        return
    j = obj.project(ee)
    if np.linalg.norm(ee - obj.handle_at(j)) > GRASP_RADIUS:
        scene.attached = None
        scene.grasp_offset = np.zeros(2)
        return
    obj.joint_value = j


def _push(scene: SceneState, ee):
    """Free bodies touched by the fingertip slide out of the way."""
    for i, o in enumerate(scene.objects):
        if o.kind != "free" or i == scene.attached:
            continue
        v = o.position - ee
        dist = float(np.linalg.norm(v))
        if dist < o.body_size:
            v = v / dist if dist > 1e-12 else o.axis_or_pivot
            o.position = ee + v * o.body_size
            lo, hi = o.joint_range
            o.joint_value = float(np.clip((o.position - o.anchor) @ o.axis_or_pivot, lo, hi))


def step_configs(scene: SceneState, configs, gripper_closed: bool) -> tuple[SceneState, int]:
    """Run the arm through ``configs``; returns the new scene and how many
    configs were actually reached (obstacle contact truncates)."""
    scene = scene.copy()
    configs = np.atleast_2d(configs)
    scene.gripper_closed = bool(gripper_closed)
    if not scene.gripper_closed:
        scene.attached = None
        scene.grasp_offset = np.zeros(2)
    elif scene.attached is None:
        _try_attach(scene)
    blocked = check_collision_batch(scene, configs, include_objects=False)
    n = int(np.argmax(blocked)) if blocked.any() else len(configs)
    if n == 0:
        return scene, 0
    ees = joint_positions(scene.arm, configs[:n])[:, -1]
    for k in range(n):
        scene.q = configs[k].copy()
        if scene.attached is not None:
            _follow(scene, ees[k])
        _push(scene, ees[k])
    return scene, n


def execute_path(scene: SceneState, path: Path, gripper_closed: bool, success_predicate):
    """Execute a path open-loop.  Returns ``(next_scene, reward, done)``."""
    if not np.allclose(path.configs[0], scene.q, atol=1e-9, rtol=0):
        raise ValueError("path does not start at the current configuration")
    nxt, _ = step_configs(scene, path.configs[1:], gripper_closed)
    success = bool(success_predicate(nxt))
    return nxt, int(success), success
