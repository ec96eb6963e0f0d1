"""Transition storage, keyframe discovery and demo augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import ArmSpec, EePose, Path, fk_batch, normalize_path
from .policy import PolicyInput
from .world import SceneState, check_collision_batch, execute_path, step_configs

CAPACITY = 100_000
STRIDE = 4
SPEED_THRESHOLD = 1e-3  # metres per waypoint


@dataclass
class Transition:
    scene: SceneState
    goal: EePose
    reward: int
    next_scene: SceneState
    executed_path: Path
    next_executed_path: Path | None = None
    next_goal: EePose | None = None
    terminal: bool = True
    episode_id: int = -1
    episode_succeeded: bool = False

    def __post_init__(self):
        if self.reward not in (0, 1):
            raise ValueError("reward must be 0 or 1")
        if self.terminal and self.next_executed_path is not None:
            raise ValueError("terminal transitions carry no successor path")
        if not self.terminal and (self.next_executed_path is None or self.next_goal is None):
            raise ValueError("non-terminal transitions need the successor path and goal")

    def policy_example(self):
        return PolicyInput(self.scene.q, self.goal), self.executed_path


def link_successors(transitions: list) -> list:
    """Chain an episode's transitions: each gets the next one's path and goal;
    the last is terminal."""
    for cur, nxt in zip(transitions[:-1], transitions[1:]):
        cur.next_executed_path, cur.next_goal, cur.terminal = nxt.executed_path, nxt.goal, False
    if transitions:
        last = transitions[-1]
        last.next_executed_path, last.next_goal, last.terminal = None, None, True
    return transitions


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity: int = CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.items: list = []
        self._next = 0
        self._slots: dict = {}  # episode id -> slots it was written to
        self._success: list | None = None

    def __len__(self) -> int:
        return len(self.items)

    def add(self, tr: Transition):
        if len(self.items) < self.capacity:
            slot = len(self.items)
            self.items.append(tr)
        else:
            slot = self._next
            self.items[slot] = tr
        self._next = (slot + 1) % self.capacity
        self._slots.setdefault(tr.episode_id, []).append(slot)
        self._success = None

    def mark_episode(self, episode_id, succeeded: bool):
        """Back-fill the outcome tag on every stored transition of an episode."""
        live = []
        for slot in self._slots.get(episode_id, []):
            if slot < len(self.items) and self.items[slot].episode_id == episode_id:
                self.items[slot].episode_succeeded = bool(succeeded)
                live.append(slot)
        if live:
            self._slots[episode_id] = live
        else:
            self._slots.pop(episode_id, None)
        self._success = None

    def add_episode(self, transitions: list, succeeded: bool):
        for tr in transitions:
            self.add(tr)
        if transitions:
            self.mark_episode(transitions[0].episode_id, succeeded)

    def success_indices(self) -> list:
        if self._success is None:
            self._success = [i for i, t in enumerate(self.items) if t.episode_succeeded]
        return self._success

    def sample_batch(self, n: int, rng: np.random.Generator) -> list:
        if not self.items:
            raise ValueError("replay buffer is empty")
        return [self.items[i] for i in rng.integers(len(self.items), size=n)]

    def sample_success_paths(self, n: int, rng: np.random.Generator) -> list:
        ok = self.success_indices()
        if not ok:
            raise ValueError("no transitions from successful episodes")
        return [self.items[ok[i]].policy_example() for i in rng.integers(len(ok), size=n)]


# --- demos --------------------------------------------------------------------

def demo_waypoints(demo: list):
    """Flatten a demo (list of (scene, goal, path, reward)) into waypoints
    plus the gripper state while moving to each waypoint."""
    configs = [demo[0][2].configs[0]]
    gripper = [demo[0][0].gripper_closed]
    for _, goal, path, _ in demo:
        configs.extend(path.configs[1:])
        gripper.extend([goal.gripper_closed] * (len(path.configs) - 1))
    return np.array(configs), np.array(gripper, dtype=bool)


def keyframe_indices(arm: ArmSpec, configs, gripper, threshold: float = SPEED_THRESHOLD) -> list:
    """Waypoints just before a gripper toggle or where the end effector
    (nearly) stops; runs of adjacent keyframes collapse to their last index."""
    configs = np.atleast_2d(configs)
    n = len(configs)
    ee, _ = fk_batch(arm, configs)
    speed = np.zeros(n)
    speed[:-1] = np.linalg.norm(np.diff(ee, axis=0), axis=1)
    toggle = np.zeros(n, dtype=bool)
    toggle[:-1] = gripper[:-1] != gripper[1:]
    flagged = np.flatnonzero(toggle | (speed < threshold))
    keys = [int(i) for i in flagged if i > 0 and (i + 1 not in flagged)]
    return keys or [n - 1]


def keyframe_discovery(demo: list, arm: ArmSpec | None = None, T: int = 32) -> list:
    """Split a successful demo into (goal pose, segment path) pairs."""
    arm = arm if arm is not None else demo[0][0].arm
    configs, gripper = demo_waypoints(demo)
    keys = keyframe_indices(arm, configs, gripper)
    ee, ori = fk_batch(arm, configs[keys])
    out, start = [], 0
    for j, k in enumerate(keys):
        goal = EePose(ee[j], float(ori[j]), bool(gripper[k]))
        out.append((goal, normalize_path(Path(configs[start:k + 1], "demo"), T)))
        start = k
    return out


def augment_starts(n: int, stride: int) -> list:
    """Indices of the intermediate waypoints used as extra start points."""
    if stride < 1:
        raise ValueError("stride must be positive")
    return list(range(1, n - 1, stride)) if stride < n else []


def demo_transitions(scene: SceneState, segments: list, success_predicate, episode_id,
                     stride: int = STRIDE, T: int = 32) -> list:
    """Replay the segments from ``scene`` into transitions, plus one
    augmented transition per ``stride``-th intermediate waypoint that starts
    there and finishes the segment.  Everything is tagged successful."""
    main, extra = [], []
    for goal, seg in segments:
        nxt, reward, _ = execute_path(scene, seg, goal.gripper_closed, success_predicate)
        seg.in_collision = bool(check_collision_batch(scene, seg.configs).any())
        main.append(Transition(scene, goal, reward, nxt, seg, episode_id=episode_id))
        for i in augment_starts(len(seg.configs), stride):
            mid, _ = step_configs(scene, seg.configs[1:i + 1], goal.gripper_closed)
            sub = normalize_path(Path(seg.configs[i:], "demo"), T)
            sub.in_collision = bool(check_collision_batch(mid, sub.configs).any())
            after, r, _ = execute_path(mid, sub, goal.gripper_closed, success_predicate)
            extra.append((len(main) - 1, Transition(mid, goal, r, after, sub, episode_id=episode_id)))
        scene = nxt
    link_successors(main)
    for j, tr in extra:
        src = main[j]
        if not src.terminal:
            tr.next_executed_path, tr.next_goal, tr.terminal = src.next_executed_path, src.next_goal, False
    out = main + [tr for _, tr in extra]
    for tr in out:
        tr.episode_succeeded = True
    return out
