import numpy as np
import pytest

from lpr.kinematics import EePose, Path, fk_batch
from lpr.replay import (ReplayBuffer, Transition, augment_starts, demo_transitions, demo_waypoints,
                        keyframe_discovery, keyframe_indices, link_successors)
from lpr.tasks import ARM, TASKS, generate_demo
from lpr.world import step_configs

SCENE = TASKS["reach_target"].scene_generator(0)
GOAL = EePose([0.5, 0.0])


def line(a, b, n):
    return np.linspace(np.asarray(a, float), np.asarray(b, float), n)


def tr(episode, reward=0, n=4, rng=None):
    rng = rng or np.random.default_rng(episode)
    return Transition(SCENE, GOAL, reward, SCENE, Path(rng.uniform(-1, 1, (n, 3)), "planner"), episode_id=episode)


# --- keyframes ------------------------------------------------------------------------

def test_constant_velocity_gives_final_keyframe():
    q = line([0.2, 0.4, 0.1], [0.9, 1.2, -0.3], 20)
    assert keyframe_indices(ARM, q, np.zeros(20, bool)) == [19]


def test_pause_adds_a_keyframe():
    a = line([0.2, 0.4, 0.1], [0.6, 0.8, 0.0], 10)
    b = line([0.6, 0.8, 0.0], [0.9, 1.2, -0.3], 10)
    q = np.vstack([a, a[-1:], a[-1:], b[1:]])  # dwell at a[-1]
    keys = keyframe_indices(ARM, q, np.zeros(len(q), bool))
    assert keys == [10, len(q) - 1]  # last stationary index of the dwell
    np.testing.assert_array_equal(q[keys[0]], a[-1])


def test_gripper_toggle_is_a_keyframe():
    q = line([0.2, 0.4, 0.1], [0.9, 1.2, -0.3], 20)
    grip = np.arange(20) > 7
    assert keyframe_indices(ARM, q, grip) == [7, 19]


def test_lid_demo_has_two_keyframes():
    task = TASKS["open_lid"]
    demo = generate_demo(task, 0)
    configs, grip = demo_waypoints(demo)
    keys = keyframe_indices(ARM, configs, grip)
    assert len(keys) == 2
    assert grip[keys[0] + 1] and not grip[keys[0]]  # gripper closes right after the first
    assert keys[1] == len(configs) - 1
    segments = keyframe_discovery(demo)
    assert [g.gripper_closed for g, _ in segments] == [False, True]
    pos, _ = fk_batch(ARM, configs[keys])
    for (goal, seg), p in zip(segments, pos):
        np.testing.assert_allclose(goal.position, p, atol=1e-12)
        np.testing.assert_allclose(fk_batch(ARM, seg.configs[-1:])[0][0], p, atol=1e-9)


# --- augmentation -----------------------------------------------------------------------

@pytest.mark.parametrize("n, stride, count", [(10, 5, 2), (10, 10, 0), (10, 12, 0), (10, 1, 8), (32, 4, 8)])
def test_augment_counts(n, stride, count):
    assert len(augment_starts(n, stride)) == count


def test_augment_rejects_bad_stride():
    with pytest.raises(ValueError):
        augment_starts(10, 0)


def test_augmented_subpaths_complete_their_segment():
    task = TASKS["open_drawer"]
    demo = generate_demo(task, 2)
    segments = keyframe_discovery(demo)
    trs = demo_transitions(demo[0][0], segments, task.success_predicate, episode_id=7, stride=5)
    n_main = len(segments)
    assert len(trs) == n_main + sum(len(augment_starts(len(s.configs), 5)) for _, s in segments)
    assert all(t.episode_succeeded and t.episode_id == 7 for t in trs)
    assert trs[n_main - 1].reward == 1 and trs[n_main - 1].terminal
    ends = {id(g): s.configs[-1] for g, s in segments}
    for t in trs[n_main:]:
        np.testing.assert_allclose(t.executed_path.configs[0], t.scene.q, atol=1e-12)
        np.testing.assert_allclose(t.executed_path.configs[-1], ends[id(t.goal)], atol=1e-6)
        done, _ = step_configs(t.scene, t.executed_path.configs, t.goal.gripper_closed)
        np.testing.assert_allclose(done.q, ends[id(t.goal)], atol=1e-6)


def test_link_successors():
    chain = link_successors([tr(0), tr(0), tr(0)])
    assert [t.terminal for t in chain] == [False, False, True]
    assert chain[0].next_executed_path is chain[1].executed_path and chain[1].next_goal is chain[2].goal


# --- buffer ----------------------------------------------------------------------------

def filled_buffer():
    buf = ReplayBuffer(100)
    for ep, ok in enumerate([True, False, True, False, True]):
        buf.add_episode([tr(ep, n=3 + ep) for _ in range(3)], ok)
    return buf


def test_success_sampler_never_returns_failures():
    buf = filled_buffer()
    good = {id(t.executed_path) for t in buf.items if t.episode_id in (0, 2, 4)}
    draws = buf.sample_success_paths(10_000, np.random.default_rng(0))
    assert all(id(path) in good for _, path in draws)


def test_sampling_with_replacement_and_seeding():
    buf = filled_buffer()
    assert len(buf.sample_batch(50, np.random.default_rng(0))) == 50
    a = buf.sample_batch(20, np.random.default_rng(3))
    b = buf.sample_batch(20, np.random.default_rng(3))
    assert [id(x) for x in a] == [id(x) for x in b]


def test_empty_and_failure_only_buffers_raise():
    with pytest.raises(ValueError):
        ReplayBuffer(4).sample_batch(1, np.random.default_rng(0))
    buf = ReplayBuffer(4)
    buf.add_episode([tr(0)], False)
    with pytest.raises(ValueError):
        buf.sample_success_paths(1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_back_fill_tags_whole_episode():
    buf = ReplayBuffer(10)
    buf.add_episode([tr(1), tr(1), tr(1, reward=1)], True)
    buf.add_episode([tr(2), tr(2)], False)
    assert [t.episode_succeeded for t in buf.items] == [True, True, True, False, False]


def test_eviction_keeps_tags_consistent():
    buf = ReplayBuffer(5)
    buf.add_episode([tr(1) for _ in range(4)], True)
    buf.add_episode([tr(2) for _ in range(3)], False)  # overwrites two of episode 1
    assert len(buf) == 5
    tags = {}
    for t in buf.items:
        tags.setdefault(t.episode_id, set()).add(t.episode_succeeded)
    assert tags == {1: {True}, 2: {False}}
    buf.mark_episode(1, False)  # only the survivors change, the new episode is untouched
    assert sum(t.episode_id == 1 and not t.episode_succeeded for t in buf.items) == 2
    assert all(not t.episode_succeeded for t in buf.items if t.episode_id == 2)
    assert sorted(buf.success_indices()) == []
