import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lpr.kinematics import (ArmSpec, EePose, NoConvergence, Path, Unreachable, config_distance,
                            fk_batch, forward_kinematics, inverse_kinematics, joint_positions,
                            normalize_path, wrap_angle)
from lpr.tasks import ARM
from oracles import fk_chain, two_link_ik

angles = st.floats(-math.pi, math.pi, allow_nan=False)


# --- specs --------------------------------------------------------------------

def test_arm_spec_validation():
    with pytest.raises(ValueError):
        ArmSpec([1.0])
    with pytest.raises(ValueError):
        ArmSpec([1.0, -0.5])
    with pytest.raises(ValueError):
        ArmSpec([1.0, 1.0], joint_limits=[[0, 0], [-1, 1]])
    assert ArmSpec([1.0, 2.0, 3.0]).d == 3


def test_pose_orientation_wraps_into_half_open_interval():
    assert EePose([0, 0], -math.pi).orientation == pytest.approx(math.pi)
    assert EePose([0, 0], 3 * math.pi).orientation == pytest.approx(math.pi)
    assert EePose([0, 0], 2 * math.pi + 0.5).orientation == pytest.approx(0.5)


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = float(wrap_angle(a))
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


# --- forward kinematics -------------------------------------------------------------

@pytest.mark.parametrize("q, pos, ori", [
    ((0.0, 0.0), (2.0, 0.0), 0.0),
    ((math.pi / 2, 0.0), (0.0, 2.0), math.pi / 2),
    ((math.pi / 2, -math.pi / 2), (1.0, 1.0), 0.0),
])
def test_fk_examples(unit2, q, pos, ori):
    p = forward_kinematics(unit2, np.array(q))
    np.testing.assert_allclose(p.position, pos, atol=1e-12)
    assert p.orientation == pytest.approx(ori, abs=1e-12)


def test_fk_dimension_mismatch(unit2):
    with pytest.raises(ValueError):
        forward_kinematics(unit2, np.zeros(3))


@given(arrays(float, 3, elements=angles))
def test_fk_matches_explicit_chain(q):
    spec = ArmSpec([0.45, 0.35, 0.2], base_position=[0.1, -0.2])
    pts = joint_positions(spec, q)[0]
    np.testing.assert_allclose(pts, fk_chain(spec.link_lengths, q, spec.base_position), atol=1e-12)


# --- inverse kinematics -------------------------------------------------------------

def test_ik_full_extension_is_unique(unit2):
    q = inverse_kinematics(unit2, EePose([2.0, 0.0]), np.array([0.3, 0.4]))
    np.testing.assert_allclose(q, [0.0, 0.0], atol=2e-3)
    assert np.linalg.norm(forward_kinematics(unit2, q).position - [2, 0]) <= 1e-4


def test_ik_unreachable(unit2):
    with pytest.raises(Unreachable):
        inverse_kinematics(unit2, EePose([3.0, 0.0]), np.zeros(2))


def test_ik_matches_closed_form_elbow_solutions(unit2):
    target = np.array([math.sqrt(2), 0.0])
    solutions = two_link_ik(1.0, 1.0, *target)
    assert len(solutions) == 2
    found = set()
    for s in range(10):
        q = inverse_kinematics(unit2, EePose(target), np.random.default_rng(s).uniform(-3, 3, 2), rng_seed=s,
                               orientation_weight=0.0)
        assert np.linalg.norm(forward_kinematics(unit2, q).position - target) <= 1e-4
        dist = [np.linalg.norm(wrap_angle(q - np.array(sol))) for sol in solutions]
        assert min(dist) < 1e-3
        found.add(int(np.argmin(dist)))
    assert found == {0, 1}


@given(st.floats(0.05, 1.95), st.floats(-math.pi, math.pi), st.integers(0, 10 ** 6))
def test_ik_two_link_property(r, a, seed):
    spec = ArmSpec([1.0, 1.0])
    target = r * np.array([math.cos(a), math.sin(a)])
    q = inverse_kinematics(spec, EePose(target), np.zeros(2), rng_seed=seed, orientation_weight=0.0)
    assert min(np.linalg.norm(wrap_angle(q - np.array(s))) for s in two_link_ik(1, 1, *target)) < 1e-3


def test_ik_round_trip_on_random_reachable_targets():
    rng = np.random.default_rng(0)
    Q = ARM.random_config(rng, 1000)
    pos, ori = fk_batch(ARM, Q)
    worst = 0.0
    for k in range(1000):
        q = inverse_kinematics(ARM, EePose(pos[k], ori[k]), ARM.random_config(rng), rng_seed=k)
        assert ARM.within_limits(q)
        worst = max(worst, float(np.linalg.norm(fk_batch(ARM, q[None])[0][0] - pos[k])))
    assert worst <= 1e-4


def test_ik_seeds_give_distinct_solutions():
    target = EePose([0.5, 0.3], 0.0)
    sols = {tuple(np.round(inverse_kinematics(ARM, target, ARM.random_config(np.random.default_rng(s)), s), 3))
            for s in range(8)}
    assert len(sols) > 1


def test_ik_no_convergence_when_limits_forbid_the_target():
    spec = ArmSpec([1.0, 1.0], joint_limits=[[-0.1, 0.1], [-0.1, 0.1]])
    with pytest.raises(NoConvergence):
        inverse_kinematics(spec, EePose([0.0, 1.5]), np.zeros(2), restarts=3)


# --- distances and paths -------------------------------------------------------------

@pytest.mark.parametrize("a, b, d", [((0, 0), (0, 0), 0.0), ((0, 0), (3, 4), 5.0), ((1, 1), (2, 2), math.sqrt(2))])
def test_config_distance_examples(a, b, d):
    assert config_distance(a, b) == pytest.approx(d, abs=1e-15)


def test_config_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        config_distance([0, 0], [0, 0, 0])


@given(arrays(float, (3, 4), elements=st.floats(-10, 10)))
def test_config_distance_metric_axioms(X):
    a, b, c = X
    assert config_distance(a, b) == config_distance(b, a)
    assert config_distance(a, c) <= config_distance(a, b) + config_distance(b, c) + 1e-12
    assert config_distance(a, a) == 0.0


def test_normalize_inserts_midpoint():
    p = normalize_path(Path([[0.0, 0.0], [1.0, 2.0]], "planner", True), 3)
    np.testing.assert_array_equal(p.configs, [[0, 0], [0.5, 1.0], [1, 2]])
    assert p.source == "planner" and p.in_collision


def test_normalize_is_identity_on_uniform_paths():
    C = np.linspace([0.0, 1.0, -1.0], [1.0, 3.0, 0.0], 7)
    np.testing.assert_allclose(normalize_path(Path(C), 7).configs, C, atol=1e-15)


@given(arrays(float, (5, 3), elements=st.floats(-3, 3)), st.integers(2, 64))
def test_normalize_endpoints_exact_and_length(C, T):
    p = normalize_path(Path(C, "bezier"), T)
    assert len(p) == T
    np.testing.assert_array_equal(p.configs[0], C[0])
    np.testing.assert_array_equal(p.configs[-1], C[-1])
    assert p.cspace_length <= Path(C).cspace_length + 1e-9


@given(arrays(float, (3, 3), elements=st.floats(-3, 3)), st.integers(8, 64))
def test_normalize_length_within_five_percent(P, n):
    # piecewise-linear samples of a smooth joint-space curve
    t = np.linspace(0, 1, n)[:, None]
    C = (1 - t) ** 2 * P[0] + 2 * t * (1 - t) * P[1] + t ** 2 * P[2]
    raw = Path(C)
    assert abs(normalize_path(raw, 32).cspace_length - raw.cspace_length) <= 0.05 * raw.cspace_length + 1e-12


def test_cspace_length_matches_recomputed_sum(rng):
    C = rng.normal(size=(10, 3))
    manual = sum(np.linalg.norm(C[k + 1] - C[k]) for k in range(9))
    assert abs(Path(C).cspace_length - manual) <= 1e-9


def test_path_rejects_unknown_source():
    with pytest.raises(ValueError):
        Path(np.zeros((2, 2)), "teleport")
