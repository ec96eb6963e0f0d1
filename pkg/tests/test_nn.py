import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lpr.nn import (AdamState, NetParams, backprop, init_mlp, load_params, mlp_backward, mlp_forward,
                    optimizer_step, save_params, set_max_pool, set_max_pool_backward, soft_update)
from oracles import central_difference, mlp_reference, relative_error


def layer(W, b):
    return NetParams([np.asarray(W, dtype=float)], [np.asarray(b, dtype=float)])


# --- forward --------------------------------------------------------------------

def test_zero_net_outputs_zero():
    p = init_mlp([4, 8, 3], np.random.default_rng(0)).zeros_like()
    np.testing.assert_array_equal(mlp_forward(p, np.ones(4)), np.zeros(3))


def test_identity_final_layer_is_linear():
    np.testing.assert_array_equal(mlp_forward(layer(np.eye(2), [0, 0]), [1.0, -2.0]), [1.0, -2.0])


def test_forward_matches_reference(rng):
    p = init_mlp([5, 7, 3], rng)
    for b in p.biases:
        b[:] = rng.normal(size=b.shape)
    x = rng.normal(size=5)
    np.testing.assert_allclose(mlp_forward(p, x), mlp_reference(p.weights, p.biases, x), atol=1e-12)


def test_forward_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        mlp_forward(init_mlp([3, 2], rng), np.ones(4))


def test_layer_chaining_is_validated():
    with pytest.raises(ValueError):
        NetParams([np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])


def test_glorot_bounds(rng):
    p = init_mlp([10, 30], rng)
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 40)
    assert not p.biases[0].any()


# --- max pool -----------------------------------------------------------------------

def test_max_pool_examples():
    np.testing.assert_array_equal(set_max_pool([[1.0, 5.0]]), [1, 5])
    np.testing.assert_array_equal(set_max_pool([[1, 5], [3, 2]]), [3, 5])
    with pytest.raises(ValueError):
        set_max_pool(np.zeros((0, 3)))


@given(arrays(float, (6, 4), elements=st.floats(-10, 10)), st.permutations(range(6)))
def test_max_pool_permutation_and_duplication(F, perm):
    np.testing.assert_array_equal(set_max_pool(F[list(perm)]), set_max_pool(F))
    np.testing.assert_array_equal(set_max_pool(np.vstack([F, F])), set_max_pool(F))


def test_max_pool_backward_routes_to_first_argmax():
    F = np.array([[1.0, 2.0], [1.0, 5.0], [0.0, 5.0]])
    g = set_max_pool_backward(F, np.array([10.0, 20.0]))
    np.testing.assert_array_equal(g, [[10, 0], [0, 20], [0, 0]])


# --- gradients ----------------------------------------------------------------------

def test_linear_mse_gradient_closed_form():
    W = np.array([[0.3, -0.2, 0.5]])
    p = layer(W, [0.1])
    x, target = np.array([1.0, 2.0, -1.0]), 0.7
    pred = mlp_forward(p, x)[0]
    g = backprop(p, x, np.array([2 * (pred - target)]))
    np.testing.assert_allclose(g.weights[0][0], 2 * (pred - target) * x, atol=1e-15)
    assert g.biases[0][0] == pytest.approx(2 * (pred - target))


def test_dead_relu_unit_passes_no_gradient():
    p = NetParams([np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])], [np.zeros(2), np.zeros(1)])
    g = backprop(p, np.array([2.0]), np.array([1.0]))
    assert g.weights[0][1, 0] == 0.0 and g.weights[1][0, 1] == 0.0
    assert g.weights[0][0, 0] == 2.0


@pytest.mark.parametrize("seed", range(5))
def test_random_three_layer_net_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = init_mlp([4, 6, 5, 3], rng)
    for b in p.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    X, U = rng.normal(size=(7, 4)), rng.normal(size=(7, 3))

    def f():
        return float(np.sum(mlp_forward(p, X) * U))

    g = backprop(p, X, U)
    arrs = p.arrays()
    numeric = central_difference(f, arrs, [range(a.size) for a in arrs])
    for a, n in zip(g.arrays(), numeric):
        assert relative_error(a.ravel(), n).max() <= 1e-4


def test_backward_returns_input_gradient(rng):
    p = init_mlp([3, 4, 2], rng)
    x, u = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
    _, cache = mlp_forward(p, x, cache=True)
    _, gx = mlp_backward(p, cache, u)
    numeric = central_difference(lambda: float(np.sum(mlp_forward(p, x) * u)), [x], [range(3)])[0]
    assert relative_error(gx.ravel(), numeric).max() <= 1e-6


def test_backward_shape_mismatch(rng):
    p = init_mlp([3, 2], rng)
    _, cache = mlp_forward(p, np.ones((2, 3)), cache=True)
    with pytest.raises(ValueError):
        mlp_backward(p, cache, np.ones((2, 5)))


# --- optimiser and target updates ------------------------------------------------------

def scalar(w):
    return layer([[w]], [0.0])


def test_zero_gradient_leaves_params():
    p = init_mlp([3, 2], np.random.default_rng(0))
    new, _ = optimizer_step(p, p.zeros_like(), AdamState.for_params(p), 1e-3)
    for a, b in zip(new.arrays(), p.arrays()):
        np.testing.assert_array_equal(a, b)


def test_one_step_descends_and_converges():
    p, st_ = scalar(1.0), AdamState.for_params(scalar(1.0))
    p1, _ = optimizer_step(p, scalar(2.0), st_, 0.1)
    assert abs(p1.weights[0][0, 0]) < 1
    for _ in range(200):
        w = p.weights[0][0, 0]
        p, st_ = optimizer_step(p, scalar(2 * w), st_, 0.1)
    assert abs(p.weights[0][0, 0]) < 1e-2


def test_adam_is_deterministic():
    rng = np.random.default_rng(3)
    p = init_mlp([3, 4, 1], rng)
    g = init_mlp([3, 4, 1], rng)
    a, sa = optimizer_step(p, g, AdamState.for_params(p), 1e-3)
    b, sb = optimizer_step(p, g, AdamState.for_params(p), 1e-3)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    assert sa.t == sb.t == 1


def test_soft_update_examples():
    t, o = scalar(0.0), scalar(2.0)
    assert soft_update(t, o, 1.0).weights[0][0, 0] == 2.0
    assert soft_update(t, o, 0.0).weights[0][0, 0] == 0.0
    assert soft_update(t, o, 0.5).weights[0][0, 0] == 1.0
    with pytest.raises(ValueError):
        soft_update(init_mlp([2, 3], np.random.default_rng(0)), init_mlp([2, 4], np.random.default_rng(0)), 0.5)


@given(st.floats(0.01, 1.0))
def test_soft_update_contracts(tau):
    rng = np.random.default_rng(0)
    t, o = init_mlp([3, 4, 2], rng), init_mlp([3, 4, 2], rng)

    def dist(a, b):
        return np.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(a.arrays(), b.arrays())))

    assert dist(soft_update(t, o, tau), o) <= (1 - tau) * dist(t, o) + 1e-12


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    p = init_mlp([5, 8, 2], rng)
    _, st_ = optimizer_step(p, init_mlp([5, 8, 2], rng), AdamState.for_params(p), 1e-3)
    save_params(tmp_path / "net.npz", p, st_)
    q, st2 = load_params(tmp_path / "net.npz")
    assert q.dims == p.dims
    for a, b in zip(q.arrays() + st2.m.arrays() + st2.v.arrays(), p.arrays() + st_.m.arrays() + st_.v.arrays()):
        assert a.tobytes() == b.tobytes()
    assert st2.t == st_.t
