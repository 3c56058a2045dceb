import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msglab.autodiff import (ShapeError, Tensor, backward, concat, conditional_gumbel_softmax,
                             gumbel_softmax_sample, parameter, straight_through)
from msglab.oracle import finite_difference_grad


def grad_check(build, x, rtol=1e-4, atol=1e-8):
    """Compare autodiff and central differences for a scalar function of one array."""
    p = parameter(x.copy())
    backward(build(p))
    numeric = finite_difference_grad(lambda v: float(build(Tensor(v)).values), x, 1e-5)
    err = np.linalg.norm(p.grad - numeric) / max(np.linalg.norm(numeric), atol)
    assert err <= rtol or np.abs(p.grad - numeric).max() <= atol, (err, p.grad, numeric)


WEIGHTS = np.array([[0.3, -1.1, 0.7], [1.9, 0.2, -0.4]])

UNARY_OPS = {
    "add": lambda t: (t + WEIGHTS).sum(),
    "sub": lambda t: ((WEIGHTS - t) * (WEIGHTS - t)).sum(),
    "neg": lambda t: (-(t * t)).sum(),
    "mul": lambda t: (t * WEIGHTS * t).sum(),
    "div": lambda t: (WEIGHTS / (t * t + 1.0)).sum(),
    "matmul": lambda t: (t @ WEIGHTS.T).tanh().sum(),
    "scale": lambda t: (t * t).scale(-2.5).sum(),
    "exp": lambda t: (t.exp() * WEIGHTS).sum(),
    "log": lambda t: ((t * t + 0.5).log() * WEIGHTS).sum(),
    "tanh": lambda t: (t.tanh() * WEIGHTS).sum(),
    "relu": lambda t: ((t + 0.05).relu() * WEIGHTS).sum(),
    "pos_part": lambda t: ((t - 0.05).pos_part() * WEIGHTS).sum(),
    "neg_part": lambda t: ((t + 0.05).neg_part() * WEIGHTS).sum(),
    "sum_axis": lambda t: (t.sum(axis=0) * np.array([1.0, -2.0, 0.5])).sum(),
    "mean_axis": lambda t: (t.mean(axis=1) * np.array([3.0, -1.0])).sum(),
    "softmax": lambda t: (t.softmax() * WEIGHTS).sum(),
    "log_softmax": lambda t: (t.log_softmax() * WEIGHTS).sum(),
    "gather": lambda t: (t.softmax().gather(np.array([2, 0])) * np.array([1.0, 3.0])).sum(),
    "getitem": lambda t: (t[np.array([1, 1, 0])] * WEIGHTS[[0, 1, 0]]).sum(),
    "transpose": lambda t: (t.T @ WEIGHTS).tanh().sum(),
    "reshape": lambda t: (t.reshape(3, 2) @ WEIGHTS).tanh().sum(),
    "concat": lambda t: (concat([t, t * t], axis=1) * np.tile(WEIGHTS, 2)).sum(),
}


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
@pytest.mark.parametrize("seed", range(10))
def test_every_op_matches_finite_differences(name, seed):
    x = np.random.default_rng(seed).normal(size=(2, 3))
    # keep relu-type kinks away from the probe points
    x = np.where(np.abs(x) < 0.1, x + 0.3, x)
    grad_check(UNARY_OPS[name], x)


def test_softmax_cross_terms_at_fixed_point():
    x = np.array([0.3, -1.2, 2.0])
    c = np.array([1.0, -2.0, 0.5])
    p = parameter(x)
    backward((p.softmax() * c).sum())
    s = np.exp(x) / np.exp(x).sum()
    # d/dx_k sum_i c_i s_i = s_k (c_k - c.s)
    expected = s * (c - c @ s)
    numeric = finite_difference_grad(lambda v: float((Tensor(v).softmax() * c).sum().values), x)
    assert np.abs(p.grad - expected).max() <= 1e-12
    assert np.abs(p.grad - numeric).max() <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_two_layer_network_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 4))
    w1, b1 = rng.normal(size=(4, 6)), rng.normal(size=6)
    w2, b2 = rng.normal(size=(6, 3)), rng.normal(size=3)
    labels = rng.integers(0, 3, size=5)
    params = [parameter(v.copy()) for v in (w1, b1, w2, b2)]

    def loss(ps):
        h = (Tensor(x) @ ps[0] + ps[1]).tanh()
        return -(h @ ps[2] + ps[3]).log_softmax().gather(labels).mean()

    backward(loss(params))
    for i, p in enumerate(params):
        def f(v, i=i):
            vals = [Tensor(q.values) for q in params]
            vals[i] = Tensor(v)
            return float(loss(vals).values)
        numeric = finite_difference_grad(f, p.values)
        assert np.linalg.norm(p.grad - numeric) / np.linalg.norm(numeric) <= 1e-4


def test_linear_map_gradient_is_input():
    x = np.array([1.5, -2.0, 0.25])
    w = parameter(np.zeros(3))
    backward((w * x).sum())
    np.testing.assert_array_equal(w.grad, x)


def test_constant_loss_leaves_zero_grads():
    w = parameter(np.ones(3))
    other = parameter(np.ones(2))
    backward((w * 0.0).sum() + 4.0)
    np.testing.assert_array_equal(w.grad, np.zeros(3))
    assert other.grad is None or not other.grad.any()


def test_independent_leaf_gets_zero_grad():
    a, b = parameter(np.ones(2)), parameter(np.ones(2))
    loss = (a * a).sum() + (b * 0.0).sum()
    backward(loss)
    np.testing.assert_array_equal(b.grad, np.zeros(2))


def test_backward_accumulates():
    w = parameter(np.array([2.0]))
    backward((w * w).sum())
    backward((w * w).sum())
    np.testing.assert_allclose(w.grad, [8.0])


def test_shared_subexpression():
    w = parameter(np.array([0.7, -0.2]))
    h = w.tanh()
    backward((h * h + h).sum())
    t = np.tanh(w.values)
    np.testing.assert_allclose(w.grad, (2 * t + 1) * (1 - t ** 2))


def test_backward_requires_scalar():
    w = parameter(np.ones(3))
    with pytest.raises(ShapeError):
        backward(w * 2.0)


def test_shape_mismatch_is_construction_error():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_non_finite_rejected_and_named():
    with pytest.raises(FloatingPointError):
        Tensor(np.array([1.0, np.nan]))
    with pytest.raises(FloatingPointError, match="log"):
        Tensor(np.array([0.0, 1.0])).log()


def test_trivial_identities():
    np.testing.assert_allclose(Tensor(np.zeros(2)).softmax().values, [0.5, 0.5])
    x = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(Tensor(x).exp().log().values, x, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.integers(1, 4))
def test_softmax_rows_are_distributions(row, n_rows):
    logits = np.tile(np.array(row), (n_rows, 1))
    s = Tensor(logits).softmax().values
    assert np.all(s >= 0)
    assert np.abs(s.sum(axis=-1) - 1.0).max() <= 1e-9


def test_dominated_logit_wins():
    rng = np.random.default_rng(0)
    for _ in range(20):
        out = gumbel_softmax_sample(np.array([0.0, 1e6, 0.0]), 1.0, hard=False, rng=rng)
        assert out.values[1] >= 1 - 1e-6


def test_uniform_logits_frequencies():
    rng = np.random.default_rng(1)
    k = 4
    out = gumbel_softmax_sample(np.zeros((100_000, k)), 1.0, hard=True, rng=rng)
    freq = out.values.mean(axis=0)
    assert np.abs(freq - 1 / k).max() <= 0.02


def test_hard_sample_is_one_hot_with_gradient():
    rng = np.random.default_rng(2)
    logits = parameter(np.array([[0.2, -0.1, 0.5]]))
    out = gumbel_softmax_sample(logits, 0.7, hard=True, rng=rng)
    assert set(np.unique(out.values)) <= {0.0, 1.0}
    assert out.values.sum() == 1.0
    backward((out * np.array([1.0, 2.0, 3.0])).sum())
    assert np.abs(logits.grad).sum() > 0


def test_temperature_must_be_positive():
    with pytest.raises(ValueError):
        gumbel_softmax_sample(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        conditional_gumbel_softmax(np.zeros((1, 2)), [0], -1.0)


def test_straight_through_forward_and_backward():
    soft = parameter(np.array([0.2, 0.8]))
    out = straight_through(np.array([0.0, 1.0]), soft)
    np.testing.assert_array_equal(out.values, [0.0, 1.0])
    backward((out * np.array([3.0, 5.0])).sum())
    np.testing.assert_array_equal(soft.grad, [3.0, 5.0])


def test_conditional_relaxation_matches_plain_gumbel_softmax_law():
    rng = np.random.default_rng(3)
    logits = np.array([0.5, -0.3, 0.1])
    n = 200_000
    plain = gumbel_softmax_sample(np.tile(logits, (n, 1)), 0.8, hard=False, rng=rng).values
    probs = np.exp(logits) / np.exp(logits).sum()
    index = np.argmax(np.log(probs) - np.log(-np.log(rng.random((n, 3)))), axis=1)
    cond = conditional_gumbel_softmax(np.tile(logits, (n, 1)), index, 0.8, rng=rng).values
    # the conditional sample's argmax is the given category
    assert np.all(cond.argmax(axis=1) == index)
    np.testing.assert_allclose(cond.mean(axis=0), plain.mean(axis=0), atol=5e-3)
    np.testing.assert_allclose((cond ** 2).mean(axis=0), (plain ** 2).mean(axis=0), atol=5e-3)


def test_conditional_relaxation_rebuilds_from_uniforms():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(6, 3))
    index = rng.integers(0, 3, size=6)
    u = rng.random((6, 3))
    a = conditional_gumbel_softmax(logits, index, 0.5, uniforms=u).values
    b = conditional_gumbel_softmax(logits, index, 0.5, uniforms=u).values
    np.testing.assert_array_equal(a, b)
