import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cibm import diffcore as dc
from cibm.errors import ContractError, DimensionError, DomainError, ValidationError

from oracles import op_cases

finite = st.floats(-5, 5, allow_nan=False)


def _rand(rng, *shape):
    return rng.standard_normal(shape)


# --- forward values -------------------------------------------------------------


def test_dense_identity_and_hand_arithmetic():
    out = dc.dense(dc.constant(np.eye(2)), dc.constant(np.zeros(2)), dc.constant([3.0, 4.0]))
    np.testing.assert_array_equal(out.value, [3.0, 4.0])
    out = dc.dense(dc.constant([[1.0, 1.0]]), dc.constant([1.0]), dc.constant([2.0, 3.0]))
    np.testing.assert_array_equal(out.value, [6.0])


def test_dense_shape_mismatch():
    with pytest.raises(DimensionError):
        dc.dense(dc.constant(np.eye(2)), dc.constant(np.zeros(2)), dc.constant([1.0, 2.0, 3.0]))
    with pytest.raises(DimensionError):
        dc.dense(dc.constant(np.eye(2)), dc.constant(np.zeros(3)), dc.constant([1.0, 2.0]))


def test_relu_and_sigmoid_values():
    np.testing.assert_array_equal(dc.relu(dc.constant([-1.0, 0.0, 2.0])).value, [0, 0, 2])
    assert dc.sigmoid(dc.constant(0.0)).value == 0.5
    x = dc.parameter([0.0])
    g = dc.backward(dc.total(dc.relu(x)))[x]
    assert g[0] == 0.0  # subgradient at the kink


def test_sigmoid_is_stable_at_extremes():
    v = dc.sigmoid(dc.constant([-1e4, 1e4])).value
    assert np.all(np.isfinite(v))
    np.testing.assert_allclose(v, [0.0, 1.0])


def test_bce_values():
    assert dc.bce_with_logits(dc.constant([[0.0]]), [[1]]).value == pytest.approx(np.log(2), abs=1e-12)
    assert dc.bce_with_logits(dc.constant([[10.0]]), [[1]]).value == pytest.approx(np.log1p(np.exp(-10)), rel=1e-12)
    with pytest.raises(ValidationError):
        dc.bce_with_logits(dc.constant([[0.0]]), [[0.7]])


def test_softmax_ce_values():
    assert dc.softmax_cross_entropy(dc.constant(np.zeros((1, 4))), [2]).value == pytest.approx(np.log(4), abs=1e-12)
    logits = np.zeros((1, 3))
    logits[0, 1] = 1000.0
    assert dc.softmax_cross_entropy(dc.constant(logits), [1]).value == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        dc.softmax_cross_entropy(dc.constant(np.zeros((1, 3))), [3])


@given(arrays(np.float64, (3, 4), elements=st.floats(-1e4, 1e4)))
def test_losses_finite_for_large_logits(logits):
    t = (np.arange(12).reshape(3, 4) % 2).astype(float)
    assert np.isfinite(dc.bce_with_logits(dc.constant(logits), t).value)
    assert np.isfinite(dc.softmax_cross_entropy(dc.constant(logits), np.array([0, 1, 3])).value)


def test_reparam_values():
    mu = dc.constant([[1.0]])
    assert dc.reparam_sample(mu, dc.constant([[0.3]]), [[0.0]]).value[0, 0] == 1.0
    assert dc.reparam_sample(mu, dc.constant([[np.log(2)]]), [[0.5]]).value[0, 0] == pytest.approx(2.0, abs=1e-15)


def test_log_domain():
    with pytest.raises(DomainError):
        dc.log(dc.constant([1.0, 0.0]))


# --- backward semantics ----------------------------------------------------------


def test_backward_square_and_accumulation():
    x = dc.parameter([1.0, 2.0])
    np.testing.assert_array_equal(dc.backward(dc.total(dc.mul(x, x)))[x], [2.0, 4.0])
    y = dc.parameter(3.0)
    assert dc.backward(dc.add(y, y))[y] == 2.0


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        dc.backward(dc.parameter([1.0, 2.0]))


def test_stop_gradient():
    x = dc.parameter([1.0, -2.0])
    sg = dc.stop_gradient(x)
    np.testing.assert_array_equal(sg.value, x.value)
    grads = dc.backward(dc.total(sg))
    assert np.all(grads.get(x, np.zeros(2)) == 0)
    a, b = dc.parameter([2.0]), dc.parameter([5.0])
    grads = dc.backward(dc.total(dc.mul(a, dc.stop_gradient(b))))
    np.testing.assert_array_equal(grads[a], [5.0])
    assert np.all(grads.get(b, np.zeros(1)) == 0)


def test_forward_bit_deterministic(rng):
    W, b, x = _rand(rng, 4, 3), _rand(rng, 4), _rand(rng, 5, 3)

    def run():
        return dc.sigmoid(dc.dense(dc.constant(W), dc.constant(b), dc.constant(x))).value

    assert run().tobytes() == run().tobytes()


# --- finite-difference oracle ----------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_every_op_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for f, params in op_cases(rng):
        assert dc.grad_check(f, params) < 1e-4


def test_three_layer_mlp_gradient():
    rng = np.random.default_rng(3)
    Ws = [dc.parameter(_rand(rng, 6, 5)), dc.parameter(_rand(rng, 6, 6)), dc.parameter(_rand(rng, 3, 6))]
    bs = [dc.parameter(_rand(rng, 6)), dc.parameter(_rand(rng, 6)), dc.parameter(_rand(rng, 3))]
    x = _rand(rng, 8, 5)
    y = rng.integers(0, 3, size=8)

    def f():
        h = dc.constant(x)
        for W, b in zip(Ws[:-1], bs[:-1]):
            h = dc.sigmoid(dc.dense(W, b, h))
        return dc.softmax_cross_entropy(dc.dense(Ws[-1], bs[-1], h), y)

    assert dc.grad_check(f, Ws + bs) < 1e-4


def test_grad_check_linear_is_exact_and_negative_control():
    rng = np.random.default_rng(0)
    a = dc.parameter(_rand(rng, 4))
    w = _rand(rng, 4)

    def f():
        return dc.total(dc.mul(a, dc.constant(w)))

    assert dc.grad_check(f, [a]) < 1e-8
    bad = [dc.backward(f())[a] * 1.1]
    assert dc.grad_check(f, [a], analytic=bad) > 1e-2


# --- Adam ------------------------------------------------------------------------


def test_adam_zero_grad_no_decay_is_noop():
    p = dc.parameter([1.0, -2.0])
    dc.adam_step([p], [np.zeros(2)], dc.AdamState(wd=0.0))
    np.testing.assert_array_equal(p.value, [1.0, -2.0])


def test_adam_descends_on_square():
    w = dc.parameter(1.0)
    state = dc.AdamState(lr=0.003)
    dc.adam_step([w], [dc.backward(dc.mul(w, w))[w]], state)
    assert w.value < 1.0 and state.step == 1


@given(st.floats(1e-6, 1e6), st.sampled_from([-1.0, 1.0]))
def test_adam_first_step_is_lr_sized(scale, sign):
    w = dc.parameter(0.0)
    dc.adam_step([w], [np.array(sign * scale)], dc.AdamState(lr=0.003, wd=0.0))
    # closed form of the bias-corrected first step: lr * |g| / (|g| + eps)
    assert abs(float(w.value)) == pytest.approx(0.003 * scale / (scale + 1e-8), rel=1e-9)
    if scale > 1e-4:
        assert abs(float(w.value)) == pytest.approx(0.003, rel=1e-4)


def test_adam_clipping_bounds_update():
    p = dc.parameter([0.0, 0.0])
    state = dc.AdamState(lr=0.1, wd=0.0, clip_norm=1.0)
    dc.adam_step([p], [np.array([300.0, 400.0])], state)
    # clipping rescales but Adam normalizes, so the first step is still lr in each coordinate
    np.testing.assert_allclose(np.abs(p.value), [0.1, 0.1], rtol=1e-6)


@given(arrays(np.float64, (2, 3), elements=finite))
def test_grad_shapes_match_values(v):
    x = dc.parameter(v)
    g = dc.backward(dc.total(dc.mul(dc.sigmoid(x), dc.exp(x))))[x]
    assert g.shape == x.shape
