import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldtopo.autodiff import Node, Tape, backward, grad_check


def test_scalar_chain():
    tape = Tape()
    x = tape.leaf(2.0, requires_grad=True)
    y = tape.mul(x, x)          # x^2
    z = tape.add(y, tape.scale(x, 3.0))  # x^2 + 3x
    backward(z, tape)
    assert z.value == pytest.approx(10.0)
    assert x.grad == pytest.approx(7.0)  # 2x + 3


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.leaf(np.ones(3), requires_grad=True)
    y = tape.scale(x, 2.0)
    with pytest.raises(ValueError):
        backward(y, tape)


def test_matmul_adjoint():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    tape = Tape()
    na = tape.leaf(a, requires_grad=True)
    nb = tape.leaf(b, requires_grad=True)
    loss = tape.sum(tape.matmul(na, nb))
    backward(loss, tape)
    ones = np.ones((4, 5))
    assert np.allclose(na.grad, ones @ b.T)
    assert np.allclose(nb.grad, a.T @ ones)


def test_broadcast_bias_grad():
    # (n, h) + (h,) broadcasting must reduce the adjoint over rows
    tape = Tape()
    b = tape.leaf(np.zeros(3), requires_grad=True)
    x = tape.constant(np.arange(12.0).reshape(4, 3))
    loss = tape.sum(tape.add(x, b))
    backward(loss, tape)
    assert np.array_equal(b.grad, np.full(3, 4.0))


def test_constants_are_not_tracked():
    tape = Tape()
    c = tape.constant(np.ones(5))
    x = tape.leaf(np.ones(5), requires_grad=True)
    tape.mul(c, c)  # constant-only op records nothing
    tape.mul(x, c)
    assert len(tape.nodes) == 2  # the leaf and the tracked product


def test_take_col_and_concat_roundtrip_grads():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(3, 2), requires_grad=True)
    y = tape.leaf(np.ones((3, 1)), requires_grad=True)
    cat = tape.concat([x, y], axis=1)
    loss = tape.sum(tape.mul(tape.take_col(cat, 1), tape.take_col(cat, 2)))
    backward(loss, tape)
    assert np.allclose(x.grad[:, 1], 1.0)  # d/dcol1 of col1*col2 with col2 = 1
    assert np.allclose(x.grad[:, 0], 0.0)
    assert np.allclose(y.grad[:, 0], np.arange(6.0).reshape(3, 2)[:, 1])


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "sin", "cos",
                                "sigmoid", "relu", "power", "mean"])
def test_primitive_grads_match_finite_differences(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a0 = rng.normal(size=(4, 3)) + 2.5  # keep away from relu kink / division by 0
    b0 = rng.normal(size=(4, 3)) + 2.5

    def loss(params):
        tape = Tape()
        a = tape.leaf(params[0], requires_grad=True)
        b = tape.leaf(params[1], requires_grad=True)
        if op in ("add", "sub", "mul", "div"):
            out = getattr(tape, op)(a, b)
        elif op == "power":
            out = tape.add(tape.power(a, 3.0), b)
        elif op == "mean":
            out = tape.add(tape.mean(a), tape.mean(b))
            return out, tape, (a, b)
        else:
            out = tape.add(getattr(tape, op)(a), b)
        return tape.sum(out), tape, (a, b)

    node, tape, leaves = loss([a0, b0])
    backward(node, tape)
    grads = [l.grad for l in leaves]
    err = grad_check(lambda p: loss(p)[0].value, [a0, b0], grads)
    assert err < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_sum_linearity(xs):
    xs = np.asarray(xs)
    tape = Tape()
    x = tape.leaf(xs, requires_grad=True)
    loss = tape.sum(tape.scale(x, 2.0))
    backward(loss, tape)
    assert np.allclose(x.grad, 2.0)


def test_grad_accumulates_across_reuse():
    tape = Tape()
    x = tape.leaf(3.0, requires_grad=True)
    y = tape.add(tape.mul(x, x), x)  # x used twice
    backward(y, tape)
    assert x.grad == pytest.approx(7.0)


def test_grad_check_flags_nan():
    def bad(params):
        return float("nan")

    assert grad_check(bad, [np.zeros(1)], [np.zeros(1)]) == float("inf")
