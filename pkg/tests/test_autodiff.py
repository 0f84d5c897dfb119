import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from motifpool import autodiff as ad
from motifpool.autodiff import Adam, Parameter, Value, backward, load_parameters, save_parameters
from motifpool.gradcheck import check_gradients, numerical_grad
from motifpool.verify import op_cases

OPS = sorted(op_cases(np.random.default_rng(0)))


@pytest.mark.parametrize("name", OPS)
def test_op_gradients_match_finite_differences(name):
    fn, params = op_cases(np.random.default_rng(42))[name]
    errors = check_gradients(fn, params)
    assert max(errors.values()) < 1e-4, errors


def test_matmul_identity():
    x = Value(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = ad.matmul(np.eye(3), x)
    assert np.array_equal(out.data, x.data)
    backward(ad.sum(out))
    assert np.array_equal(x.grad, np.ones((3, 2)))


def test_trace_identity(rng):
    a = Value(rng.normal(size=(2, 2)), requires_grad=True)
    b = Value(rng.normal(size=(2, 2)))
    t = ad.trace(a.T @ b)
    assert math.isclose(t.item(), float((a.data * b.data).sum()), rel_tol=1e-12)
    backward(t)
    assert np.allclose(a.grad, b.data, atol=1e-15)


def test_frobenius_at_zero():
    z = Value(np.zeros((2, 3)), requires_grad=True)
    n = ad.frobenius_norm(z)
    assert n.item() == 0
    backward(n)
    assert np.array_equal(z.grad, np.zeros((2, 3)))


def test_elementwise_examples():
    assert np.array_equal(ad.relu(Value([[-1.0, 2.0]])).data, [[0, 2]])
    assert np.allclose(ad.softmax_rows(Value(np.zeros((1, 4)))).data, 0.25)
    x = Value([[0.0]], requires_grad=True)
    backward(ad.tanh(x))
    assert x.grad[0, 0] == 1.0


def test_square_gradient():
    x = Value([[3.0]], requires_grad=True)
    backward(ad.sum(ad.hadamard(x, x)))
    assert x.grad[0, 0] == 6.0


def test_diamond_accumulates_both_paths():
    # f = x*y + tanh(x)  -> df/dx = y + 1 - tanh(x)^2
    x = Value([[0.7]], requires_grad=True)
    y = Value([[-1.3]], requires_grad=True)
    backward(ad.hadamard(x, y) + ad.tanh(x))
    assert math.isclose(x.grad[0, 0], -1.3 + 1 - math.tanh(0.7) ** 2, rel_tol=1e-14)
    assert math.isclose(y.grad[0, 0], 0.7, rel_tol=1e-14)


def test_backward_twice_doubles(rng):
    w = Value(rng.normal(size=(3, 4)), requires_grad=True)
    x = Value(rng.normal(size=(4, 2)))
    loss = ad.sum(ad.tanh(w @ x))
    backward(loss)
    first = w.grad.copy()
    backward(loss)
    assert np.allclose(w.grad, 2 * first, rtol=1e-15, atol=0)


def test_backward_requires_scalar():
    with pytest.raises(ValueError, match="scalar"):
        backward(Value(np.ones((2, 2)), requires_grad=True))


def test_shape_errors_name_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\) and \(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="add"):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))


def test_row_max_tie_goes_to_lowest_index():
    x = Value([[1.0, 5.0], [1.0, 2.0], [0.0, 5.0]], requires_grad=True)
    backward(ad.sum(ad.row_max(x)))
    assert np.array_equal(x.grad, [[1, 1], [0, 0], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_on_simplex(x):
    s = ad.softmax_rows(Value(x)).data
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(s >= 0) and np.all(s <= 1)


def test_softmax_strictly_inside_for_moderate_inputs(rng):
    s = ad.softmax_rows(Value(rng.normal(size=(10, 4)) * 3)).data
    assert np.all((s > 0) & (s < 1))


def test_cross_entropy_values():
    assert ad.cross_entropy(Value([[20.0, 0.0]]), 0).item() < 1e-8
    assert math.isclose(ad.cross_entropy(Value([[0.0, 0.0]]), 1).item(), math.log(2), rel_tol=1e-15)


def test_numerical_grad_on_known_function():
    x = np.array([[1.0, -2.0]])
    g = numerical_grad(lambda: float((x ** 3).sum()), x)
    assert np.allclose(g, 3 * x ** 2, rtol=1e-8)


# --- Adam -------------------------------------------------------------------

def test_adam_first_step_closed_form():
    g = np.array([[0.3, -2.0, 1e-3]])
    p = Parameter(np.zeros((1, 3)), "p")
    opt = Adam([p], lr=0.1, eps=1e-8)
    p.grad = g.copy()
    opt.step()
    assert np.allclose(p.data, -0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_zero_grad_keeps_params(rng):
    p = Parameter(rng.normal(size=(2, 2)), "p")
    before = p.data.copy()
    opt = Adam([p], lr=0.1)
    for _ in range(3):
        opt.zero_grad()
        opt.step()
    assert np.array_equal(p.data, before)


def test_adam_decoupled_weight_decay():
    p = Parameter(np.array([[2.0]]), "p")
    opt = Adam([p], lr=0.1, weight_decay=0.5)
    opt.step()  # zero gradient: only the decay acts
    assert p.data[0, 0] == 2.0 - 0.1 * 0.5 * 2.0


def test_adam_quadratic_bowl():
    x = Parameter([[1.0, 1.0]], "x")
    opt = Adam([x], lr=0.05)
    for _ in range(500):
        opt.zero_grad()
        backward(ad.sum(ad.hadamard(x, x)))
        opt.step()
    assert np.linalg.norm(x.data) < 1e-3


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.ones((1, 2)), "layer.w")
    opt = Adam([p])
    p.grad[0, 1] = np.inf
    with pytest.raises(FloatingPointError, match="layer.w"):
        opt.step()


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    params = [Parameter(rng.normal(size=(3, 4)), "a"), Parameter(rng.normal(size=(1, 5)), "b")]
    save_parameters(tmp_path / "ckpt.npz", params)
    fresh = [Parameter(np.zeros((3, 4)), "a"), Parameter(np.zeros((1, 5)), "b")]
    load_parameters(tmp_path / "ckpt.npz", fresh)
    for p, q in zip(params, fresh):
        assert p.data.tobytes() == q.data.tobytes()
    with pytest.raises(ValueError, match="shape"):
        load_parameters(tmp_path / "ckpt.npz", [Parameter(np.zeros((2, 2)), "a")])
