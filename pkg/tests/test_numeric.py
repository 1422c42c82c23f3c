import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rhnet.numeric import (Adam, DimensionError, NumericError, Parameter, ParameterStore,
                           activate, adam_step, grad_check, hinge, load_tensors, log_softmax,
                           matmul, rng, save_tensors, sigmoid, softmax, softmax_backward)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert np.array_equal(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])), [[11.0]])
    assert np.array_equal(matmul(a, np.zeros((2, 3))), np.zeros((2, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4, 2), elements=finite),
       arrays(np.float64, (2, 5), elements=finite))
def test_matmul_associative(a, b, c):
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.allclose(left, right, rtol=1e-9, atol=1e-6)


def test_activation_examples():
    assert sigmoid(0.0) == 0.5
    for c in (-700.0, 0.0, 3.0, 1e3):
        assert np.allclose(softmax(np.array([c, c])), [0.5, 0.5])
    assert hinge(-0.2) == 0.0
    assert hinge(0.2) == 0.2


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 7), elements=st.floats(-1e3, 1e3)))
def test_activation_ranges(x):
    s = activate(x, "sigmoid")
    assert np.all((s >= 0) & (s <= 1))
    t = activate(x, "tanh")
    assert np.all((t >= -1) & (t <= 1))
    p = activate(x, "softmax")
    assert np.all(np.abs(p.sum(axis=-1) - 1.0) <= 1e-12)
    assert np.all(activate(x, "hinge") >= 0)
    assert np.allclose(np.exp(log_softmax(x)), p)


def test_activate_rejects_nonfinite_and_unknown():
    with pytest.raises(NumericError):
        activate(np.array([1.0, np.nan]), "tanh")
    with pytest.raises(ValueError):
        activate(np.zeros(2), "relu")


def test_softmax_backward_matches_jacobian():
    g = rng(0, "t")
    z = g.normal(size=5)
    p = softmax(z)
    gp = g.normal(size=5)
    J = np.diag(p) - np.outer(p, p)
    assert np.allclose(softmax_backward(p, gp), J.T @ gp)


def test_adam_zero_grad_keeps_value():
    p = Parameter("w", np.array([1.0, -2.0]))
    adam_step(p, lr=0.1)
    assert np.array_equal(p.value, [1.0, -2.0])
    assert p.step_count == 1


def test_adam_first_step():
    p = Parameter("w", np.array([1.0]))
    p.grad[...] = 1.0
    adam_step(p, lr=0.1)
    # bias-corrected moments equal the gradient on step one: move by lr * g / (|g| + eps)
    assert p.value[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)


def test_adam_deterministic():
    def run():
        store = ParameterStore({"w": rng(3, "init").normal(size=4)})
        opt = Adam(0.05)
        for _ in range(10):
            store["w"].grad[...] = np.sin(store.value("w"))
            opt.step(store)
        return store.value("w")
    assert np.array_equal(run(), run())


def test_adam_rejects_nonfinite_grad():
    store = ParameterStore({"a": np.zeros(2), "b": np.zeros(2)})
    store["b"].grad[0] = np.inf
    with pytest.raises(NumericError):
        Adam(0.1).step(store)
    assert np.array_equal(store.value("a"), np.zeros(2))


def test_parameter_store_rules():
    store = ParameterStore({"x.a": np.zeros(2), "y.b": np.ones(3)})
    with pytest.raises(KeyError):
        store.add("x.a", np.zeros(1))
    sub = store.subset("x.")
    assert sub.names() == ["x.a"]
    sub["x.a"].grad[...] = 1.0
    assert np.array_equal(store["x.a"].grad, [1.0, 1.0])
    with pytest.raises(DimensionError):
        Parameter("bad", np.zeros(2), grad=np.zeros(3))


def test_grad_check_constant_and_quadratic():
    store = ParameterStore({"x": np.array([1.0, 2.0])})
    assert grad_check(lambda p: (3.0, {"x": np.zeros(2)}), store) == 0.0

    def quad(p):
        x = p.value("x")
        return float(np.sum(x * x)), {"x": 2 * x}
    assert grad_check(quad, store, h=1e-5) < 1e-7


def test_grad_check_detects_wrong_gradient():
    store = ParameterStore({"x": np.array([1.0, 2.0])})
    err = grad_check(lambda p: (float(np.sum(p.value("x") ** 2)), {"x": p.value("x")}), store)
    assert err > 0.1


def test_rng_streams():
    a = rng(7, "detector").random(5)
    assert np.array_equal(a, rng(7, "detector").random(5))
    assert not np.array_equal(a, rng(7, "encoder").random(5))
    assert not np.array_equal(a, rng(8, "detector").random(5))


def test_tensor_file_roundtrip(tmp_path):
    tensors = {"a": rng(1).normal(size=(3, 2)), "b": np.array([np.pi]), "c": np.zeros((0, 4))}
    save_tensors(tmp_path / "t.bin", tensors, {"note": "x"})
    back, meta = load_tensors(tmp_path / "t.bin")
    assert meta["note"] == "x"
    for k, v in tensors.items():
        assert back[k].shape == v.shape
        assert back[k].tobytes() == v.tobytes()


def test_tensor_file_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_bytes(b"not a checkpoint\n")
    with pytest.raises(ValueError):
        load_tensors(tmp_path / "bad")
