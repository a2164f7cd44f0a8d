import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgcn_fault import numerics as nx
from tgcn_fault.errors import ContractError, ShapeError


def test_matmul_identity():
    tape = nx.Tape()
    m = np.array([[1.5, -2.0], [0.25, 7.0]])
    out = nx.matmul(tape.const(np.eye(2)), tape.const(m))
    assert np.array_equal(out.value, m)


def test_matmul_hand_example():
    tape = nx.Tape()
    out = tape.const([[1, 2], [3, 4]]) @ tape.const([[5], [6]])
    # 1*5 + 2*6, 3*5 + 4*6
    assert out.value.tolist() == [[17.0], [39.0]]


def test_matmul_shape_error_names_shapes():
    tape = nx.Tape()
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(tape.const(np.ones((2, 3))), tape.const(np.ones((2, 3))))


def test_elementwise_examples():
    tape = nx.Tape()
    zero = tape.const([[0.0]])
    assert nx.sigmoid(zero).value[0, 0] == 0.5
    assert nx.tanh(zero).value[0, 0] == 0.0
    assert nx.hadamard(tape.const([[2, 3]]), tape.const([[4, 5]])).value.tolist() == [[8.0, 15.0]]


@pytest.mark.parametrize("op", [nx.add, nx.sub, nx.hadamard])
def test_elementwise_shape_mismatch(op):
    tape = nx.Tape()
    with pytest.raises(ShapeError):
        op(tape.const(np.ones((2, 2))), tape.const(np.ones((2, 1))))


def test_concat_and_transpose():
    tape = nx.Tape()
    a, b = tape.const([[1, 2], [3, 4]]), tape.const([[5], [6]])
    assert nx.concat_features(a, b).value.tolist() == [[1, 2, 5], [3, 4, 6]]
    assert nx.transpose(a).value.tolist() == [[1, 3], [2, 4]]
    with pytest.raises(ShapeError):
        nx.concat_features(a, tape.const([[1.0]]))


def test_reductions():
    tape = nx.Tape()
    a = tape.const([[1.0, 5.0], [-2.0, 4.0]])
    assert nx.reduce_mean(a).value[0, 0] == 2.0
    assert nx.reduce_max(a).value[0, 0] == 5.0


def test_sigmoid_is_finite_for_huge_inputs():
    tape = nx.Tape()
    with np.errstate(over="raise"):
        s = nx.sigmoid(tape.const([[-1e4, 1e4]])).value
    assert np.isfinite(s).all()
    assert s[0, 0] == 0.0 and s[0, 1] == 1.0


def test_backward_mean_gradient():
    tape = nx.Tape()
    x = tape.param("x", np.array([[1.0, -2.0, 3.0, 0.5]]))
    grads = nx.backward(tape, nx.reduce_mean(x))
    assert np.array_equal(grads["x"], np.full((1, 4), 0.25))


def test_backward_sigmoid_at_zero():
    tape = nx.Tape()
    w = tape.param("w", [[0.0]])
    assert nx.backward(tape, nx.sigmoid(w))["w"][0, 0] == 0.25


def test_unused_parameter_and_node_have_zero_adjoint():
    tape = nx.Tape()
    w = tape.param("w", [[2.0]])
    p = tape.param("p", [[3.0, 4.0]])
    dangling = nx.tanh(p)
    grads = nx.backward(tape, nx.sigmoid(w))
    assert np.array_equal(grads["p"], np.zeros((1, 2)))
    assert np.array_equal(tape.adjoint(dangling), np.zeros((1, 2)))


def test_backward_rejects_non_scalar_loss():
    tape = nx.Tape()
    x = tape.param("x", np.ones((2, 2)))
    with pytest.raises(ContractError):
        nx.backward(tape, nx.tanh(x))


def test_tape_is_topologically_ordered():
    tape = nx.Tape()
    x = tape.param("x", np.ones((2, 2)))
    y = nx.reduce_mean(nx.sigmoid(x @ x) * nx.tanh(x))
    assert y.index == len(tape.nodes) - 1
    for node in tape.nodes:
        assert all(p.index < node.index for p in node.parents)


def test_graph_matmul_matches_block_diagonal_matmul():
    rng = np.random.default_rng(0)
    a_hat = rng.normal(size=(3, 3))
    x = rng.normal(size=(12, 2))
    tape = nx.Tape()
    xn = tape.param("x", x)
    got = nx.graph_matmul(a_hat, xn)
    want = np.kron(np.eye(4), a_hat) @ x
    np.testing.assert_allclose(got.value, want, rtol=0, atol=1e-14)
    g = nx.backward(tape, nx.reduce_mean(got * got))["x"]
    tape2 = nx.Tape()
    xn2 = tape2.param("x", x)
    full = tape2.const(np.kron(np.eye(4), a_hat)) @ xn2
    g2 = nx.backward(tape2, nx.reduce_mean(full * full))["x"]
    np.testing.assert_allclose(g, g2, rtol=0, atol=1e-14)


def test_add_bias_broadcasts_rows():
    tape = nx.Tape()
    a = tape.param("a", np.zeros((3, 2)))
    b = tape.param("b", [[1.0, -1.0]])
    out = nx.add_bias(a, b)
    assert out.value.tolist() == [[1, -1]] * 3
    grads = nx.backward(tape, nx.reduce_mean(out))
    np.testing.assert_allclose(grads["b"], [[0.5, 0.5]])
    with pytest.raises(ShapeError):
        nx.add_bias(a, tape.const([[1.0]]))


# -- properties ------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_transpose_of_product(n, k, m, seed):
    rng = np.random.default_rng(seed)
    tape = nx.Tape()
    a, b = tape.const(rng.normal(size=(n, k))), tape.const(rng.normal(size=(k, m)))
    lhs = nx.transpose(a @ b).value
    rhs = (nx.transpose(b) @ nx.transpose(a)).value
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_activation_ranges_and_monotonicity():
    grid = np.linspace(-30, 30, 2001).reshape(1, -1)
    tape = nx.Tape()
    s = nx.sigmoid(tape.const(grid)).value.ravel()
    t = nx.tanh(tape.const(grid / 2)).value.ravel()
    assert ((s > 0) & (s < 1)).all()
    assert ((t > -1) & (t < 1)).all()
    assert (np.diff(s) >= 0).all() and (np.diff(t) >= 0).all()


def _composite_loss(tape, p):
    h = nx.tanh(p["w"] @ p["x"])
    z = nx.sigmoid(nx.add_bias(h, p["b"]))
    c = nx.concat_features(z, h)
    spread = nx.transpose(c - nx.concat_features(z, h * z))
    return nx.add(nx.reduce_mean(c * c), nx.scale(nx.reduce_max(spread), 0.5))


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_composite(seed):
    rng = np.random.default_rng(seed)
    params = {"w": rng.normal(size=(3, 2)), "x": rng.normal(size=(2, 4)), "b": rng.normal(size=(1, 4))}
    report = nx.grad_check(_composite_loss, params, step=1e-5, tol=1e-5)
    assert report.passed, report.max_rel_error


def test_grad_check_linear_is_exact():
    def f(tape, p):
        return nx.reduce_mean(nx.scale(p["a"], 3.0) - p["b"])

    params = {"a": np.arange(6.0).reshape(2, 3), "b": np.ones((2, 3))}
    report = nx.grad_check(f, params, step=1e-3, tol=1e-9)
    assert report.passed and report.worst < 1e-9


def test_grad_check_catches_planted_fault():
    rng = np.random.default_rng(3)
    params = {"w": rng.normal(size=(3, 2)), "x": rng.normal(size=(2, 4)), "b": rng.normal(size=(1, 4))}
    _, grads = nx.gradients(_composite_loss, params)
    grads["w"] = grads["w"] + 0.1
    report = nx.grad_check(_composite_loss, params, analytic=grads)
    assert not report.passed
    assert report.failures == ["w"]


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(11)
    params = {"w": rng.normal(size=(3, 2)), "x": rng.normal(size=(2, 4)), "b": rng.normal(size=(1, 4))}

    def first(tape, p):
        return nx.reduce_mean(nx.tanh(p["w"] @ p["x"]))

    def second(tape, p):
        return nx.reduce_max(nx.sigmoid(nx.add_bias(p["w"] @ p["x"], p["b"])))

    _, g1 = nx.gradients(first, params)
    _, g2 = nx.gradients(second, params)
    _, g12 = nx.gradients(lambda t, p: nx.add(first(t, p), second(t, p)), params)
    for k in params:
        np.testing.assert_allclose(g12[k], g1[k] + g2[k], rtol=0, atol=1e-12)
