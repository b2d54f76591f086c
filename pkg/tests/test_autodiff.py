import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dagc import autodiff as ad
from dagc.autodiff import Tape, Tensor, grad_check
from dagc.errors import ContractError, DegenerateInputError, ShapeError


def _weighted(op):
    """Scalar probe sum(op(...) * R) with a fixed random R, so every output entry matters."""

    def f(*args):
        out = op(*args)
        r = np.random.default_rng(7).standard_normal(out.shape)
        return ad.sum_all(ad.hadamard(out, Tensor(r)))

    return f


# --- forward examples -----------------------------------------------------


def test_matmul_examples():
    a = Tensor([[1, 2], [3, 4]])
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), a).data, a.data)
    assert ad.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).item() == 11.0


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_row_softmax_examples():
    assert np.allclose(ad.row_softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    out = ad.row_softmax(Tensor([[math.log(2.0), 0.0]])).data
    assert np.allclose(out, [[2 / 3, 1 / 3]], rtol=0, atol=1e-15)
    big = ad.row_softmax(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_row_l2_normalize_examples():
    assert np.allclose(ad.row_l2_normalize(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]])
    assert np.array_equal(ad.row_l2_normalize(Tensor([[1.0, 0.0]])).data, [[1.0, 0.0]])
    assert np.allclose(ad.row_l2_normalize(Tensor([[0.5, 0.5]])).data, [[2**-0.5, 2**-0.5]])
    assert np.allclose(ad.row_l2_normalize(Tensor([[-3.0, 4.0]])).data, [[-0.6, 0.8]])
    with pytest.raises(DegenerateInputError):
        ad.row_l2_normalize(Tensor([[1.0, 1.0], [0.0, 0.0]]))


def test_leaky_relu_examples():
    out = ad.leaky_relu(Tensor([[-1.0, 0.0, 2.0]]), 0.2).data
    assert np.allclose(out, [[-0.2, 0.0, 2.0]])
    x = Tensor([[0.0, 1.5, 3.0]])
    assert np.array_equal(ad.leaky_relu(x, 0.2).data, x.data)
    f = lambda t: ad.sum_all(ad.leaky_relu(t, 0.2))  # noqa: E731
    with Tape() as tape:
        leaf = Tensor([[-3.0]], requires_grad=True)
        loss = f(leaf)
    assert tape.backward(loss)[leaf][0, 0] == 0.2
    numeric = (f(Tensor([[-3.0 + 1e-6]])).item() - f(Tensor([[-3.0 - 1e-6]])).item()) / 2e-6
    assert numeric == pytest.approx(0.2, rel=1e-8)


def test_concat_cols_examples():
    out = ad.concat_cols([Tensor([[1], [2]]), Tensor([[3], [4]])])
    assert np.array_equal(out.data, [[1, 3], [2, 4]])
    one = Tensor([[1.0, 2.0]])
    assert np.array_equal(ad.concat_cols([one]).data, one.data)
    widths = [500, 500, 2000, 10, 10]
    parts = [Tensor(np.zeros((2, w))) for w in widths]
    assert ad.concat_cols(parts).cols == 3020
    with pytest.raises(ShapeError):
        ad.concat_cols([Tensor(np.zeros((2, 1))), Tensor(np.zeros((3, 1)))])


def test_col_broadcast_scale_examples():
    a = Tensor(np.ones((2, 2)))
    assert np.array_equal(ad.col_broadcast_scale(Tensor([[2.0], [3.0]]), a).data, [[2, 2], [3, 3]])
    b = Tensor([[1.0, -2.0], [3.0, 4.0]])
    assert np.array_equal(ad.col_broadcast_scale(Tensor(np.ones((2, 1))), b).data, b.data)
    assert not ad.col_broadcast_scale(Tensor(np.zeros((2, 1))), b).data.any()
    with pytest.raises(ShapeError):
        ad.col_broadcast_scale(Tensor(np.ones((3, 1))), b)


def test_elementwise_and_unary_examples():
    assert np.array_equal(ad.elementwise(Tensor([[1, 2]]), Tensor([[3, 4]]), "hadamard").data, [[3, 8]])
    assert np.array_equal(ad.elementwise(Tensor([[1, 2]]), Tensor([[3, 4]]), "add").data, [[4, 6]])
    assert ad.unary(Tensor([[1, 2], [3, 4]]), "sum_all").item() == 10.0
    with pytest.raises(ShapeError):
        ad.add(Tensor([[1, 2]]), Tensor([[1], [2]]))
    with pytest.raises(DegenerateInputError):
        ad.log(Tensor([[0.0]]))


def test_square_gradient_is_twice_input(rng):
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(ad.square(a))
    assert np.allclose(tape.backward(loss)[a], 2 * a.data)
    assert grad_check(lambda t: ad.sum_all(ad.square(t)), a) <= 1e-6


# --- backward semantics ---------------------------------------------------


def test_backward_sum_gives_ones():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(a)
    assert np.array_equal(tape.backward(loss)[a], np.ones((2, 3)))


def test_backward_matmul_matches_finite_differences(rng):
    a = Tensor(rng.standard_normal((3, 3)))
    b = Tensor(rng.standard_normal((3, 3)))
    err = grad_check(lambda x, y: ad.sum_all(ad.matmul(x, y)), [a, b])
    assert err <= 1e-6
    leaf = Tensor(a.data, requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(ad.matmul(leaf, b))
    # d sum(ab)/da = 1 b^T
    assert np.allclose(tape.backward(loss)[leaf], np.ones((3, 3)) @ b.data.T)


def test_unreachable_leaf_gets_zero_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        ad.square(b)  # recorded but not on the path to the loss
        loss = ad.sum_all(a)
    grads = tape.backward(loss)
    assert np.array_equal(grads[b], np.zeros((2, 2)))
    assert np.array_equal(b.grad, np.zeros((2, 2)))


def test_backward_requires_scalar():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        out = ad.square(a)
    with pytest.raises(ContractError):
        tape.backward(out)


def test_diamond_accumulates():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(ad.add(x, x))
    assert np.array_equal(tape.backward(loss)[x], np.full((2, 3), 2.0))


def test_tape_is_topologically_ordered(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with Tape() as tape:
        ad.sum_all(ad.row_softmax(ad.matmul(x, x)))
    for i, op in enumerate(tape.ops):
        assert op.output.node_id == i
        for inp in op.inputs:
            assert inp.node_id is None or inp.node_id < i


def test_no_recording_outside_tape():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = ad.square(x)
    assert y.node_id is None


def test_forward_is_bit_deterministic(rng):
    x = rng.standard_normal((5, 4))
    w = rng.standard_normal((4, 3))
    runs = [ad.row_l2_normalize(ad.row_softmax(ad.matmul(Tensor(x), Tensor(w)))).data for _ in range(3)]
    assert all(np.array_equal(runs[0], r) for r in runs[1:])


def test_tensors_are_immutable():
    t = Tensor(np.ones((2, 2)))
    with pytest.raises(ValueError):
        t.data[0, 0] = 5.0


# --- grad_check itself ----------------------------------------------------


def test_grad_check_quadratic_form(rng):
    m = rng.standard_normal((4, 4))
    sym = Tensor(m + m.T)
    err = grad_check(lambda x: ad.sum_all(ad.hadamard(x, ad.matmul(x, sym))), Tensor(rng.standard_normal((1, 4))))
    assert err <= 1e-8


def test_grad_check_constant_function(rng):
    assert grad_check(lambda x: Tensor([[3.0]]), Tensor(rng.standard_normal((2, 2)))) == 0.0


def test_grad_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        grad_check(lambda x: ad.sum_all(x), Tensor([[1.0]]), eps=1e-2)


# --- property tests ---------------------------------------------------------

finite_rows = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False),
)


@settings(max_examples=200, deadline=None)
@given(finite_rows)
def test_softmax_rows_sum_to_one(x):
    out = ad.row_softmax(Tensor(x)).data
    assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-9)
    assert np.all(out > 0)


@settings(max_examples=200, deadline=None)
@given(finite_rows)
def test_softmax_then_l2_rows_are_unit(x):
    out = ad.row_l2_normalize(ad.row_softmax(Tensor(x))).data
    assert np.all(np.abs(np.linalg.norm(out, axis=1) - 1.0) <= 1e-9)


# --- gradient fidelity of every primitive ----------------------------------


def _pos(rng, shape):
    return rng.uniform(0.2, 2.0, shape)


# name -> (builder of input arrays from (rng, n, m), op over tensors)
PRIMITIVES = {
    "matmul": (lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((m, 3))], ad.matmul),
    "add": (lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((n, m))], ad.add),
    "sub": (lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((n, m))], ad.sub),
    "hadamard": (lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((n, m))], ad.hadamard),
    "add_row": (lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((1, m))], ad.add_row),
    "col_broadcast_scale": (
        lambda r, n, m: [r.standard_normal((n, 1)), r.standard_normal((n, m))],
        ad.col_broadcast_scale,
    ),
    "pairwise_sq_dist": (
        lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((3, m))],
        ad.pairwise_sq_dist,
    ),
    "scale": (lambda r, n, m: [r.standard_normal((n, m))], lambda a: ad.scale(a, -1.7)),
    "add_scalar": (lambda r, n, m: [r.standard_normal((n, m))], lambda a: ad.add_scalar(a, 0.3)),
    "square": (lambda r, n, m: [r.standard_normal((n, m))], ad.square),
    "power": (lambda r, n, m: [_pos(r, (n, m))], lambda a: ad.power(a, -1.0)),
    "log": (lambda r, n, m: [_pos(r, (n, m))], ad.log),
    "safe_log": (lambda r, n, m: [_pos(r, (n, m))], ad.safe_log),
    "relu": (lambda r, n, m: [r.standard_normal((n, m))], ad.relu),
    "leaky_relu": (lambda r, n, m: [r.standard_normal((n, m))], lambda a: ad.leaky_relu(a, 0.2)),
    "tanh": (lambda r, n, m: [r.standard_normal((n, m))], ad.tanh),
    "sum_all": (lambda r, n, m: [r.standard_normal((n, m))], ad.sum_all),
    "row_softmax": (lambda r, n, m: [2 * r.standard_normal((n, m))], ad.row_softmax),
    "row_l2_normalize": (lambda r, n, m: [r.standard_normal((n, m))], ad.row_l2_normalize),
    "row_normalize": (lambda r, n, m: [_pos(r, (n, m))], ad.row_normalize),
    "concat_cols": (
        lambda r, n, m: [r.standard_normal((n, m)), r.standard_normal((n, 2))],
        lambda a, b: ad.concat_cols([a, b]),
    ),
    "slice_cols": (lambda r, n, m: [r.standard_normal((n, m + 2))], lambda a: ad.slice_cols(a, 1, a.cols - 1)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    build, op = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(50):
        n, m = rng.integers(1, 6, size=2)
        inputs = [Tensor(a) for a in build(rng, int(n), int(m))]
        worst = max(worst, grad_check(_weighted(op), inputs))
    assert worst <= 1e-6, f"{name}: {worst:.3g}"
