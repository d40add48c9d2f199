import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtm import tensor_core as tc
from mtm.tensor_core import Tape, Tensor


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def fd_check(fn, *arrays, h=1e-4):
    """Max relative error of tape vs central-difference gradients of a random projection of fn."""
    with tc.default_dtype(np.float64):
        ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        shape = fn(*ts).shape
        proj = np.random.default_rng(len(shape)).uniform(-1, 1, shape)
        res = tc.grad_check(lambda: tc.reduce_sum(fn(*ts) * proj), dict(enumerate(ts)), h=h, samples_per_param=6)
    return res.max_rel_error


class TestMatmul:
    def test_identity(self):
        out = tc.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_selector_row(self):
        out = tc.matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        np.testing.assert_array_equal(out.data, [[5, 6], [0, 0]])

    def test_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        with tc.default_dtype(np.float64):
            out = tc.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, triple_loop(a, b), atol=1e-6)

    def test_shape_error_names_both(self):
        with pytest.raises(tc.ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            tc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


class TestCosine:
    def test_self(self):
        v = Tensor([0.3, -2.0, 5.0])
        assert tc.cosine(v, v).item() == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal(self):
        assert tc.cosine(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0

    def test_formula(self):
        a, b = [1, 2, 3], [4, 5, 6]
        expect = sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))
        assert tc.cosine(Tensor(a), Tensor(b)).item() == pytest.approx(expect, abs=1e-6)

    def test_zero_vectors_give_zero(self):
        z = Tensor(np.zeros(4), requires_grad=True)
        with Tape() as tape:
            out = tc.cosine(z, z)
        assert out.item() == 0.0
        (g,) = tape.gradient(out, [z])
        assert np.isfinite(g).all()

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 100), st.floats(0.01, 100))
    def test_bounded_and_scale_invariant(self, seed, a, b):
        rng = np.random.default_rng(seed)
        v1, v2 = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5)
        with tc.default_dtype(np.float64):
            c = tc.cosine(Tensor(v1), Tensor(v2)).item()
            scaled = tc.cosine(Tensor(a * v1), Tensor(b * v2)).item()
        assert -1.0 <= c <= 1.0
        assert scaled == pytest.approx(c, abs=1e-6)


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(tc.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_constant_row(self):
        np.testing.assert_allclose(tc.softmax(Tensor([7.0, 7.0, 7.0])).data, [1 / 3] * 3, rtol=1e-6)

    def test_no_overflow(self):
        out = tc.softmax(Tensor([1000.0, 0.0])).data
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [1.0, math.exp(-1000)], atol=1e-7)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-100, 100))
    def test_probability_vector_and_shift(self, logits, c):
        with tc.default_dtype(np.float64):
            p = tc.softmax(Tensor(logits)).data
            q = tc.softmax(Tensor(np.array(logits) + c)).data
        assert (p >= 0).all()
        assert p.sum() == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(p, q, atol=1e-6)

    def test_cross_entropy_floor(self):
        loss = tc.softmax_cross_entropy(Tensor([[40.0, -40.0], [-40.0, 40.0]]), [0, 1])
        assert loss.item() < 1e-6


class TestTape:
    def test_fan_out_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = tc.reduce_sum(x * x + x * 3.0)
        (g,) = tape.gradient(y, [x])
        np.testing.assert_allclose(g, [5.0, 7.0])

    def test_reverse_order(self):
        order = []
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            a = x * 2.0
            b = a * 3.0
        for i, (out, _, fn) in enumerate(list(tape.records)):
            def spy(g, fn=fn, i=i):
                order.append(i)
                return fn(g)
            tape.records[i] = (out, _, spy)
        tape.backward(b)
        assert order == [1, 0]

    def test_no_tape_no_records(self):
        x = Tensor([1.0], requires_grad=True)
        y = x * 2.0
        assert tc.active_tape() is None and y.data[0] == 2.0

    def test_unreachable_source_gets_zeros(self):
        x = Tensor([1.0, 1.0], requires_grad=True)
        z = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            y = tc.reduce_sum(x)
        _, gz = tape.gradient(y, [x, z])
        np.testing.assert_array_equal(gz, [0.0])

    def test_default_float32(self):
        assert Tensor([1, 2]).dtype == np.float32


class TestGradCheck:
    def test_quadratic(self):
        with tc.default_dtype(np.float64):
            x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
            with Tape() as tape:
                y = tc.reduce_sum(x * x)
            (g,) = tape.gradient(y, [x])
            res = tc.grad_check(lambda: tc.reduce_sum(x * x), {"x": x})
        np.testing.assert_allclose(g, [2, 4, 6])
        assert res.max_rel_error < 1e-5

    def test_lstm_cell_step(self):
        rng = np.random.default_rng(0)
        with tc.default_dtype(np.float64):
            x = Tensor(rng.uniform(-1, 1, (2, 1, 3)), requires_grad=True)
            w = Tensor(rng.uniform(-1, 1, (3 + 4, 16)), requires_grad=True)
            b = Tensor(rng.uniform(-1, 1, 16), requires_grad=True)
            proj = Tensor(rng.uniform(-1, 1, (2, 1, 4)))
            res = tc.grad_check(lambda: tc.reduce_sum(tc.lstm(x, w, b, [1, 1]) * proj),
                                {"x": x, "w": w, "b": b})
        assert res.max_rel_error < 1e-3

    def test_rejects_dropout(self):
        x = Tensor(np.ones(50), requires_grad=True)
        rng = np.random.default_rng(0)
        with pytest.raises(tc.NonDeterministicError):
            tc.grad_check(lambda: tc.reduce_sum(tc.dropout(x, 0.5, rng, True)), {"x": x})

    @pytest.mark.parametrize("h", [1e-5, 0.1])
    def test_step_bounds(self, h):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError):
            tc.grad_check(lambda: tc.reduce_sum(x), {"x": x}, h=h)


UNARY = {
    "tanh": tc.tanh,
    "sigmoid": tc.sigmoid,
    "neg": tc.neg,
    "mean": lambda a: tc.mean(a, axis=1, keepdims=True),
    "softmax": tc.softmax,
    "window_mean": lambda a: tc.window_mean(tc.reshape(a, (1, 3, 4)), 2, axis=1),
    "getitem": lambda a: a[[0, 2, 0], 1:],
    "reshape": lambda a: tc.reshape(a, (4, 3)),
}
BINARY = {
    "add": tc.add,
    "sub": tc.sub,
    "mul": tc.mul,
    "div": lambda a, b: tc.div(a, b + 3.0),
    "matmul": lambda a, b: tc.matmul(a, tc.reshape(b, (4, 3))),
    "cosine": tc.cosine,
    "pairwise_cosine": tc.pairwise_cosine,
    "concat": lambda a, b: tc.concat([a, b], axis=0),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_unary_gradients(name, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, (3, 4))
    assert fd_check(UNARY[name], x) < 1e-3


@pytest.mark.parametrize("name", sorted(BINARY))
@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_binary_gradients(name, seed):
    rng = np.random.default_rng(seed)
    assert fd_check(BINARY[name], rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (3, 4))) < 1e-3


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, 4)
    with tc.default_dtype(np.float64):
        x = Tensor(rng.uniform(-1, 1, (4, 2)), requires_grad=True)
        res = tc.grad_check(lambda: tc.softmax_cross_entropy(x, labels), {"x": x})
    assert res.max_rel_error < 1e-3


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_lstm_and_embedding_gradients(seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(1, 6, (2, 4))  # PAD row is frozen by design
    lengths = np.array([4, 2])
    with tc.default_dtype(np.float64):
        table = Tensor(rng.uniform(-1, 1, (6, 3)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (3 + 2, 8)), requires_grad=True)
        b = Tensor(rng.uniform(-1, 1, 8), requires_grad=True)
        proj = Tensor(rng.uniform(-1, 1, (2, 4, 2)))
        res = tc.grad_check(
            lambda: tc.reduce_sum(tc.lstm(tc.embedding(table, ids), w, b, lengths, reverse=bool(seed % 2)) * proj),
            {"table": table, "w": w, "b": b}, samples_per_param=6)
    assert res.max_rel_error < 1e-3


class TestDropout:
    def test_eval_identity(self):
        x = Tensor(np.random.default_rng(0).normal(size=(5, 5)))
        assert tc.dropout(x, 0.2, np.random.default_rng(1), training=False) is x

    def test_unbiased(self):
        n, rate = 10_000, 0.2
        out = tc.dropout(Tensor(np.ones(n)), rate, np.random.default_rng(5), training=True).data
        sigma = math.sqrt(rate / (1 - rate) / n)
        assert abs(out.mean() - 1.0) < 3 * sigma


class TestEmbedding:
    def test_lookup_and_pad(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        table.data[0] = 0
        np.testing.assert_array_equal(tc.embedding(table, np.array([[2]])).data[0, 0], [6, 7, 8])
        assert not tc.embedding(table, np.zeros((2, 3), int)).data.any()

    def test_pad_row_gets_no_gradient(self):
        table = Tensor(np.ones((4, 2)), requires_grad=True)
        with Tape() as tape:
            y = tc.reduce_sum(tc.embedding(table, np.array([[0, 1, 0]])))
        (g,) = tape.gradient(y, [table])
        np.testing.assert_array_equal(g[0], 0)
        np.testing.assert_array_equal(g[1], 1)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            tc.embedding(Tensor(np.ones((4, 2))), np.array([[4]]))


def test_window_mean_too_short():
    with pytest.raises(ValueError, match="too short"):
        tc.window_mean(Tensor(np.ones((1, 2, 3))), 3)


def test_forward_stays_finite():
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(-30, 30, (4, 6)))
    for out in (tc.tanh(x), tc.sigmoid(x), tc.softmax(x), tc.pairwise_cosine(x, x)):
        assert np.isfinite(out.data).all()
