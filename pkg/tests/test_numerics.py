import numpy as np
import pytest

from src.core.errors import NothingToPredictError, NumericsError
from src.engine import numerics as nx
from src.engine.numerics import Tape, grad_check, parameter
from src.engine.sequence import build_attention_mask


def test_matmul_identity_and_scalar(rng):
    a = rng.normal(size=(3, 3))
    assert np.array_equal(nx.matmul(nx.Tensor(np.eye(3)), nx.Tensor(a)).data, a)
    assert nx.matmul(nx.Tensor([[2.0]]), nx.Tensor([[3.5]])).item() == 7.0


def test_matmul_matches_loops(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(nx.matmul(nx.Tensor(a), nx.Tensor(b)).data, expected, atol=1e-12)


def test_softmax_single_allowed_column(rng):
    allowed = np.array([[False, True, False]])
    p = nx.masked_softmax(nx.Tensor(rng.normal(size=(1, 3))), allowed).data
    assert p[0, 1] == 1.0
    assert p[0, 0] == 0.0 and p[0, 2] == 0.0


def test_softmax_uniform():
    p = nx.masked_softmax(nx.Tensor(np.zeros((2, 4))), np.ones((2, 4), dtype=bool)).data
    np.testing.assert_allclose(p, 0.25)


def test_softmax_matches_filter_then_normalize(rng):
    allowed = build_attention_mask(3, 1)
    logits = rng.normal(size=allowed.shape)
    p = nx.masked_softmax(nx.Tensor(logits), allowed).data

    for row in range(len(logits)):
        cols = np.flatnonzero(allowed[row])
        e = np.exp(logits[row, cols] - logits[row, cols].max())
        np.testing.assert_allclose(p[row, cols], e / e.sum(), atol=1e-12)
        assert (p[row, ~allowed[row]] == 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_softmax_ignores_row_shifts(rng):
    allowed = build_attention_mask(4, 2)
    logits = rng.normal(size=allowed.shape)
    shift = rng.normal(scale=50.0, size=(len(logits), 1))
    p = nx.masked_softmax(nx.Tensor(logits), allowed).data
    shifted = nx.masked_softmax(nx.Tensor(logits + shift), allowed).data
    np.testing.assert_allclose(shifted, p, atol=1e-12)
    assert (shifted[~allowed] == 0).all()


def test_softmax_sends_no_gradient_to_disallowed_entries(rng):
    allowed = build_attention_mask(4, 2)
    logits = parameter(rng.normal(size=allowed.shape))
    with Tape() as tape:
        out = nx.masked_softmax(logits, allowed)
        tape.backward(out, rng.normal(size=allowed.shape))

    assert (logits.grad[~allowed] == 0).all()
    assert np.abs(logits.grad[allowed]).sum() > 0


def test_softmax_rejects_empty_row():
    with pytest.raises(NumericsError):
        nx.masked_softmax(nx.Tensor(np.zeros((2, 2))), np.array([[True, False], [False, False]]))


def test_layer_norm_constant_and_zero_gain(rng):
    gain, bias = nx.Tensor(np.ones(4)), nx.Tensor(np.zeros(4))
    out = nx.layer_norm(nx.Tensor(np.full((1, 4), 3.0)), gain, bias).data
    np.testing.assert_allclose(out, 0.0)

    bias = nx.Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
    out = nx.layer_norm(nx.Tensor(rng.normal(size=(2, 4))), nx.Tensor(np.zeros(4)), bias).data
    np.testing.assert_allclose(out, np.broadcast_to(bias.data, (2, 4)))


def test_layer_norm_statistics(rng):
    x = rng.normal(3.0, 5.0, size=(3, 64))
    out = nx.layer_norm(nx.Tensor(x), nx.Tensor(np.ones(64)), nx.Tensor(np.zeros(64))).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-5)


def test_quadratic_gradient(rng):
    p = parameter(rng.uniform(0.5, 2.0, size=(3, 2)) * rng.choice([-1.0, 1.0], size=(3, 2)))
    with Tape() as tape:
        loss = nx.total(nx.mul(p, p))
        tape.backward(loss)
    np.testing.assert_allclose(p.grad, 2 * p.data, rtol=1e-12)
    assert grad_check(lambda: nx.total(nx.mul(p, p)), [p]) < 1e-9


def test_matmul_sum_gradient(rng):
    a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=(4, 2)))
    assert grad_check(lambda: nx.total(nx.matmul(a, b)), [a, b]) < 1e-8


@pytest.mark.parametrize(
    "build",
    [
        lambda x, w, g, b: nx.total(nx.gelu(nx.linear(x, w, b))),
        lambda x, w, g, b: nx.total(nx.mul(nx.layer_norm(x, g, b), nx.layer_norm(x, g, b))),
        lambda x, w, g, b: nx.cross_entropy(nx.matmul(x, w), [0, 1, 1]),
        lambda x, w, g, b: nx.total(
            nx.mul(nx.masked_softmax(nx.matmul(x, nx.transpose(x)), build_attention_mask(2, 1)), nx.matmul(x, nx.transpose(x)))
        ),
        lambda x, w, g, b: nx.total(
            nx.mul(nx.concat_columns([nx.columns(x, 0, 2), nx.columns(x, 2, 4)]), nx.rows(x, [2, 0, 0]))
        ),
    ],
    ids=["gelu-linear", "layer-norm", "cross-entropy", "masked-softmax", "slicing"],
)
def test_primitive_gradients(rng, build):
    x = parameter(rng.normal(size=(3, 4)))
    w = parameter(rng.normal(size=(4, 4)))
    g = parameter(rng.normal(1.0, 0.3, size=4))
    b = parameter(rng.normal(size=4))
    assert grad_check(lambda: build(x, w, g, b), [x, w, g, b], floor=1e-3) < 1e-6


def test_gradients_accumulate_across_uses(rng):
    table = parameter(rng.normal(size=(4, 3)))
    with Tape() as tape:
        loss = nx.total(nx.embedding(table, [1, 1, 2]))
        tape.backward(loss)
    assert table.grad[1].tolist() == [2.0, 2.0, 2.0]
    assert table.grad[0].tolist() == [0.0, 0.0, 0.0]


def test_no_tape_no_records(rng):
    p = parameter(rng.normal(size=(2, 2)))
    out = nx.total(nx.mul(p, p))
    assert not out.requires_grad


def test_cross_entropy_uniform():
    loss = nx.cross_entropy(nx.Tensor(np.zeros((3, 4))), [0, 1, 3])
    assert loss.item() == pytest.approx(np.log(4))


def test_cross_entropy_matches_oracle(rng):
    logits = rng.normal(size=(3, 5))
    targets = [4, 0, 2]
    expected = -np.mean([np.log(np.exp(logits[i, t]) / np.exp(logits[i]).sum()) for i, t in enumerate(targets)])
    assert nx.cross_entropy(nx.Tensor(logits), targets).item() == pytest.approx(expected, abs=1e-12)


def test_cross_entropy_empty():
    with pytest.raises(NothingToPredictError):
        nx.cross_entropy(nx.Tensor(np.zeros((0, 4))), np.zeros(0, dtype=np.int64))


def test_grad_check_needs_float64():
    p = parameter(np.ones(3, dtype=np.float32))
    with pytest.raises(NumericsError):
        grad_check(lambda: nx.total(p), [p])
