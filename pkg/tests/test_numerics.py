import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import central_diff, max_rel_err, np_softmax
from signbart.errors import ContractError, DimensionError, NumericError, ParameterError
from signbart.numerics import (
    LrSchedule,
    OptimizerState,
    Tape,
    Tensor,
    adamw_step,
    dropout,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax_last_dim,
    lr_at,
    matmul,
    softmax_last_dim,
    transpose,
)


def autodiff_grads(fn, *arrays):
    """Gradient of sum(fn(*tensors)) for each input via the tape."""
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = fn(*ts).sum()
    tape.backward(loss)
    return [t.grad for t in ts]


def fd_grads(fn, *arrays):
    arrays = [np.array(a, dtype=float) for a in arrays]
    out = []
    for a in arrays:
        out.append(central_diff(lambda: fn(*[Tensor(b) for b in arrays]).data.sum(), a))
    return out


# -- matmul -----------------------------------------------------------------

def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(Tensor(np.eye(2)), Tensor(m)).data, m)


def test_matmul_one_hot_rows():
    a = Tensor([[1, 0], [0, 1], [1, 1]])
    b = Tensor([[2], [5]])
    assert np.array_equal(matmul(a, b).data, [[2], [5], [7]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(4, 3\).*\(2, 5\)"):
        matmul(Tensor(np.ones((4, 3))), Tensor(np.ones((2, 5))))


def test_matmul_gradient_vs_finite_differences():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    for got, want in zip(autodiff_grads(matmul, a, b), fd_grads(matmul, a, b)):
        assert max_rel_err(got, want) < 1e-6


def test_batched_matmul_broadcast_gradient():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 3, 4, 5)), rng.normal(size=(5, 2))
    for got, want in zip(autodiff_grads(matmul, a, b), fd_grads(matmul, a, b)):
        assert max_rel_err(got, want) < 1e-5


# -- softmax ----------------------------------------------------------------

def test_softmax_uniform():
    np.testing.assert_allclose(softmax_last_dim(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)


def test_softmax_large_logits_do_not_overflow():
    assert np.array_equal(softmax_last_dim(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])


def test_softmax_closed_form():
    np.testing.assert_allclose(softmax_last_dim(Tensor([0.0, math.log(3)])).data, [0.25, 0.75], atol=1e-15)


def test_softmax_empty_is_dimension_error():
    with pytest.raises(DimensionError):
        softmax_last_dim(Tensor(np.zeros((2, 0))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    p = softmax_last_dim(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax_last_dim(Tensor(x + c)).data, p, atol=1e-12)


# -- layer norm -------------------------------------------------------------

def test_layer_norm_constant_slice_returns_bias():
    out = layer_norm(Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    assert np.array_equal(out.data, [0.0, 0.0, 0.0])


def test_layer_norm_two_values():
    out = layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14)
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-12)


def test_layer_norm_rejects_nonpositive_eps():
    with pytest.raises(ParameterError):
        layer_norm(Tensor([1.0, 2.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)


def test_layer_norm_gain_shape_checked():
    with pytest.raises(DimensionError):
        layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(2)), Tensor(np.zeros(3)))


def test_layer_norm_gradient_vs_finite_differences():
    rng = np.random.default_rng(2)
    x, g, b = rng.normal(size=(2, 4)), rng.normal(size=4), rng.normal(size=4)
    # weight the output so the gradient is not trivially zero (sum of a normalized slice is constant)
    w = Tensor(rng.normal(size=(2, 4)))

    def fn(x, g, b):
        return layer_norm(x, g, b) * w

    for got, want in zip(autodiff_grads(fn, x, g, b), fd_grads(fn, x, g, b)):
        assert max_rel_err(got, want) < 1e-5


# -- every differentiable primitive on three shapes -------------------------

SHAPES = [(3,), (2, 5), (2, 3, 4)]


def _primitives(rng, shape):
    w = Tensor(rng.normal(size=shape))
    pos = rng.uniform(0.5, 2.0, size=shape)
    n = shape[-1]
    return {
        "add": (lambda a, b: (a + b) * w, [rng.normal(size=shape), rng.normal(size=shape[-1:])]),
        "sub": (lambda a, b: (a - b) * w, [rng.normal(size=shape), rng.normal(size=shape)]),
        "mul": (lambda a, b: a * b, [rng.normal(size=shape), rng.normal(size=shape)]),
        "div": (lambda a, b: a / b, [rng.normal(size=shape), pos]),
        "exp": (lambda a: exp(a) * w, [rng.normal(size=shape)]),
        "log": (lambda a: log(a) * w, [pos.copy()]),
        "gelu": (lambda a: gelu(a) * w, [rng.normal(size=shape)]),
        "softmax": (lambda a: softmax_last_dim(a) * w, [rng.normal(size=shape)]),
        "log_softmax": (lambda a: log_softmax_last_dim(a) * w, [rng.normal(size=shape)]),
        "layer_norm": (lambda a, g, b: layer_norm(a, g, b) * w,
                       [rng.normal(size=shape), rng.normal(size=n), rng.normal(size=n)]),
        "mean": (lambda a: (a * w).mean(axis=-1), [rng.normal(size=shape)]),
        "reshape": (lambda a: a.reshape(-1) * Tensor(w.data.reshape(-1)), [rng.normal(size=shape)]),
        "transpose": (lambda a: transpose(a, tuple(reversed(range(len(shape))))) * Tensor(w.data.T),
                      [rng.normal(size=shape)]),
    }


@pytest.mark.parametrize("shape", SHAPES)
def test_every_primitive_matches_finite_differences(shape):
    rng = np.random.default_rng(len(shape))
    for name, (fn, args) in _primitives(rng, shape).items():
        for got, want in zip(autodiff_grads(fn, *args), fd_grads(fn, *args)):
            assert max_rel_err(got, want) < 1e-5, name


def test_dropout_gradient_with_fixed_mask():
    x = np.random.default_rng(3).normal(size=(3, 4))

    def fn(a):
        return dropout(a, 0.3, True, np.random.default_rng(11))

    (got,) = autodiff_grads(fn, x)
    (want,) = fd_grads(fn, x)
    assert max_rel_err(got, want) < 1e-6


# -- dropout ----------------------------------------------------------------

def test_dropout_eval_is_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert np.array_equal(dropout(x, 0.5, False, None).data, x.data)


def test_dropout_zero_rate_is_identity():
    x = Tensor(np.arange(6.0))
    assert np.array_equal(dropout(x, 0.0, True, np.random.default_rng(0)).data, x.data)


def test_dropout_preserves_expectation():
    out = dropout(Tensor(np.ones(10_000)), 0.5, True, np.random.default_rng(0)).data
    assert 0.95 <= out.mean() <= 1.05
    assert set(np.unique(out)) <= {0.0, 2.0}


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_validated(rate):
    with pytest.raises(ParameterError):
        dropout(Tensor([1.0]), rate, True, np.random.default_rng(0))


# -- backward ---------------------------------------------------------------

def test_backward_of_sum_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = x.sum()
    tape.backward(loss)
    assert np.array_equal(x.grad, np.ones((2, 3, 2)))


def test_backward_of_half_square_is_identity():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 3)), requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum() / 2.0
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, x.data, rtol=0, atol=1e-15)


def test_backward_accumulates_on_shared_inputs():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * 3.0 + x * x).sum()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [5.0, 7.0])
    with Tape() as tape:
        loss = x.sum()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [6.0, 8.0])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        tape.backward(y)


def test_backward_frees_tape():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum()
    assert len(tape) > 0
    tape.backward(loss)
    assert len(tape) == 0


def test_non_finite_gradient_names_the_op(monkeypatch):
    import signbart.numerics.tensor as tensor_mod

    monkeypatch.setattr(tensor_mod, "_gelu_grad", lambda x: np.full_like(x, np.nan))
    x = Tensor([0.5, 1.0], requires_grad=True)
    with Tape() as tape:
        loss = gelu(x).sum()
    with pytest.raises(NumericError, match="gelu"):
        tape.backward(loss)


def test_nan_inputs_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])


def test_no_tape_means_no_tracking():
    x = Tensor([1.0], requires_grad=True)
    assert not (x * 2.0).requires_grad


# -- AdamW ------------------------------------------------------------------

def test_adamw_zero_grad_isolates_decay():
    p = Tensor(np.random.default_rng(0).normal(size=(3, 3)))
    before = p.data.copy()
    p.grad = np.zeros_like(p.data)
    state = OptimizerState.for_params({"p": p}, weight_decay=1e-2)
    adamw_step({"p": p}, state, lr=2e-4)
    assert np.array_equal(p.data, before * (1 - 2e-6))


def test_adamw_first_step_is_signed_lr():
    g = np.array([0.3, -2.0, 1e-2, -5.0])
    p = Tensor(np.zeros(4))
    p.grad = g.copy()
    state = OptimizerState.for_params({"p": p}, weight_decay=0.0)
    adamw_step({"p": p}, state, lr=1e-3)
    np.testing.assert_allclose(p.data, -1e-3 * np.sign(g), rtol=1e-6)


def test_adamw_identical_params_get_identical_updates():
    rng = np.random.default_rng(5)
    data, grad = rng.normal(size=5), rng.normal(size=5)
    a, b = Tensor(data), Tensor(data)
    params = {"a": a, "b": b}
    state = OptimizerState.for_params(params)
    for _ in range(3):
        a.grad, b.grad = grad.copy(), grad.copy()
        adamw_step(params, state, lr=2e-4)
    assert np.array_equal(a.data, b.data)


def test_adamw_without_decay_equals_adam():
    rng = np.random.default_rng(6)
    p = Tensor(rng.normal(size=4))
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = OptimizerState.for_params({"p": p}, weight_decay=0.0)
    for t in range(1, 4):
        g = rng.normal(size=4)
        p.grad = g
        adamw_step({"p": p}, state, lr=1e-2)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)
    assert state.step == 3


def test_adamw_missing_grad():
    with pytest.raises(ContractError):
        p = Tensor([1.0])
        adamw_step({"p": p}, OptimizerState.for_params({"p": p}), lr=1e-3)


# -- schedule ---------------------------------------------------------------

def test_lr_warmup_endpoint():
    s = LrSchedule(2e-4, 100, 1100)
    assert lr_at(s, 100) == 2e-4


def test_lr_cosine_endpoint():
    assert lr_at(LrSchedule(2e-4, 100, 1100), 1100) == 0.0


def test_lr_midpoint():
    assert lr_at(LrSchedule(2e-4, 100, 1100), 600) == pytest.approx(1e-4, rel=1e-12)


def test_lr_clamps_past_total():
    assert lr_at(LrSchedule(2e-4, 10, 100, min_lr=1e-6), 500) == 1e-6


def test_schedule_validation():
    with pytest.raises(ParameterError):
        LrSchedule(2e-4, 100, 100)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(0, 499), st.floats(0, 1e-4))
def test_lr_monotone_pieces(total, warm, min_lr):
    warm = min(warm, total - 1)
    s = LrSchedule(2e-4, warm, total, min_lr)
    lrs = [lr_at(s, k) for k in range(total + 1)]
    assert all(0 <= v <= 2e-4 for v in lrs)
    assert all(lrs[k] <= lrs[k + 1] for k in range(warm))
    assert all(lrs[k] >= lrs[k + 1] - 1e-18 for k in range(warm, total))
