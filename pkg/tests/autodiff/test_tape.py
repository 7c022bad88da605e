"""
Tests for the tape, the differentiable ops and the finite-difference checker.
"""
import numpy as np
import pytest

from autodiff import ops
from autodiff.gradcheck import grad_check
from autodiff.tape import Tape, Tensor, default_dtype, precision
from core.runtime.errors import DimensionError, NumericError, ParameterError


def _param(rng, shape, name):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


class TestTape:
    """Recording and backward propagation."""

    def test_nothing_recorded_without_trainable_inputs(self):
        """Ops on constants leave the tape empty."""
        with Tape() as tape:
            ops.relu(Tensor(np.ones((2, 2))))
        assert len(tape) == 0

    def test_nothing_recorded_without_tape(self):
        """Outside a tape outputs never require gradients."""
        x = Tensor(np.ones(3), requires_grad=True)
        assert not ops.scale(x, 2.0).requires_grad

    def test_backward_needs_scalar(self):
        """A non-scalar loss is rejected."""
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            y = ops.relu(x)
        with pytest.raises(NumericError):
            tape.backward(y)

    def test_gradients_accumulate_over_reuse(self):
        """A tensor used twice receives the sum of both contributions."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            loss = ops.total(ops.add(x, x))
        tape.backward(loss)
        np.testing.assert_allclose(x.grad, [2.0, 2.0])

    def test_topological_order(self):
        """Every recorded input predates its output."""
        rng = np.random.default_rng(0)
        w = _param(rng, (3, 2), "w")
        b = _param(rng, (2,), "b")
        with Tape() as tape:
            ops.mean(ops.sigmoid(ops.linear(Tensor(rng.normal(size=(4, 3))), w, b)))
        tape.validate()
        assert len(tape) == 3

    def test_relu_subgradient_at_zero(self):
        """The ReLU derivative at exactly 0 is 0."""
        x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
        with Tape() as tape:
            loss = ops.total(ops.relu(x))
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_concat_splits_gradient(self):
        """Concatenation routes each column block back to its source."""
        a = Tensor(np.ones((2, 1)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        weights = Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        with Tape() as tape:
            loss = ops.total(ops.mul(ops.concat(a, b), weights))
        tape.backward(loss)
        np.testing.assert_allclose(a.grad, [[1.0], [4.0]])
        np.testing.assert_allclose(b.grad, [[2.0, 3.0], [5.0, 6.0]])

    def test_non_finite_forward_raises(self):
        """An infinite weight is caught where it first produces a value."""
        w = Tensor(np.array([[np.inf]]), requires_grad=True)
        with pytest.raises(NumericError, match="linear"):
            ops.linear(Tensor(np.ones((1, 1))), w, Tensor(np.zeros(1)))


class TestPrecision:
    """Thread-local default dtype."""

    def test_default_is_float32(self):
        """New tensors are single precision unless asked otherwise."""
        assert Tensor([1.0]).data.dtype == np.float32

    def test_precision_context_restores(self):
        """The precision context switches and then restores the dtype."""
        with precision("float64"):
            assert Tensor([1.0]).data.dtype == np.float64
        assert default_dtype() == np.float32


class TestOps:
    """Shape checks and special cases of individual ops."""

    def test_linear_shape_mismatch(self):
        """Non-conforming matrices are rejected."""
        with pytest.raises(DimensionError):
            ops.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)))

    def test_dropout_eval_is_identity(self):
        """Eval-mode dropout returns its input untouched."""
        x = Tensor(np.ones((4, 4)))
        assert ops.dropout(x, 0.5, training=False, rng=None) is x

    def test_dropout_scales_survivors(self):
        """Survivors are scaled by 1/(1-rate); the rest are zero."""
        x = Tensor(np.ones((64, 64)))
        y = ops.dropout(x, 0.5, training=True, rng=np.random.default_rng(1)).numpy()
        assert set(np.unique(y)) <= {0.0, 2.0}
        assert 0.4 < np.mean(y == 0.0) < 0.6

    def test_dropout_rate_domain(self):
        """Rates outside [0, 1) are rejected."""
        with pytest.raises(ParameterError):
            ops.dropout(Tensor(np.ones(2)), 1.0, training=True, rng=np.random.default_rng(0))

    def test_bce_rejects_bad_targets(self):
        """Targets must match the prediction shape and lie in [0, 1]."""
        p = Tensor(np.full((3, 1), 0.5))
        with pytest.raises(DimensionError):
            ops.bce(p, np.zeros(3))
        with pytest.raises(ParameterError):
            ops.bce(p, np.full((3, 1), 2.0))

    def test_bce_value(self):
        """BCE of 0.5 predictions is log 2 for any binary target."""
        p = Tensor(np.full((4, 1), 0.5), dtype=np.float64)
        assert ops.bce(p, np.array([[0.0], [1.0], [1.0], [0.0]])).item() == pytest.approx(np.log(2.0))

    def test_sigmoid_is_stable(self):
        """Large magnitudes saturate without overflow."""
        out = ops.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]), dtype=np.float64)).numpy()
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


class TestGradCheck:
    """Tape gradients against central finite differences."""

    def test_linear_sum(self, float64):
        """Gradient of sum(x W + b) w.r.t. W on a random 3x2 case."""
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 3)))
        w, b = _param(rng, (3, 2), "w"), _param(rng, (2,), "b")
        report = grad_check(lambda: ops.total(ops.linear(x, w, b)), {"w": w, "b": b}, tolerance=1e-6)
        assert report.passed, report.failing()

    @pytest.mark.parametrize("seed", range(5))
    def test_composite_ops(self, float64, seed):
        """A small net using every op passes the check (inputs kept away from ReLU kinks)."""
        rng = np.random.default_rng(seed)
        x = Tensor(rng.uniform(0.1, 1.0, size=(5, 3)))
        w = Tensor(rng.uniform(0.1, 1.0, size=(3, 4)))
        b = Tensor(rng.uniform(0.5, 1.0, size=4), requires_grad=True)
        z = _param(rng, (2,), "z")
        v = _param(rng, (6, 1), "v")
        target = (rng.random((5, 1)) > 0.5).astype(float)

        def loss():
            h = ops.relu(ops.linear(x, w, b))
            h = ops.concat(h, ops.repeat_rows(z, 5))
            o = ops.sigmoid(ops.linear(h, v, Tensor(np.zeros(1))))
            o2 = ops.mul(o, ops.sub(1.0, ops.scale(o, 0.5)))
            return ops.add(ops.bce(o, target), ops.mean(ops.add_scalar(o2, 1.0)))

        report = grad_check(loss, {"b": b, "z": z, "v": v}, tolerance=1e-4)
        assert report.passed, report.failing()

    def test_requires_float64(self):
        """Single-precision parameters are refused."""
        w = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ParameterError):
            grad_check(lambda: ops.total(w), {"w": w})
