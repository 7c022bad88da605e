"""
Tests for Adam with parameter groups.
"""
import numpy as np
import pytest

from autodiff import ops
from autodiff.optim import Adam, AdamState, ParamGroup, adam_step
from autodiff.tape import Tape, Tensor
from core.runtime.errors import DimensionError, OptimizationError, ParameterError


def _tensor(values):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, dtype=np.float64)


class TestAdamStep:
    """Single bias-corrected updates."""

    def test_first_step_moves_by_lr(self):
        """After bias correction the first update is lr * sign(g)."""
        p = _tensor([1.0, -1.0, 0.5])
        state = AdamState(lr=0.1)
        adam_step({"p": p}, {"p": np.array([3.0, -0.2, 1e-2])}, state)
        np.testing.assert_allclose(p.data, [0.9, -0.9, 0.4], atol=1e-6)
        assert state.step == 1

    def test_missing_gradient_skips_parameter(self):
        """A parameter without gradient neither moves nor advances its counter."""
        a, b = _tensor([1.0]), _tensor([1.0])
        state = AdamState(lr=0.1)
        adam_step({"a": a, "b": b}, {"a": np.array([1.0]), "b": None}, state)
        assert b.data[0] == 1.0
        assert state.param_steps == {"a": 1}

    def test_non_finite_gradient_leaves_group_untouched(self):
        """One NaN gradient aborts the update for every parameter in the group."""
        a, b = _tensor([1.0]), _tensor([2.0])
        state = AdamState(lr=0.1)
        with pytest.raises(OptimizationError) as exc_info:
            adam_step({"a": a, "b": b}, {"a": np.array([1.0]), "b": np.array([np.nan])}, state)
        assert exc_info.value.param_name == "b"
        assert a.data[0] == 1.0 and b.data[0] == 2.0
        assert state.step == 0

    def test_gradient_shape_checked(self):
        """A gradient of the wrong shape is rejected."""
        with pytest.raises(DimensionError):
            adam_step({"p": _tensor([1.0, 2.0])}, {"p": np.ones(3)}, AdamState(lr=0.1))


class TestAdam:
    """Group handling and state round trips."""

    def test_group_learning_rates(self):
        """Each group uses its own learning rate."""
        net, lat = _tensor([0.0]), _tensor([0.0])
        opt = Adam([ParamGroup("network", {"w": net}, 5e-4), ParamGroup("latents", {"z": lat}, 1e-3)])
        net.grad, lat.grad = np.array([1.0]), np.array([1.0])
        opt.step()
        assert net.data[0] == pytest.approx(-5e-4, rel=1e-5)
        assert lat.data[0] == pytest.approx(-1e-3, rel=1e-5)

    def test_frozen_group_does_not_move(self):
        """Frozen groups are skipped by step()."""
        net, lat = _tensor([0.0]), _tensor([0.0])
        opt = Adam([ParamGroup("network", {"w": net}, 0.1, frozen=True), ParamGroup("latents", {"z": lat}, 0.1)])
        net.grad, lat.grad = np.array([1.0]), np.array([1.0])
        opt.step()
        assert net.data[0] == 0.0
        assert lat.data[0] != 0.0

    def test_rejects_bad_groups(self):
        """Non-positive learning rates and duplicate names are refused."""
        with pytest.raises(ParameterError):
            Adam([ParamGroup("g", {}, 0.0)])
        with pytest.raises(ParameterError):
            Adam([ParamGroup("g", {}, 0.1), ParamGroup("g", {}, 0.1)])

    def test_quadratic_descends_monotonically(self):
        """Minimizing w^2 through the tape lowers the loss at every step."""
        w = _tensor([2.0, -1.5])
        opt = Adam([ParamGroup("network", {"w": w}, 0.01)])
        losses = []
        for _ in range(100):
            opt.zero_grad()
            with Tape() as tape:
                loss = ops.mean(ops.mul(w, w))
            tape.backward(loss)
            opt.step()
            losses.append(float(np.mean(w.data**2)))
        assert np.all(np.diff(losses) < 0)
        assert losses[-1] < 0.5 * (4.0 + 2.25) / 2

    def test_state_dict_resumes_identically(self):
        """Restoring the state mid-run reproduces the uninterrupted trajectory."""
        grads = [np.array([0.3, -1.0]), np.array([0.1, 0.2]), np.array([-0.5, 0.7]), np.array([0.9, -0.1])]

        def run(split):
            p = _tensor([1.0, 2.0])
            opt = Adam([ParamGroup("network", {"w": p}, 0.01)])
            for i, g in enumerate(grads):
                if i == split:
                    saved = opt.state_dict()
                    p = _tensor(p.data.copy())
                    opt = Adam([ParamGroup("network", {"w": p}, 0.01)])
                    opt.load_state_dict(saved)
                p.grad = g
                opt.step()
            return p.data

        np.testing.assert_array_equal(run(split=-1), run(split=2))

    def test_unknown_group_in_state(self):
        """Loading state for a group the optimizer lacks fails."""
        opt = Adam([ParamGroup("network", {"w": _tensor([1.0])}, 0.01)])
        with pytest.raises(ParameterError):
            opt.load_state_dict({"arrays": {}, "counters": {"latents": {"step": 1, "param_steps": {}, "lr": 0.01}}})
