import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from logic.errors import BatchSizeError
from logic.gradcheck import numerical_grad, relative_error
from logic.normalization import BatchNormState, batchnorm, batchnorm_backward


def test_train_mode_standardizes():
    z = np.random.default_rng(0).normal(3.0, 2.0, (16, 5))
    out, _ = batchnorm(z, BatchNormState(5))
    assert_allclose(out.mean(axis=0), 0.0, atol=1e-6)
    assert_allclose(out.var(axis=0), 1.0, atol=1e-5)


def test_infer_mode_with_fresh_state_is_identity():
    z = np.random.default_rng(1).standard_normal((4, 3))
    out, _ = batchnorm(z, BatchNormState(3), mode="infer")
    assert_allclose(out, z / np.sqrt(1 + 1e-5))


def test_running_statistics_recurrence():
    rng = np.random.default_rng(2)
    state = BatchNormState(2, momentum=0.1)
    first, second = rng.standard_normal((4, 2)), rng.standard_normal((6, 2))
    batchnorm(first, state)
    batchnorm(second, state)
    mean = 0.9 * (0.9 * 0 + 0.1 * first.mean(0)) + 0.1 * second.mean(0)
    var = 0.9 * (0.9 * 1 + 0.1 * first.var(0, ddof=1)) + 0.1 * second.var(0, ddof=1)
    assert_allclose(state.running_mean, mean)
    assert_allclose(state.running_var, var)


def test_update_false_leaves_state():
    state = BatchNormState(3)
    batchnorm(np.random.default_rng(3).standard_normal((5, 3)), state, update=False)
    assert_array_equal(state.running_mean, np.zeros(3))
    assert_array_equal(state.running_var, np.ones(3))


def test_single_row_rejected_in_train_mode():
    with pytest.raises(BatchSizeError):
        batchnorm(np.zeros((1, 3)), BatchNormState(3))
    out, _ = batchnorm(np.zeros((1, 3)), BatchNormState(3), mode="infer")
    assert out.shape == (1, 3)


@pytest.mark.parametrize("mode", ["train", "infer"])
def test_backward_matches_finite_differences(mode):
    rng = np.random.default_rng(4)
    state = BatchNormState(3, running_mean=rng.standard_normal(3), running_var=rng.uniform(0.5, 2, 3))
    z = rng.standard_normal((5, 3))
    upstream = rng.standard_normal((5, 3))
    _, cache = batchnorm(z, state, mode=mode, update=False)
    analytic = batchnorm_backward(cache, upstream, mode=mode)
    numeric = numerical_grad(lambda x: float(np.sum(upstream * batchnorm(x, state, mode=mode, update=False)[0])), z)
    assert relative_error(analytic, numeric) < 1e-6


def test_state_round_trip():
    state = BatchNormState(2, running_mean=[0.5, -1.0], running_var=[2.0, 3.0])
    back = BatchNormState.from_dict(state.to_dict())
    assert_array_equal(back.running_mean, state.running_mean)
    assert_array_equal(back.running_var, state.running_var)
    assert back.momentum == 0.1 and back.epsilon == 1e-5
