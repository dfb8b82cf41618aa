import numpy as np
import pytest

from mindmerger_lab.core import NonDeterministicBuilderError, TapeError
from mindmerger_lab.tensorcore import primitives as P
from mindmerger_lab.tensorcore.gradcheck import grad_check
from mindmerger_lab.tensorcore.rng import rng_stream
from mindmerger_lab.tensorcore.tensor import Parameter


@pytest.fixture
def weights():
    return Parameter("w", rng_stream(0).normal((3, 2)))


@pytest.mark.unit
class TestGradCheckUnit:
    def test_correct_gradients_pass(self, weights):
        x = rng_stream(1).normal((4, 3))

        def builder():
            return P.reduce_sum(P.softmax(P.matmul(P.constant(x), weights.tensor)) * P.constant(x[:, :2]))

        assert grad_check(builder, [weights]) < 1e-3

    def test_parameters_are_restored_bitwise(self, weights):
        before = weights.data.copy()
        weights.trainable = False
        grad_check(lambda: P.reduce_sum(P.scale(weights.tensor, 3.0)), [weights])
        assert weights.data.dtype == np.float32
        assert np.array_equal(weights.data, before)
        assert weights.trainable is False

    def test_non_deterministic_builder(self, weights):
        rng = rng_stream(2)

        def builder():
            return P.reduce_sum(P.scale(weights.tensor, float(rng.uniform())))

        with pytest.raises(NonDeterministicBuilderError):
            grad_check(builder, [weights])

    def test_builder_must_return_a_scalar(self, weights):
        with pytest.raises(TapeError, match="scalar"):
            grad_check(lambda: P.scale(weights.tensor, 1.0), [weights])

    def test_eps_must_be_positive(self, weights):
        with pytest.raises(ValueError):
            grad_check(lambda: P.reduce_sum(weights.tensor), [weights], eps=0.0)
