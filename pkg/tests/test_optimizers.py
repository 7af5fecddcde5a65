import numpy as np
import pytest

from src.errors import ArgumentError, NonFiniteLossError
from src.optimizers import History, OptimizerConfig, minimize

CENTRE = np.array([1.0, -2.0, 0.5])


def bowl(x):
    d = x - CENTRE
    return float(d @ d), 2.0 * d


def rosenbrock(x):
    a, b = x
    loss = (1.0 - a) ** 2 + 100.0 * (b - a ** 2) ** 2
    grad = np.array([-2.0 * (1.0 - a) - 400.0 * a * (b - a ** 2), 200.0 * (b - a ** 2)])
    return loss, grad


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ArgumentError):
            OptimizerConfig(method="sgd")

    def test_wolfe_constants(self):
        with pytest.raises(ArgumentError):
            OptimizerConfig(c1=0.9, c2=0.1)

    def test_negative_budget(self):
        with pytest.raises(ArgumentError):
            OptimizerConfig(max_evals=-1)


class TestLBFGS:
    def test_quadratic_bowl(self):
        x, history = minimize(bowl, np.zeros(3), OptimizerConfig(max_evals=200))
        np.testing.assert_allclose(x, CENTRE, atol=1e-8)
        assert history.best_loss < 1e-16
        assert history.status in ("converged", "line-search-failed")

    def test_rosenbrock(self):
        x, history = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(max_evals=2000))
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-5)
        losses = history.losses
        assert losses[-1] < losses[0]

    def test_start_at_minimum(self):
        x, history = minimize(bowl, CENTRE.copy(), OptimizerConfig(max_evals=10))
        assert history.status == "converged"
        assert len(history.rows) == 1
        np.testing.assert_array_equal(x, CENTRE)

    def test_zero_budget_returns_start(self):
        x0 = np.array([3.0, 3.0, 3.0])
        x, history = minimize(bowl, x0, OptimizerConfig(max_evals=0))
        np.testing.assert_array_equal(x, x0)
        assert history.status == "max-evals"

    def test_budget_is_respected(self):
        calls = []

        def counted(x):
            calls.append(1)
            return rosenbrock(x)

        _, history = minimize(counted, np.array([-1.2, 1.0]), OptimizerConfig(max_evals=15))
        assert len(calls) <= 15
        assert history.status == "max-evals"

    def test_non_finite_start(self):
        _, history = minimize(lambda x: (np.nan, np.zeros_like(x)), np.zeros(2))
        assert history.status == "non-finite-start"

    def test_non_finite_error_at_start(self):
        def broken(x):
            raise NonFiniteLossError("overflow", step=3)

        _, history = minimize(broken, np.zeros(2))
        assert history.status == "non-finite-start"
        assert history.best_loss == np.inf


class TestAdam:
    def test_bowl(self):
        config = OptimizerConfig(method="adam", max_evals=3000, learning_rate=1e-2)
        x, history = minimize(bowl, np.zeros(3), config)
        np.testing.assert_allclose(x, CENTRE, atol=5e-2)
        assert history.status == "max-evals"


class TestHistory:
    def test_csv(self, tmp_path):
        history = History()
        history.record(0, 1.0, 2.0, 1, 0.0)
        history.record(1, 0.5, 1.0, 3, 0.1)
        history.write_csv(tmp_path / "log" / "train_log.csv")
        text = (tmp_path / "log" / "train_log.csv").read_text().splitlines()
        assert text[0] == "iter,loss,gradnorm,fevals,seconds"
        assert len(text) == 3
        np.testing.assert_array_equal(history.losses, [1.0, 0.5])
