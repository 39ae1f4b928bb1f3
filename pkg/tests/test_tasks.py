"""Unit tests for the synthetic quadratic task and its exact constants."""

import numpy as np
import pytest

from fedro.rngtools import TAG_GRAD, child_rng
from fedro.tasks import (
    QuadraticTask,
    TaskConfig,
    global_loss,
    make_quadratic_task,
    stochastic_gradient,
    true_global_gradient,
    verify_assumptions,
)


def two_point_task() -> QuadraticTask:
    # Two honest clients with centers -1 and +1.
    return QuadraticTask(
        L=1.0, centers=np.array([[-1.0], [1.0]]), byz_count=0, noise_sigma=0.0
    )


class TestConstruction:
    def test_homogeneous_task(self):
        config = TaskConfig(kind="quadratic", n=10, b=2, d=3, L=2.0, spread=0.0, sigma=0.0)
        task, constants = make_quadratic_task(config, seed=0)
        assert constants.zeta == 0.0
        np.testing.assert_array_equal(constants.x_star, np.zeros(3))
        assert constants.delta0 == 0.0
        assert constants.h == 8

    def test_heterogeneous_constants_closed_form(self):
        config = TaskConfig(kind="quadratic", n=12, b=3, d=2, L=1.5, spread=0.8, sigma=0.4)
        task, constants = make_quadratic_task(config, seed=5)
        honest = task.centers[3:]
        c_bar = honest.mean(axis=0)
        zeta_sq = config.L**2 * ((honest - c_bar) ** 2).sum() / 9
        assert constants.zeta**2 == pytest.approx(zeta_sq, rel=1e-12)
        assert constants.sigma == 0.4 and constants.L == 1.5

    def test_delta0_from_x0(self):
        config = TaskConfig(kind="quadratic", n=6, b=0, d=1, L=1.0, spread=0.0, sigma=0.0)
        _, constants = make_quadratic_task(config, seed=0, x0=np.array([2.0]))
        assert constants.delta0 == pytest.approx(2.0)  # (1/2)*L*|2-0|^2

    def test_two_point_closed_forms(self):
        task = two_point_task()
        np.testing.assert_array_equal(true_global_gradient(task, np.zeros(1)), [0.0])
        grads = task.L * (np.zeros(1) - task.centers)
        dispersion = ((grads - grads.mean(axis=0)) ** 2).sum(axis=1).mean()
        assert dispersion == pytest.approx(1.0)  # zeta^2 = 1
        assert global_loss(task, np.zeros(1)) == pytest.approx(0.5)

    def test_deterministic_given_seed(self):
        config = TaskConfig(kind="quadratic", n=8, b=2, d=4, L=1.0, spread=1.0, sigma=0.0)
        t1, _ = make_quadratic_task(config, seed=9)
        t2, _ = make_quadratic_task(config, seed=9)
        assert np.array_equal(t1.centers, t2.centers)


class TestStochasticGradient:
    def test_noiseless(self):
        task = QuadraticTask(
            L=1.0, centers=np.array([[0.0]]), byz_count=0, noise_sigma=0.0
        )
        g = stochastic_gradient(task, 0, np.array([2.0]), child_rng(0, TAG_GRAD))
        np.testing.assert_array_equal(g, [2.0])

    def test_byzantine_client_rejected(self):
        task = QuadraticTask(
            L=1.0, centers=np.zeros((3, 1)), byz_count=1, noise_sigma=0.0
        )
        with pytest.raises(ValueError):
            stochastic_gradient(task, 0, np.zeros(1), child_rng(0, TAG_GRAD))

    def test_unbiased_and_correct_second_moment(self):
        d = 4
        task = QuadraticTask(
            L=1.0, centers=np.zeros((2, d)), byz_count=0, noise_sigma=0.7
        )
        x = np.full(d, 0.3)
        rng = child_rng(0, TAG_GRAD, 0, 0)
        draws = np.array([stochastic_gradient(task, 0, x, rng) for _ in range(100_000)])
        noise = draws - x  # mean gradient is L(x - 0) = x
        assert np.abs(noise.mean(axis=0)).max() < 5 * 0.7 / np.sqrt(100_000)
        second = (noise**2).sum(axis=1).mean()
        assert second == pytest.approx(0.49, rel=0.03)


class TestGlobalQuantities:
    def test_gradient_closed_form(self):
        task = QuadraticTask(
            L=2.0, centers=np.array([[1.0]]), byz_count=0, noise_sigma=0.0
        )
        np.testing.assert_array_equal(true_global_gradient(task, np.array([3.0])), [4.0])

    def test_gradient_linearity(self):
        task = two_point_task()
        xs = [np.array([-1.0]), np.array([0.0]), np.array([1.0])]
        g = [true_global_gradient(task, x)[0] for x in xs]
        assert g[1] == pytest.approx((g[0] + g[2]) / 2)

    def test_two_code_paths_agree(self):
        config = TaskConfig(kind="quadratic", n=9, b=2, d=3, L=1.3, spread=0.7, sigma=0.0)
        task, _ = make_quadratic_task(config, seed=11)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.normal(size=3)
            per_client = np.mean(
                [task.L * (x - c) for c in task.centers[task.byz_count :]], axis=0
            )
            np.testing.assert_allclose(per_client, true_global_gradient(task, x), atol=1e-10)
            per_client_loss = np.mean(
                [0.5 * task.L * ((x - c) ** 2).sum() for c in task.centers[2:]]
            )
            assert per_client_loss == pytest.approx(global_loss(task, x), abs=1e-10)

    def test_dispersion_is_x_independent(self):
        config = TaskConfig(kind="quadratic", n=10, b=2, d=3, L=1.0, spread=0.6, sigma=0.0)
        task, constants = make_quadratic_task(config, seed=3)
        rng = np.random.default_rng(1)
        honest = task.centers[2:]
        for _ in range(10):
            x = rng.normal(size=3)
            grads = task.L * (x - honest)
            g_bar = true_global_gradient(task, x)
            dispersion = ((grads - g_bar) ** 2).sum(axis=1).mean()
            assert dispersion == pytest.approx(constants.zeta**2, rel=1e-9)


class TestVerifyAssumptions:
    def test_homogeneous_has_no_heterogeneity(self):
        config = TaskConfig(kind="quadratic", n=6, b=1, d=2, L=1.0, spread=0.0, sigma=0.0)
        task, _ = make_quadratic_task(config, seed=0)
        report = verify_assumptions(task, sample_count=10)
        assert report.zeta2_hat <= 1e-12

    def test_lipschitz_ratio_exact(self):
        config = TaskConfig(kind="quadratic", n=6, b=1, d=2, L=2.5, spread=0.5, sigma=0.0)
        task, _ = make_quadratic_task(config, seed=0)
        report = verify_assumptions(task, sample_count=10)
        assert report.L_hat == pytest.approx(2.5, rel=1e-9)

    def test_noise_second_moment(self):
        config = TaskConfig(kind="quadratic", n=6, b=1, d=3, L=1.0, spread=0.2, sigma=0.9)
        task, _ = make_quadratic_task(config, seed=1)
        report = verify_assumptions(task, sample_count=100_000, seed=1)
        assert report.sigma2_hat == pytest.approx(0.81, rel=0.03)


class TestConfigValidation:
    def test_rejects_byzantine_majority(self):
        with pytest.raises(ValueError):
            TaskConfig(kind="quadratic", n=10, b=5, d=1)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            TaskConfig(kind="linear_regression", n=10, b=1, d=1)
