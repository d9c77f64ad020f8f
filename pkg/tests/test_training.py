"""Loss, gradient and optimizer tests.

Covers:
  - loss definition against a naive double-loop oracle and the 1/(2N) scaling
  - exact gradient vs central finite differences, duplication invariance
  - one-step Gauss-Newton optimality on a linear least-squares problem
  - Levenberg-Marquardt accept/reject contract, large-damping gradient limit,
    monotone history, and the stall path at an unreachable goal
  - epoch loop: immediate convergence, determinism, shuffle sanity,
    gradient-descent first-step decrease with backoff
"""

import math

import numpy as np
import pytest

from gyrostab import nn
from gyrostab.training import (TrainerConfig, TrainingAbortedError, TrainingSet,
                               gradient_step, lm_step, loss, loss_gradient, newton_step,
                               save_report_csv, train)


def make_set(n=12, width=4, targets_width=3, seed=0):
    rng = np.random.default_rng(seed)
    windows = rng.normal(size=(n, width))
    targets = rng.normal(size=(n, targets_width))
    return TrainingSet(windows, targets, tuple(f"c{i}" for i in range(width)),
                       np.zeros(width), np.ones(width))


def make_net(widths, seed=0, acts=None):
    acts = acts or ["tansig"] * (len(widths) - 2) + ["purelin"]
    return nn.init_mlp(widths, acts, seed=seed)


class TestLoss:
    def test_perfect_fit_is_zero(self):
        net = nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), nn.Activation.PURELIN)])
        windows = np.array([[1.0, 2.0], [3.0, 4.0]])
        ts = TrainingSet(windows, windows.copy(), ("a", "b"), np.zeros(2), np.ones(2))
        assert loss(net, ts) == 0.0

    def test_single_sample_unit_residual(self):
        # one sample, scalar target 1, output 0 -> E = 0.5
        net = nn.Mlp([nn.Layer(np.zeros((1, 1)), np.zeros(1), nn.Activation.PURELIN)])
        ts = TrainingSet(np.array([[3.0]]), np.array([[1.0]]), ("a",), np.zeros(1), np.ones(1))
        assert loss(net, ts) == pytest.approx(0.5)

    def test_matches_naive_summation(self):
        net = make_net([4, 5, 3], seed=1)
        ts = make_set(seed=2)
        total = 0.0
        for i in range(ts.n_samples):
            out = nn.forward(net, ts.windows[i])
            for s in range(3):
                total += (ts.targets[i, s] - out[s]) ** 2
        assert loss(net, ts) == pytest.approx(total / (2 * ts.n_samples), rel=1e-12)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            TrainingSet(np.zeros((0, 2)), np.zeros((0, 1)), ("a", "b"), np.zeros(2), np.ones(2))


class TestGradient:
    def test_zero_at_perfect_fit(self):
        net = nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), nn.Activation.PURELIN)])
        windows = np.array([[1.0, 2.0], [3.0, -1.0]])
        ts = TrainingSet(windows, windows.copy(), ("a", "b"), np.zeros(2), np.ones(2))
        assert np.allclose(loss_gradient(net, ts), 0.0, atol=1e-15)

    def test_matches_finite_differences(self):
        net = make_net([2, 3, 2], seed=3)
        ts = make_set(n=10, width=2, targets_width=2, seed=4)
        grad = loss_gradient(net, ts)
        theta = nn.flatten_params(net)
        step = 1e-6
        for j in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[j] += step
            down[j] -= step
            fd = (loss(nn.set_params(net, up), ts) - loss(nn.set_params(net, down), ts)) / (2 * step)
            assert grad[j] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_duplication_invariance(self):
        net = make_net([3, 4, 2], seed=5)
        ts = make_set(n=8, width=3, targets_width=2, seed=6)
        doubled = TrainingSet(np.vstack([ts.windows, ts.windows]),
                              np.vstack([ts.targets, ts.targets]),
                              ts.channel_names, ts.channel_mean, ts.channel_std)
        assert np.allclose(loss_gradient(net, ts), loss_gradient(net, doubled), atol=1e-14)


class TestNewtonStep:
    def test_linear_least_squares_in_one_step(self):
        # purelin single layer == linear regression; Gauss-Newton must land on
        # the normal-equation optimum in a single step
        rng = np.random.default_rng(7)
        windows = rng.normal(size=(30, 4))
        true_w = rng.normal(size=(2, 4))
        targets = windows @ true_w.T + rng.normal(size=(30, 2)) * 0.1
        ts = TrainingSet(windows, targets, tuple("abcd"), np.zeros(4), np.ones(4))
        net = nn.Mlp([nn.Layer(np.zeros((2, 4)), np.zeros(2), nn.Activation.PURELIN)])

        stepped = newton_step(net, ts)

        design = np.hstack([windows, np.ones((30, 1))])
        coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
        optimum = np.sum((design @ coef - targets) ** 2) / (2 * 30)
        assert loss(stepped, ts) == pytest.approx(optimum, rel=1e-9)


class TestLmStep:
    def test_accepted_step_never_increases_loss(self):
        net = make_net([3, 4, 2], seed=8)
        ts = make_set(n=15, width=3, targets_width=2, seed=9)
        before = loss(net, ts)
        stepped, damping, accepted = lm_step(net, ts, 1e-3)
        assert accepted
        assert loss(stepped, ts) < before
        assert damping > 0.0

    def test_large_damping_approaches_gradient_direction(self):
        net = make_net([3, 4, 2], seed=10)
        ts = make_set(n=15, width=3, targets_width=2, seed=11)
        grad = loss_gradient(net, ts)
        lam = 1e8
        stepped, _, accepted = lm_step(net, ts, lam, max_retries=0)
        delta = nn.flatten_params(stepped) - nn.flatten_params(net)
        expected = -grad / lam
        cos = delta @ expected / (np.linalg.norm(delta) * np.linalg.norm(expected))
        assert accepted
        assert cos > 0.999

    def test_rejection_returns_original_network(self):
        # inconsistent targets for the same input: the least-squares optimum
        # is nonzero and the gradient there vanishes -> every step rejected
        windows = np.array([[1.0, 0.0], [1.0, 0.0]])
        targets = np.array([[1.0], [-1.0]])
        ts = TrainingSet(windows, targets, ("a", "b"), np.zeros(2), np.ones(2))
        net = nn.Mlp([nn.Layer(np.zeros((1, 2)), np.zeros(1), nn.Activation.PURELIN)])
        stepped, damping, accepted = lm_step(net, ts, 1e-3, max_retries=5)
        assert not accepted
        assert stepped is net
        assert damping > 1e-3


class TestTrain:
    def test_goal_above_initial_loss_returns_immediately(self):
        net = make_net([3, 4, 2], seed=12)
        ts = make_set(n=10, width=3, targets_width=2, seed=13)
        config = TrainerConfig(loss_goal=1e9, max_epochs=50, shuffle_seed=1)
        trained, report = train(net, ts, config)
        assert report.converged
        assert report.epochs_used == 0
        assert report.loss_history == [loss(net, ts)]
        assert np.array_equal(nn.flatten_params(trained), nn.flatten_params(net))

    def test_identical_seeds_give_identical_reports(self):
        ts = make_set(n=20, width=3, targets_width=2, seed=14)
        config = TrainerConfig(loss_goal=1e-9, max_epochs=8, shuffle_seed=3)
        r1 = train(make_net([3, 4, 2], seed=15), ts, config)[1]
        r2 = train(make_net([3, 4, 2], seed=15), ts, config)[1]
        assert r1.loss_history == r2.loss_history

    def test_lm_history_is_monotone_non_increasing(self):
        ts = make_set(n=25, width=4, targets_width=3, seed=16)
        config = TrainerConfig(loss_goal=1e-12, max_epochs=25, shuffle_seed=4)
        _, report = train(make_net([4, 5, 3], seed=17), ts, config)
        hist = report.loss_history
        assert all(b <= a for a, b in zip(hist, hist[1:]))

    def test_stall_at_unreachable_goal(self):
        # inconsistent targets: optimum loss is 0.5, goal far below it
        windows = np.array([[1.0, 0.0], [1.0, 0.0]])
        targets = np.array([[1.0], [-1.0]])
        ts = TrainingSet(windows, targets, ("a", "b"), np.zeros(2), np.ones(2))
        net = nn.Mlp([nn.Layer(np.zeros((1, 2)), np.zeros(1), nn.Activation.PURELIN)])
        config = TrainerConfig(loss_goal=1e-6, max_epochs=50, shuffle_seed=5,
                               lm_damping_max=1e6)
        _, report = train(net, ts, config)
        assert not report.converged
        assert report.stalled
        assert report.final_loss == pytest.approx(0.5)

    def test_gradient_descent_decreases_loss_with_backoff(self):
        ts = make_set(n=20, width=3, targets_width=2, seed=18)
        net = make_net([3, 4, 2], seed=19)
        initial = loss(net, ts)
        lr = 1.0
        for _ in range(20):
            stepped = gradient_step(net, ts, lr)
            if loss(stepped, ts) < initial:
                break
            lr *= 0.5
        else:
            pytest.fail("no learning rate in the backoff range decreased the loss")

    def test_gradient_loop_converges_on_easy_problem(self):
        rng = np.random.default_rng(20)
        windows = rng.normal(size=(40, 2))
        targets = windows @ np.array([[0.5, -0.2]]).T
        ts = TrainingSet(windows, targets, ("a", "b"), np.zeros(2), np.ones(2))
        net = nn.Mlp([nn.Layer(np.zeros((1, 2)), np.zeros(1), nn.Activation.PURELIN)])
        config = TrainerConfig(algorithm="gradient", learning_rate=0.5,
                               loss_goal=1e-10, max_epochs=4000, shuffle_seed=6)
        _, report = train(net, ts, config)
        assert report.converged

    def test_shuffle_is_a_permutation_each_epoch(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            perm = rng.permutation(17)
            assert np.array_equal(np.sort(perm), np.arange(17))

    def test_non_finite_loss_aborts_with_epoch(self):
        # purelin network (no saturation): a huge learning rate squares the
        # loss every epoch until it overflows to inf
        ts = make_set(n=10, width=3, targets_width=2, seed=21)
        net = nn.Mlp([nn.Layer(np.zeros((2, 3)), np.zeros(2), nn.Activation.PURELIN)])
        config = TrainerConfig(algorithm="gradient", learning_rate=1e12,
                               loss_goal=1e-12, max_epochs=60, shuffle_seed=7)
        with pytest.raises(TrainingAbortedError):
            train(net, ts, config)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainerConfig(algorithm="adam")
        with pytest.raises(ValueError):
            TrainerConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainerConfig(lm_damping_up=0.5)
        with pytest.raises(ValueError):
            TrainerConfig(lm_damping_down=1.5)
        with pytest.raises(ValueError):
            TrainerConfig(loss_goal=0.0)
        with pytest.raises(ValueError):
            TrainerConfig(max_epochs=0)

    def test_report_csv_layout(self, tmp_path):
        ts = make_set(n=10, width=3, targets_width=2, seed=23)
        config = TrainerConfig(loss_goal=1e-12, max_epochs=3, shuffle_seed=8)
        _, report = train(make_net([3, 4, 2], seed=24), ts, config)
        path = tmp_path / "report.csv"
        save_report_csv(path, report)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,loss"
        assert lines[1].startswith("0,")
        assert len(lines) == len(report.loss_history) + 1
