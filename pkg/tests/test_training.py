import math
from dataclasses import replace

import numpy as np
import pytest

from data.augment import AugmentFlags
from data.dataset import LabeledDataset
from netcore.model import batchnorm, build_model, dense, flatten, forward, init_xavier_uniform, relu, softmax
from stable.density import StableParams
from stable.table import build_table, closed_form_table
from training.grid import (ABLATION_VARIANTS, GRID_COLUMNS, log_spaced_cs, run_ablation, run_delta_sweep,
                           run_experiment_grid)
from training.priors import LaplacePrior
from training.schedule import learning_rate, step_fraction, validate_schedule
from training.trainer import (MomentumAscent, TrainConfig, add_prior_gradient, classification_scores, evaluate,
                              train)
from utils.exceptions import DegenerateDensity, InvalidParameter, NonFiniteGradient, TableDomainWarning

CAUCHY = StableParams(alpha=1.0)


@pytest.fixture
def cauchy_table():
    return closed_form_table(CAUCHY, 0.8, 400)


@pytest.fixture
def fast_config():
    return TrainConfig(epochs=1, batch_size=20)


def _single_weight_problem(theta0, n=1):
    """Un solo peso e una sola classe: il gradiente di verosimiglianza è esattamente zero"""
    model = build_model([flatten(), dense(1), softmax()], (1, 1, 1))
    model.params['1.weight'][0, 0] = theta0
    dataset = LabeledDataset(np.ones((n, 1, 1, 1)), np.zeros(n, dtype=int), 1)
    return model, dataset


class TestSchedule:
    def test_two_knots(self):
        knots = validate_schedule([(0.0, 0.05), (1.0, 0.005)])
        assert learning_rate(knots, 0, 10) == 0.05
        assert learning_rate(knots, 9, 10) == 0.005
        assert learning_rate(knots, 3, 10) == pytest.approx(0.035, abs=1e-15)

    def test_three_knots(self):
        knots = validate_schedule([(0.0, 0.1), (0.5, 0.2), (1.0, 0.1)])
        rates = [learning_rate(knots, s, 5) for s in range(5)]
        assert rates == pytest.approx([0.1, 0.15, 0.2, 0.15, 0.1], abs=1e-15)

    def test_single_step_uses_first_knot(self):
        assert step_fraction(0, 1) == 0.0
        assert learning_rate(validate_schedule([(0, 0.3), (1, 0.1)]), 0, 1) == 0.3

    @pytest.mark.parametrize('knots', [
        [(0.0, 0.1)],
        [(0.1, 0.1), (1.0, 0.1)],
        [(0.0, 0.1), (0.9, 0.1)],
        [(0.0, 0.1), (0.5, 0.1), (0.5, 0.2), (1.0, 0.1)],
        [(0.0, 0.1), (1.0, 0.0)],
    ])
    def test_rejects_bad_knots(self, knots):
        with pytest.raises(InvalidParameter):
            validate_schedule(knots)

    def test_realized_rates_follow_the_knots(self, tiny_mlp, tiny_splits):
        train_set, _ = tiny_splits
        config = TrainConfig(epochs=2, batch_size=20, lr_schedule=((0.0, 0.04), (0.4, 0.02), (1.0, 0.01)))
        report = train(tiny_mlp, train_set, None, config)
        assert len(report.learning_rates) == 6
        expected = np.interp(np.arange(6) / 5.0, [0.0, 0.4, 1.0], [0.04, 0.02, 0.01])
        assert report.learning_rates == pytest.approx(expected.tolist(), abs=1e-15)


class TestMomentumAscent:
    def test_matches_hand_unrolled_recursion(self, rng):
        m, tau = 0.9, 0.2
        gradients = [rng.normal(size=3) for _ in range(10)]
        rates = [0.1 / (t + 1) for t in range(10)]
        params = {'w': np.array([0.5, -1.0, 2.0])}
        optimizer = MomentumAscent(m, tau)

        theta = params['w'].copy()
        beta = None
        for t, (g, lr) in enumerate(zip(gradients, rates)):
            optimizer.step(params, {'w': g}, lr)
            if t == 0:
                theta = theta + lr * g
                beta = g.copy()
            else:
                beta = m * beta + (1.0 - tau) * g
                theta = theta + lr * beta
            assert np.array_equal(params['w'], theta)
            assert np.array_equal(optimizer.buffers['w'], beta)

    def test_heavy_ball_grows_linearly(self):
        optimizer = MomentumAscent(1.0, 0.0)
        params = {'w': np.zeros(1)}
        g = np.array([0.25])
        for t in range(1, 8):
            optimizer.step(params, {'w': g}, 1.0)
            assert optimizer.buffers['w'][0] == t * 0.25
        assert params['w'][0] == 0.25 * sum(range(1, 8))

    def test_first_step_ignores_the_buffer(self):
        optimizer = MomentumAscent(0.5, 0.9)
        params = {'w': np.ones(2)}
        optimizer.step(params, {'w': np.array([1.0, -2.0])}, 0.1)
        assert params['w'] == pytest.approx([1.1, 0.8], abs=1e-15)


class TestPrior:
    @pytest.mark.parametrize('alpha', [2.0, 1.5, 1.0, 0.5])
    def test_table_pulls_towards_zero(self, alpha):
        table = build_table(StableParams(alpha=alpha), 0.8, 40)
        thetas = np.array([-2.0, -0.75, -0.3, -0.05, 0.05, 0.3, 0.75, 2.0])
        assert np.all(np.sign(table.with_scale(0.5).grad(thetas)) == -np.sign(thetas))

    def test_laplace_pulls_towards_zero(self):
        prior = LaplacePrior(gamma=0.5, prior_scale_c=2.0)
        thetas = np.array([-1.0, -1e-9, 0.0, 3.0])
        assert prior.grad(thetas).tolist() == [4.0, 4.0, 0.0, -4.0]
        assert prior.saturated(thetas) == 0
        assert prior.with_scale(1.0).grad(np.array([1.0]))[0] == -2.0

    def test_laplace_validation(self):
        with pytest.raises(InvalidParameter):
            LaplacePrior(gamma=0.0)

    @pytest.mark.parametrize('prior', [
        closed_form_table(StableParams(alpha=2.0), 0.8, 40),
        closed_form_table(CAUCHY, 0.8, 40),
        LaplacePrior(gamma=1.0),
    ])
    def test_every_step_moves_towards_zero(self, prior):
        model, dataset = _single_weight_problem(0.5, n=5)
        config = TrainConfig(prior_scale_c=0.5, epochs=1, batch_size=1, lr_schedule=((0, 0.01), (1, 0.01)))
        report = train(model, dataset, prior, config)
        assert 0.0 < report.model.params['1.weight'][0, 0] < 0.5
        negative, _ = _single_weight_problem(-0.5, n=5)
        assert -0.5 < train(negative, dataset, prior, config).model.params['1.weight'][0, 0] < 0.0

    def test_cauchy_first_step(self):
        model, dataset = _single_weight_problem(0.5)
        config = TrainConfig(prior_scale_c=1.0, epochs=1, batch_size=1, lr_schedule=((0, 0.1), (1, 0.1)))
        report = train(model, dataset, build_table(CAUCHY, 0.8, 400), config)
        assert report.model.params['1.weight'][0, 0] == pytest.approx(0.42, abs=5e-4)
        assert report.model.params['1.bias'][0] == 0.0

    def test_training_trajectory_matches_unrolled_recursion(self):
        model, dataset = _single_weight_problem(0.5, n=10)
        knots = ((0.0, 0.1), (1.0, 0.01))
        config = TrainConfig(prior_scale_c=0.01, momentum_m=0.8, dampening_tau=0.1, epochs=1, batch_size=1,
                             lr_schedule=knots)
        report = train(model, dataset, LaplacePrior(gamma=1.0), config)

        g = -0.01
        theta = np.array([0.5])
        beta = None
        for t in range(10):
            lr = learning_rate(knots, t, 10)
            if t == 0:
                theta = theta + lr * g
                beta = np.array([g])
            else:
                beta = 0.8 * beta + (1.0 - 0.1) * g
                theta = theta + lr * beta
        assert report.model.params['1.weight'][0, 0] == theta[0]

    def test_add_prior_gradient_touches_weights_only(self, tiny_mlp, cauchy_table):
        grads = {k: np.zeros_like(v) for k, v in tiny_mlp.params.items()}
        saturated = add_prior_gradient(grads, tiny_mlp, cauchy_table.with_scale(1.0))
        assert saturated == cauchy_table.saturated(tiny_mlp.masked_weights())
        for name in tiny_mlp.params:
            if name.endswith('.bias'):
                assert np.all(grads[name] == 0.0)
            else:
                assert np.array_equal(grads[name], cauchy_table.grad(tiny_mlp.params[name]))


class TestTrain:
    def test_zero_scale_equals_no_prior(self, tiny_mlp, tiny_splits, cauchy_table, fast_config):
        train_set, test_set = tiny_splits
        baseline = train(tiny_mlp, train_set, None, fast_config, test_set)
        with_table = train(tiny_mlp, train_set, cauchy_table, replace(fast_config, prior_scale_c=0.0), test_set)
        for name in baseline.model.params:
            assert np.array_equal(baseline.model.params[name], with_table.model.params[name])
        regularized = train(tiny_mlp, train_set, cauchy_table, replace(fast_config, prior_scale_c=0.5))
        assert not np.array_equal(regularized.model.params['1.weight'], baseline.model.params['1.weight'])

    def test_report(self, tiny_mlp, tiny_splits, cauchy_table):
        train_set, test_set = tiny_splits
        config = TrainConfig(prior_scale_c=0.1, epochs=2, batch_size=16, seed=4)
        report = train(tiny_mlp, train_set, cauchy_table, config, test_set)
        assert [e.epoch for e in report.epochs] == [0, 1]
        assert report.seed == 4
        assert report.wall_clock >= 0.0
        assert len(report.learning_rates) == 2 * math.ceil(60 / 16)
        for stats in report.epochs:
            assert 0.0 <= stats.train_accuracy <= 1.0
            assert 0.0 <= stats.test_accuracy <= 1.0
            assert stats.test_log_likelihood <= 0.0
        assert report.final is report.epochs[-1]

    def test_input_model_is_untouched(self, tiny_mlp, tiny_splits, fast_config):
        before = tiny_mlp.params['1.weight'].copy()
        train(tiny_mlp, tiny_splits[0], None, fast_config)
        assert np.array_equal(tiny_mlp.params['1.weight'], before)

    def test_without_test_set_metrics_are_nan(self, tiny_mlp, tiny_splits, fast_config):
        report = train(tiny_mlp, tiny_splits[0], None, fast_config)
        assert math.isnan(report.final.test_accuracy)

    def test_reproducible_with_every_regularizer(self, tiny_splits, cauchy_table):
        train_set, _ = tiny_splits
        model = init_xavier_uniform(
            build_model([flatten(), dense(8), batchnorm(), relu(), dense(3), softmax()], (1, 4, 4)), seed=1)
        config = TrainConfig(prior_scale_c=0.1, epochs=2, batch_size=16, dropout_rate=0.3,
                             augment=AugmentFlags(flip=True, cutout=True, cutout_size=2, channel_norm=True))
        a = train(model, train_set, cauchy_table, config)
        b = train(model, train_set, cauchy_table, config)
        for name in a.model.params:
            assert np.array_equal(a.model.params[name], b.model.params[name])
        for name in a.model.state:
            assert np.array_equal(a.model.state[name], b.model.state[name])

    def test_saturation_warning(self, tiny_mlp, tiny_splits, fast_config):
        narrow = closed_form_table(CAUCHY, 1e-3, 2)
        with pytest.warns(TableDomainWarning):
            report = train(tiny_mlp, tiny_splits[0], narrow, replace(fast_config, prior_scale_c=0.01))
        assert report.final.saturation > 0.5

    def test_non_finite_gradient_aborts(self, tiny_mlp, tiny_splits, fast_config):
        broken = tiny_mlp.copy()
        broken.params['1.weight'][0, 0] = np.nan
        with pytest.raises(NonFiniteGradient) as info:
            train(broken, tiny_splits[0], None, fast_config)
        assert info.value.step == 0

    @pytest.mark.parametrize('kwargs', [
        dict(prior_scale_c=-1.0), dict(momentum_m=0.0), dict(momentum_m=1.5), dict(dampening_tau=1.0),
        dict(epochs=0), dict(batch_size=0), dict(dropout_rate=1.0), dict(lr_schedule=((0, 0.1), (0.5, 0.1))),
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(InvalidParameter):
            TrainConfig(**kwargs)


class TestEvaluate:
    def test_uniform_model(self, tiny_splits):
        _, test_set = tiny_splits
        model = build_model([flatten(), dense(3), softmax()], test_set.input_shape)
        result = evaluate(model, test_set)
        assert result.accuracy == pytest.approx(1.0 / 3.0)
        assert result.mean_log_likelihood == pytest.approx(-math.log(3.0))

    def test_perfect_scores(self):
        labels = np.array([0, 2, 1, 2])
        log_probs = np.full((4, 3), -1e9)
        log_probs[np.arange(4), labels] = 0.0
        result = classification_scores(log_probs, labels)
        assert result.accuracy == 1.0
        assert result.mean_log_likelihood == 0.0

    def test_deterministic_and_batch_independent(self, tiny_mlp, tiny_splits):
        _, test_set = tiny_splits
        assert evaluate(tiny_mlp, test_set) == evaluate(tiny_mlp, test_set)
        small = evaluate(tiny_mlp, test_set, batch_size=7)
        assert small.accuracy == evaluate(tiny_mlp, test_set).accuracy
        assert small.mean_log_likelihood == pytest.approx(evaluate(tiny_mlp, test_set).mean_log_likelihood)

    def test_eval_does_not_touch_running_stats(self, tiny_splits):
        _, test_set = tiny_splits
        model = build_model([flatten(), dense(4), batchnorm(), relu(), dense(3), softmax()], test_set.input_shape)
        before = {k: v.copy() for k, v in model.state.items()}
        evaluate(model, test_set)
        assert all(np.array_equal(model.state[k], before[k]) for k in before)


class TestGrid:
    def test_single_cell_equals_direct_call(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits
        rows = run_experiment_grid(tiny_mlp, train_set, test_set, fast_config, [1.0], [1.0], [0.1], [0],
                                   0.8, 400, table_builder=closed_form_table)
        assert len(rows) == 1
        row = rows[0]
        assert (row.prior, row.alpha, row.gamma, row.c, row.seed, row.status) == ('sas', 1.0, 1.0, 0.1, '0', 'ok')

        direct = train(init_xavier_uniform(tiny_mlp, 0), train_set, closed_form_table(CAUCHY, 0.8, 400),
                       replace(fast_config, prior_scale_c=0.1, seed=0), test_set)
        scores = evaluate(direct.model, test_set)
        assert row.test_accuracy == scores.accuracy
        assert row.test_log_likelihood == scores.mean_log_likelihood
        assert row.train_accuracy == direct.final.train_accuracy
        assert 0.0 <= row.sparsity <= 1.0

    def test_two_seeds_add_a_mean_row(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits
        rows = run_experiment_grid(tiny_mlp, train_set, test_set, fast_config, [1.0], [1.0], [0.1], [0, 1],
                                   0.8, 400, table_builder=closed_form_table)
        assert [r.seed for r in rows] == ['0', '1', 'mean']
        assert rows[2].test_accuracy == pytest.approx((rows[0].test_accuracy + rows[1].test_accuracy) / 2.0)

    def test_gaussian_cell_matches_closed_form_run(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits
        rows = run_experiment_grid(tiny_mlp, train_set, test_set, fast_config, [], [0.5], [0.2], [3],
                                   0.8, 100, table_builder=closed_form_table, include_gaussian=True)
        assert len(rows) == 1 and rows[0].alpha == 2.0
        direct = train(init_xavier_uniform(tiny_mlp, 3), train_set,
                       closed_form_table(StableParams(alpha=2.0, gamma=0.5), 0.8, 100),
                       replace(fast_config, prior_scale_c=0.2, seed=3), test_set)
        assert rows[0].test_log_likelihood == evaluate(direct.model, test_set).mean_log_likelihood

    def test_laplace_rows(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits
        rows = run_experiment_grid(tiny_mlp, train_set, test_set, fast_config, [1.0], [0.5, 1.0], [0.1], [0],
                                   0.8, 50, table_builder=closed_form_table, include_laplace=True)
        assert [r.prior for r in rows] == ['sas', 'sas', 'laplace', 'laplace']
        assert all(math.isnan(r.alpha) for r in rows[2:])
        assert all(r.status == 'ok' for r in rows)

    def test_failing_cell_is_recorded(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits

        def builder(params, epsilon, n_grid):
            if params.alpha == 2.0:
                raise DegenerateDensity("underflow")
            return closed_form_table(params, epsilon, n_grid)

        rows = run_experiment_grid(tiny_mlp, train_set, test_set, fast_config, [2.0, 1.0], [1.0], [0.1], [0],
                                   0.8, 50, table_builder=builder)
        assert len(rows) == 2
        assert rows[0].status.startswith('failed: DegenerateDensity')
        assert math.isnan(rows[0].test_accuracy)
        assert rows[1].status == 'ok'

    def test_columns(self):
        assert GRID_COLUMNS[:5] == ('prior', 'alpha', 'gamma', 'c', 'seed')
        assert GRID_COLUMNS[-1] == 'status'

    def test_log_spaced_cs(self):
        cs = log_spaced_cs()
        assert len(cs) == 15
        assert cs[0] == pytest.approx(1e-4) and cs[-1] == pytest.approx(100.0)
        assert all(b > a for a, b in zip(cs, cs[1:]))

    def test_delta_sweep(self, tiny_mlp, tiny_splits, fast_config):
        train_set, test_set = tiny_splits
        rows = run_delta_sweep(tiny_mlp, train_set, test_set, replace(fast_config, prior_scale_c=0.1), CAUCHY,
                               0.8, [10, 20], [0, 1], table_builder=closed_form_table)
        assert [(r.n_grid, r.seed) for r in rows] == [(10, 0), (10, 1), (20, 0), (20, 1)]
        assert rows[0].delta == pytest.approx(0.08) and rows[2].delta == pytest.approx(0.04)
        assert all(r.status == 'ok' for r in rows)

    def test_ablation(self, tiny_splits, fast_config):
        train_set, test_set = tiny_splits

        def factory(with_bn):
            middle = [batchnorm()] if with_bn else []
            return build_model([flatten(), dense(8), *middle, relu(), dense(3), softmax()], (1, 4, 4))

        rows = run_ablation(factory, train_set, test_set, replace(fast_config, prior_scale_c=0.1),
                            closed_form_table(CAUCHY, 0.8, 50), [20], [0])
        assert len(rows) == len(ABLATION_VARIANTS) * 2
        assert {r.variant for r in rows} == set(ABLATION_VARIANTS)
        assert all(r.status == 'ok' for r in rows)
        plain = [r for r in rows if r.variant == 'plain']
        assert [r.with_prior for r in plain] == [False, True]


def test_forward_after_training_is_a_distribution(tiny_mlp, tiny_splits, cauchy_table):
    train_set, test_set = tiny_splits
    report = train(tiny_mlp, train_set, cauchy_table, TrainConfig(prior_scale_c=0.1, epochs=1, batch_size=10))
    probs = forward(report.model, np.asarray(test_set.images)).probs
    assert np.allclose(probs.sum(axis=1), 1.0)
