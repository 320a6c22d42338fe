import json
import os
from types import SimpleNamespace

import numpy as np

from mixmode import InvalidArgument, FormatVersionError
from mixmode.datasets import Dataset, gen_inverse_sine
from mixmode.gmm import GaussianComponent, Mixture, STD_FLOOR, log_pdf
from mixmode.mdn import (MdnConfig, MdnModel, AdamState, forward, forward_batch, predict_mean,
                         nll, batch_nll, grad, adam_step, train, save_checkpoint,
                         load_checkpoint, checkpoint_to_dict, checkpoint_from_dict)

from .base import MixmodeBaseTest, slow_test


def small_model(rng, input_dim=None, output_dim=None, k=None):
    """
    A randomly parametrized small network, biases included
    """
    config = MdnConfig(
        input_dim=input_dim or int(rng.integers(1, 4)),
        output_dim=output_dim or int(rng.integers(1, 3)),
        n_components=k or int(rng.integers(1, 5)),
        hidden_widths=tuple(int(w) for w in rng.integers(2, 9, size=int(rng.integers(1, 4)))),
    )
    model = MdnModel.initialize(config, rng)
    for name, value in model.params.items():
        model.params[name] = rng.normal(0.0, 0.5, size=value.shape)
    return model


class MdnConfigTests(MixmodeBaseTest):

    def test_defaults(self):
        config = MdnConfig()
        self.assertEqual(config.n_components, 5)
        self.assertEqual(config.hidden_widths, (64, 64, 64))
        self.assertEqual(config.learning_rate, 1e-3)
        self.assertEqual(config.batch_size, 100)
        self.assertEqual(config.min_std, STD_FLOOR)

    def test_invalid_configs(self):
        for kwargs in ({'n_components': 0}, {'hidden_widths': ()}, {'learning_rate': 0},
                       {'batch_size': 0}, {'hidden_widths': (4, 0)}, {'min_std': 0.0}):
            with self.assertRaises(InvalidArgument):
                MdnConfig(**kwargs)

    def test_dict(self):
        config = MdnConfig(input_dim=13, output_dim=8, hidden_widths=[32, 16])
        self.assertEqual(MdnConfig.from_dict(json.loads(json.dumps(config.to_dict()))), config)
        with self.assertRaises(InvalidArgument):
            MdnConfig.from_dict({'layers': 3})


class ForwardTests(MixmodeBaseTest):

    def test_fresh_model_gives_valid_mixtures(self):
        model = MdnModel.initialize(MdnConfig(input_dim=2, output_dim=3, n_components=4))
        for x in ([0.0, 0.0], [5.0, -3.0], [1e3, 1e3]):
            m = forward(model, x)
            self.assertIsInstance(m, Mixture)
            self.assertEqual((m.k, m.dim), (4, 3))
            self.assertAlmostEqual(m.weights.sum(), 1.0, delta=1e-9)
            self.assertTrue(np.all(m.stds >= STD_FLOOR))

    def test_sigma_transform(self):
        model = MdnModel.initialize(MdnConfig(n_components=2, hidden_widths=(4, )))
        model.params['sigma.weight'][:] = 0.0
        model.params['sigma.bias'][:] = [0.0, -40.0]
        _, _, stds = forward_batch(model, [[0.3]])
        self.assertEqual(stds[0, 0, 0], 1.0 + 1e-7)
        self.assertTrue(np.isfinite(stds[0, 1, 0]))
        self.assertGreater(stds[0, 1, 0], 0.0)
        self.assertAlmostEqual(stds[0, 1, 0], 1e-7, delta=1e-12)

    def test_min_std(self):
        model = MdnModel.initialize(MdnConfig(n_components=2, hidden_widths=(4, ), min_std=0.05))
        model.params['sigma.weight'][:] = 0.0
        model.params['sigma.bias'][:] = [0.0, -40.0]
        _, _, stds = forward_batch(model, [[0.3], [-2.0]])
        self.assertArrayAlmostEqual(stds[:, :, 0], [[1.05, 0.05], [1.05, 0.05]])
        self.assertGreaterEqual(forward(model, [7.0]).stds.min(), 0.05)

    def test_relu_hidden_layers(self):
        model = MdnModel.initialize(MdnConfig(n_components=1, hidden_widths=(1, )))
        model.params['hidden.0.weight'][:] = 1.0
        model.params['hidden.0.bias'][:] = 0.0
        model.params['mu.weight'][:] = 1.0
        model.params['mu.bias'][:] = 0.5
        self.assertArrayAlmostEqual(forward(model, [-2.0]).means, [[0.5]])
        self.assertArrayAlmostEqual(forward(model, [3.0]).means, [[3.5]])

    def test_mu_biases_differ_by_dimension(self):
        model = MdnModel.initialize(MdnConfig(output_dim=2, n_components=3, hidden_widths=(4, )))
        biases = model.params['mu.bias'].reshape(3, 2)
        self.assertFalse(np.allclose(biases[:, 0], biases[:, 1]))
        self.assertTrue(np.all(np.abs(biases) <= 1.0))
        self.assertEqual(len(set(biases[:, 0])), 3)

        single = MdnModel.initialize(MdnConfig(output_dim=2, n_components=1, hidden_widths=(4, )))
        self.assertArrayAlmostEqual(single.params['mu.bias'], [0.0, 0.0])

    def test_extreme_pre_activations(self):
        rng = np.random.default_rng(0)
        for bias in (-50.0, 50.0):
            model = small_model(rng, k=3)
            for head in ('pi', 'mu', 'sigma'):
                model.params['%s.bias' % head][:] = bias
                model.params['%s.bias' % head][0] = -bias
            m = forward(model, rng.normal(size=model.config.input_dim))
            self.assertAlmostEqual(m.weights.sum(), 1.0, delta=1e-9)
            self.assertTrue(np.all(np.isfinite(m.stds)) and np.all(m.stds > 0))

    def test_non_finite_inputs(self):
        model = MdnModel.initialize(MdnConfig(hidden_widths=(4, )))
        with self.assertRaises(InvalidArgument):
            forward(model, [np.nan])
        with self.assertRaises(InvalidArgument):
            forward(model, [1.0, 2.0])
        with self.assertRaises(InvalidArgument):
            forward_batch(model, [[np.inf]])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        model = small_model(rng, input_dim=2)
        X = rng.normal(size=(5, 2))
        weights, means, stds = forward_batch(model, X)
        for index, x in enumerate(X):
            m = forward(model, x)
            self.assertArrayAlmostEqual(m.weights, weights[index])
            self.assertArrayAlmostEqual(m.means, means[index])
        self.assertArrayAlmostEqual(predict_mean(model, X),
                                    np.sum(weights[:, :, None] * means, axis=1))


class NllTests(MixmodeBaseTest):

    def test_examples(self):
        self.assertAlmostEqual(nll(Mixture.single([0.0], [1.0]), [0.0]), 0.918939, places=6)
        duplicated = Mixture([0.5, 0.5], [GaussianComponent([0.0], [1.0])] * 2)
        self.assertAlmostEqual(nll(duplicated, [0.7]), nll(Mixture.single([0.0], [1.0]), [0.7]),
                               places=12)

    def test_is_minus_log_pdf(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            k = int(rng.integers(1, 5))
            m = Mixture.from_arrays(rng.dirichlet(np.ones(k)), rng.normal(size=(k, 2)),
                                    rng.uniform(0.1, 2, (k, 2)))
            y = rng.normal(size=2)
            self.assertEqual(nll(m, y), -log_pdf(m, y))

    def test_batch_nll_matches_forward(self):
        rng = np.random.default_rng(3)
        model = small_model(rng, input_dim=1, output_dim=1)
        X, Y = rng.normal(size=(6, 1)), rng.normal(size=(6, 1))
        expected = np.mean([nll(forward(model, x), y) for x, y in zip(X, Y)])
        self.assertAlmostEqual(batch_nll(model, X, Y), expected, places=10)


class GradTests(MixmodeBaseTest):

    def assertGradientMatches(self, model, X, Y, name, index, step=1e-5):
        _, grads = grad(model, X, Y)
        analytic = grads[name][index]
        original = model.params[name][index]
        model.params[name][index] = original + step
        plus = batch_nll(model, X, Y)
        model.params[name][index] = original - step
        minus = batch_nll(model, X, Y)
        model.params[name][index] = original
        numeric = (plus - minus) / (2 * step)
        scale = max(abs(analytic), abs(numeric))
        self.assertLessEqual(abs(analytic - numeric), 1e-4 * scale + 1e-8,
                             '%s%s: analytic %r, numeric %r' % (name, index, analytic, numeric))

    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            model = small_model(rng)
            n = int(rng.integers(1, 6))
            X = rng.normal(size=(n, model.config.input_dim))
            Y = rng.normal(size=(n, model.config.output_dim))
            for name in model.params:
                shape = model.params[name].shape
                index = tuple(int(rng.integers(size)) for size in shape)
                self.assertGradientMatches(model, X, Y, name, index)

    def test_loss_is_the_batch_nll(self):
        rng = np.random.default_rng(5)
        model = small_model(rng)
        X = rng.normal(size=(4, model.config.input_dim))
        Y = rng.normal(size=(4, model.config.output_dim))
        loss, grads = grad(model, X, Y)
        self.assertEqual(loss, batch_nll(model, X, Y))
        self.assertEqual(set(grads), set(model.params))
        for name, value in grads.items():
            self.assertEqual(value.shape, model.params[name].shape)

    def test_symmetric_components(self):
        config = MdnConfig(n_components=3, hidden_widths=(5, ))
        model = MdnModel.initialize(config, np.random.default_rng(6))
        for head in ('pi', 'mu', 'sigma'):
            model.params['%s.weight' % head][:] = model.params['%s.weight' % head][:, :1]
            model.params['%s.bias' % head][:] = 0.0
        X = np.linspace(-1, 1, 6)[:, None]
        Y = np.array([[-1.0], [1.0], [-2.0], [2.0], [-0.5], [0.5]])
        _, grads = grad(model, X, Y)
        self.assertArrayAlmostEqual(grads['pi.bias'], np.full(3, grads['pi.bias'][0]))
        for column in (1, 2):
            self.assertArrayAlmostEqual(grads['pi.weight'][:, column], grads['pi.weight'][:, 0])

    def test_duplicated_sample(self):
        rng = np.random.default_rng(7)
        model = small_model(rng)
        x = rng.normal(size=(1, model.config.input_dim))
        y = rng.normal(size=(1, model.config.output_dim))
        _, once = grad(model, x, y)
        _, twice = grad(model, np.repeat(x, 2, axis=0), np.repeat(y, 2, axis=0))
        for name in once:
            self.assertArrayAlmostEqual(once[name], twice[name], atol=1e-12)

    def test_empty_batch(self):
        model = MdnModel.initialize(MdnConfig(hidden_widths=(4, )))
        with self.assertRaises(InvalidArgument):
            grad(model, np.zeros((0, 1)), np.zeros((0, 1)))


class AdamTests(MixmodeBaseTest):

    def test_zero_gradient(self):
        params = {'w': np.array([1.0, -2.0])}
        new, state = adam_step(params, {'w': np.zeros(2)}, AdamState(), 0.01)
        self.assertTrue(np.array_equal(new['w'], params['w']))
        self.assertEqual(state.step, 1)

    def test_first_step(self):
        params = {'w': np.array([1.0, 1.0])}
        g = np.array([0.5, -2.0])
        new, state = adam_step(params, {'w': g}, AdamState(), 0.01)
        self.assertArrayAlmostEqual(new['w'], params['w'] - 0.01 * g / (np.abs(g) + 1e-8),
                                    atol=1e-15)
        self.assertArrayAlmostEqual(state.m['w'], 0.1 * g)
        self.assertArrayAlmostEqual(state.v['w'], 0.001 * g ** 2)
        # inputs are left untouched
        self.assertTrue(np.array_equal(params['w'], [1.0, 1.0]))

    def test_constant_gradient_moves_by_the_learning_rate(self):
        params, state = {'w': np.zeros(1)}, AdamState()
        for _ in range(200):
            before = params['w'][0]
            params, state = adam_step(params, {'w': np.array([3.0])}, state, 1e-3)
        self.assertAlmostEqual(before - params['w'][0], 1e-3, delta=1e-9)
        self.assertEqual(state.step, 200)

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidArgument):
            adam_step({'w': np.zeros(2)}, {'w': np.zeros(3)}, AdamState(), 0.01)


class TrainTests(MixmodeBaseTest):

    def test_recovers_a_gaussian(self):
        rng = np.random.default_rng(8)
        data = Dataset(np.zeros(2000), rng.normal(3.0, 2.0, 2000))
        config = MdnConfig(n_components=1, hidden_widths=(8, ), learning_rate=0.01, epochs=100,
                           seed=8)
        model, history = train(config, data)
        m = forward(model, [0.0])
        self.assertAlmostEqual(m.means[0, 0], data.targets.mean(), delta=0.1)
        self.assertAlmostEqual(m.stds[0, 0], data.targets.std(), delta=0.1)
        self.assertEqual(len(history.epoch_nll), 100)
        self.assertEqual(history.final_nll, history.epoch_nll[-1])
        self.assertLess(history.epoch_nll[-1], history.epoch_nll[0])

    def test_deterministic(self):
        data = gen_inverse_sine(300, seed=1)
        config = MdnConfig(hidden_widths=(8, 8), epochs=3, seed=4)
        first_model, first = train(config, data)
        second_model, second = train(config, data)
        self.assertEqual(first.epoch_nll, second.epoch_nll)
        for name in first_model.params:
            self.assertTrue(np.array_equal(first_model.params[name], second_model.params[name]))
        _, other = train(MdnConfig(hidden_widths=(8, 8), epochs=3, seed=5), data)
        self.assertNotEqual(first.epoch_nll, other.epoch_nll)

    def test_finite_loss_on_inverse_sine(self):
        data = gen_inverse_sine(500, seed=0)
        for seed in range(5):
            _, history = train(MdnConfig(hidden_widths=(16, 16, 16), epochs=10, seed=seed), data)
            self.assertTrue(np.all(np.isfinite(history.epoch_nll)))

    def test_zero_epochs(self):
        data = gen_inverse_sine(50, seed=0)
        model, history = train(MdnConfig(hidden_widths=(4, ), epochs=0), data)
        self.assertEqual(history.epoch_nll, [])
        self.assertEqual(history.final_nll, batch_nll(model, data.inputs, data.targets))

    def test_history_csv(self):
        data = gen_inverse_sine(50, seed=0)
        _, history = train(MdnConfig(hidden_widths=(4, ), epochs=1), data)
        filename = os.path.join(self.make_directory(), 'history.csv')
        history.to_csv(filename)
        lines = self.read_file(filename).splitlines()
        self.assertEqual(lines[0], 'epoch,nll')
        self.assertEqual(len(lines), 2)
        self.assertTrue(lines[1].startswith('1,'))

    def test_invalid_data(self):
        with self.assertRaises(InvalidArgument):
            train(MdnConfig(), SimpleNamespace(inputs=np.zeros((0, 1)), targets=np.zeros((0, 1))))
        with self.assertRaises(InvalidArgument):
            train(MdnConfig(input_dim=2), gen_inverse_sine(10))

    @slow_test
    def test_inverse_sine_beats_a_single_gaussian(self):
        data = gen_inverse_sine(3000, seed=0)
        _, history = train(MdnConfig(n_components=5, epochs=1000, seed=0), data)
        # best single gaussian ignoring the inputs
        single = Mixture.single(data.targets.mean(axis=0), data.targets.std(axis=0))
        baseline = -np.mean(log_pdf(single, data.targets))
        self.assertLess(history.final_nll, baseline)


class CheckpointTests(MixmodeBaseTest):

    def setUp(self):
        super(CheckpointTests, self).setUp()
        self.model = small_model(np.random.default_rng(9), input_dim=2, output_dim=2, k=3)
        self.model.input_shift = np.array([0.5, -1.0])
        self.model.input_scale = np.array([2.0, 3.0])
        self.filename = os.path.join(self.make_directory(), 'checkpoint.json')

    def test_round_trip(self):
        save_checkpoint(self.model, self.filename)
        loaded = load_checkpoint(self.filename)
        self.assertEqual(loaded.config, self.model.config)
        for name, value in self.model.params.items():
            self.assertTrue(np.array_equal(loaded.params[name], value))
        x = np.array([0.3, 0.1])
        self.assertEqual(nll(forward(loaded, x), [0.0, 1.0]), nll(forward(self.model, x),
                                                                  [0.0, 1.0]))

    def test_min_std_is_kept(self):
        model = MdnModel.initialize(MdnConfig(hidden_widths=(4, ), min_std=0.2))
        save_checkpoint(model, self.filename)
        loaded = load_checkpoint(self.filename)
        self.assertEqual(loaded.config.min_std, 0.2)
        self.assertArrayAlmostEqual(forward(loaded, [1.0]).stds, forward(model, [1.0]).stds)

    def test_layout(self):
        data = checkpoint_to_dict(self.model)
        self.assertEqual(data['kind'], 'mdn-checkpoint')
        self.assertEqual(data['format_version'], 1)
        self.assertEqual(data['layer_order'], MdnModel.parameter_names(self.model.config))
        self.assertEqual(data['layer_order'][-2:], ['sigma.weight', 'sigma.bias'])

    def test_version_mismatch(self):
        data = checkpoint_to_dict(self.model)
        data['format_version'] = 99
        with self.assertRaises(FormatVersionError):
            checkpoint_from_dict(data)
        with self.assertRaises(FormatVersionError):
            checkpoint_from_dict({'format_version': 1})

        data = checkpoint_to_dict(self.model)
        data['parameters']['pi.bias']['shape'] = [7]
        with self.assertRaises(FormatVersionError):
            checkpoint_from_dict(data)

    def test_invalid_file(self):
        with open(self.filename, 'w') as f:
            f.write('{not json')
        with self.assertRaises(FormatVersionError):
            load_checkpoint(self.filename)
