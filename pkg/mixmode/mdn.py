"""
A feed-forward mixture density network, in plain numpy.

Dense ReLU hidden layers feed three heads:
- pi: k logits, turned into mixing coefficients by a softmax
- mu: k * d linear outputs, the component means
- sigma: k * d pre-activations, turned into standard deviations by
  ``ELU(x) + 1 + min_std`` (min_std is 1e-7 unless configured)

Gradients of the mean negative log-likelihood are computed analytically,
through the posterior responsibilities of the components, and parameters are
updated with Adam.
"""
import csv
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import logsumexp

from mixmode import InvalidArgument, TrainingError, FormatVersionError
from mixmode.gmm import Mixture, STD_FLOOR, log_pdf
from mixmode.version import FORMAT_VERSION

__all__ = ('MdnConfig', 'MdnModel', 'TrainHistory', 'AdamState', 'forward',
           'forward_batch', 'nll', 'batch_nll', 'grad', 'adam_step', 'train',
           'predict_mean', 'save_checkpoint', 'load_checkpoint')

logger = logging.getLogger('mixmode.mdn')

LOG_2PI = np.log(2 * np.pi)
CHECKPOINT_KIND = 'mdn-checkpoint'


@dataclass
class MdnConfig:
    input_dim: int = 1
    output_dim: int = 1
    n_components: int = 5
    hidden_widths: tuple = (64, 64, 64)
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 100
    epochs: int = 1000
    # lower bound of the predicted standard deviations
    min_std: float = STD_FLOOR

    def __post_init__(self):
        self.hidden_widths = tuple(int(width) for width in self.hidden_widths)
        if self.n_components < 1:
            raise InvalidArgument('An MDN needs at least one component')
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise InvalidArgument('hidden_widths must be a non-empty list of positive widths')
        if self.input_dim < 1 or self.output_dim < 1:
            raise InvalidArgument('input_dim and output_dim must be positive')
        if not self.learning_rate > 0:
            raise InvalidArgument('learning_rate must be positive')
        if self.batch_size < 1:
            raise InvalidArgument('batch_size must be positive')
        if self.epochs < 0:
            raise InvalidArgument('epochs must be positive (or 0)')
        if not self.min_std > 0:
            raise InvalidArgument('min_std must be positive')

    def to_dict(self):
        data = asdict(self)
        data['hidden_widths'] = list(self.hidden_widths)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as e:
            raise InvalidArgument('Invalid MDN configuration: %s' % e)


class MdnModel(object):
    """
    Parameters of an MDN, stored by name in ``params``, plus the fixed affine
    standardization applied to the inputs.
    """

    def __init__(self, config, params, input_shift=None, input_scale=None):
        self.config = config
        self.params = params
        self.input_shift = np.zeros(config.input_dim) if input_shift is None \
            else np.asarray(input_shift, dtype=float)
        self.input_scale = np.ones(config.input_dim) if input_scale is None \
            else np.asarray(input_scale, dtype=float)
        missing = set(self.parameter_names(config)) - set(params)
        if missing:
            raise InvalidArgument('Missing parameters: %s' % ', '.join(sorted(missing)))

    @staticmethod
    def parameter_names(config):
        """
        Names of the parameters, in layer order
        """
        names = []
        for index in range(len(config.hidden_widths)):
            names.extend(['hidden.%d.weight' % index, 'hidden.%d.bias' % index])
        for head in ('pi', 'mu', 'sigma'):
            names.extend(['%s.weight' % head, '%s.bias' % head])
        return names

    @staticmethod
    def parameter_shapes(config):
        k, d = config.n_components, config.output_dim
        shapes = {}
        fan_in = config.input_dim
        for index, width in enumerate(config.hidden_widths):
            shapes['hidden.%d.weight' % index] = (fan_in, width)
            shapes['hidden.%d.bias' % index] = (width, )
            fan_in = width
        for head, size in (('pi', k), ('mu', k * d), ('sigma', k * d)):
            shapes['%s.weight' % head] = (fan_in, size)
            shapes['%s.bias' % head] = (size, )
        return shapes

    @classmethod
    def initialize(cls, config, rng=None):
        """
        He-style uniform weights scaled by fan-in, zero biases except for the
        mu head whose biases are drawn uniformly in [-1, 1], independently for
        each component and each output dimension, so that components do not
        start identical nor aligned on a diagonal.
        """
        if rng is None:
            rng = np.random.default_rng(config.seed)
        params = {}
        for name, shape in cls.parameter_shapes(config).items():
            if name.endswith('.weight'):
                limit = np.sqrt(6.0 / shape[0])
                params[name] = rng.uniform(-limit, limit, size=shape)
            else:
                params[name] = np.zeros(shape)
        k, d = config.n_components, config.output_dim
        if k > 1:
            params['mu.bias'] = rng.uniform(-1.0, 1.0, size=k * d)
        return cls(config, params)

    @property
    def n_parameters(self):
        return sum(value.size for value in self.params.values())

    def copy(self):
        return MdnModel(self.config, dict((name, value.copy()) for name, value in self.params.items()),
                        self.input_shift.copy(), self.input_scale.copy())


def _sigma_transform(pre, min_std=STD_FLOOR):
    """
    ELU(pre) + 1 + min_std, and its derivative. ELU(x) + 1 is exp(x) for x <= 0.
    """
    negative_part = np.exp(np.minimum(pre, 0.0))
    positive = pre > 0
    sigma = np.where(positive, pre + 1.0, negative_part) + min_std
    derivative = np.where(positive, 1.0, negative_part)
    return sigma, derivative


def _forward(model, X):
    """
    Run the network on a (n, input_dim) batch and return every intermediate
    value needed by the backward pass
    """
    config, params = model.config, model.params
    n, k, d = X.shape[0], config.n_components, config.output_dim

    h = (X - model.input_shift) / model.input_scale
    layer_inputs, pre_activations = [], []
    for index in range(len(config.hidden_widths)):
        layer_inputs.append(h)
        a = h @ params['hidden.%d.weight' % index] + params['hidden.%d.bias' % index]
        pre_activations.append(a)
        h = np.maximum(a, 0.0)

    logits = h @ params['pi.weight'] + params['pi.bias']
    log_pi = logits - logsumexp(logits, axis=1, keepdims=True)
    mu = (h @ params['mu.weight'] + params['mu.bias']).reshape(n, k, d)
    sigma_pre = (h @ params['sigma.weight'] + params['sigma.bias']).reshape(n, k, d)
    sigma, sigma_derivative = _sigma_transform(sigma_pre, config.min_std)

    return {
        'layer_inputs': layer_inputs,
        'pre_activations': pre_activations,
        'h': h,
        'log_pi': log_pi,
        'mu': mu,
        'sigma': sigma,
        'sigma_derivative': sigma_derivative,
    }


def _check_inputs(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, model.config.input_dim)
    if X.shape[1] != model.config.input_dim:
        raise InvalidArgument('Inputs have dimension %d, the model expects %d'
                              % (X.shape[1], model.config.input_dim))
    if not np.all(np.isfinite(X)):
        raise InvalidArgument('Inputs must be finite')
    return X


def forward_batch(model, X):
    """
    Return the (n, k) weights, (n, k, d) means and (n, k, d) stds predicted
    for the (n, input_dim) inputs
    """
    cache = _forward(model, _check_inputs(model, X))
    return np.exp(cache['log_pi']), cache['mu'], cache['sigma']


def forward(model, x):
    """
    Return the Mixture predicted for a single input vector
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.config.input_dim, ):
        raise InvalidArgument('Input has shape %s, the model expects (%d,)'
                              % (x.shape, model.config.input_dim))
    weights, means, stds = forward_batch(model, x[None, :])
    return Mixture.from_arrays(weights[0], means[0], stds[0])


def predict_mean(model, X):
    """
    Mean of the predicted mixtures, sum_i pi_i mu_i, shape (n, d)
    """
    weights, means, _ = forward_batch(model, X)
    return np.sum(weights[:, :, None] * means, axis=1)


def nll(m, y):
    """
    Negative log-likelihood of y under the mixture
    """
    return -log_pdf(m, y)


def _component_log_terms(cache, Y):
    """
    log pi_i + log N(y | mu_i, sigma_i) as a (n, k) array, and the
    standardized residuals
    """
    z = (Y[:, None, :] - cache['mu']) / cache['sigma']
    terms = (cache['log_pi']
             - 0.5 * np.sum(z ** 2, axis=2)
             - np.sum(np.log(cache['sigma']), axis=2)
             - 0.5 * Y.shape[1] * LOG_2PI)
    return terms, z


def _check_targets(model, X, Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, model.config.output_dim)
    if Y.shape[1] != model.config.output_dim:
        raise InvalidArgument('Targets have dimension %d, the model expects %d'
                              % (Y.shape[1], model.config.output_dim))
    if Y.shape[0] != X.shape[0]:
        raise InvalidArgument('%d inputs for %d targets' % (X.shape[0], Y.shape[0]))
    return Y


def batch_nll(model, X, Y):
    """
    Mean negative log-likelihood of the (X, Y) batch
    """
    X = _check_inputs(model, X)
    Y = _check_targets(model, X, Y)
    terms, _ = _component_log_terms(_forward(model, X), Y)
    return float(-np.mean(logsumexp(terms, axis=1)))


def grad(model, X, Y):
    """
    Return the mean negative log-likelihood of the batch and its exact
    gradient with respect to every parameter, as a dict keyed like
    ``model.params``.
    """
    X = _check_inputs(model, X)
    Y = _check_targets(model, X, Y)
    if not X.shape[0]:
        raise InvalidArgument('Cannot compute a gradient on an empty batch')
    config, params = model.config, model.params
    n, k, d = X.shape[0], config.n_components, config.output_dim

    cache = _forward(model, X)
    terms, z = _component_log_terms(cache, Y)
    log_likelihood = logsumexp(terms, axis=1, keepdims=True)
    loss = float(-np.mean(log_likelihood))

    # posterior responsibilities of the components
    responsibilities = np.exp(terms - log_likelihood)
    sigma = cache['sigma']
    d_logits = (np.exp(cache['log_pi']) - responsibilities) / n
    d_mu = -responsibilities[:, :, None] * z / sigma / n
    d_sigma = -responsibilities[:, :, None] * (z ** 2 - 1.0) / sigma / n
    d_sigma_pre = (d_sigma * cache['sigma_derivative']).reshape(n, k * d)
    d_mu = d_mu.reshape(n, k * d)

    h = cache['h']
    grads = {
        'pi.weight': h.T @ d_logits,
        'pi.bias': d_logits.sum(axis=0),
        'mu.weight': h.T @ d_mu,
        'mu.bias': d_mu.sum(axis=0),
        'sigma.weight': h.T @ d_sigma_pre,
        'sigma.bias': d_sigma_pre.sum(axis=0),
    }
    d_h = (d_logits @ params['pi.weight'].T
           + d_mu @ params['mu.weight'].T
           + d_sigma_pre @ params['sigma.weight'].T)

    for index in reversed(range(len(config.hidden_widths))):
        d_a = d_h * (cache['pre_activations'][index] > 0)
        grads['hidden.%d.weight' % index] = cache['layer_inputs'][index].T @ d_a
        grads['hidden.%d.bias' % index] = d_a.sum(axis=0)
        d_h = d_a @ params['hidden.%d.weight' % index].T

    return loss, grads


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def adam_step(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPSILON):
    """
    One Adam update. Return the new parameters and the new state, the given
    ones are left untouched.
    """
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    for name, value in params.items():
        gradient = grads[name]
        if gradient.shape != value.shape:
            raise InvalidArgument('Gradient of %s has shape %s, expected %s'
                                  % (name, gradient.shape, value.shape))
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * gradient
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * gradient ** 2
        new_params[name] = value - lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step, new_m, new_v)


@dataclass
class TrainHistory:
    epoch_nll: list
    final_nll: float
    seed: int
    config: dict

    def to_csv(self, filename):
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('epoch', 'nll'))
            for epoch, value in enumerate(self.epoch_nll, 1):
                writer.writerow((epoch, repr(float(value))))


def _standardization(inputs):
    shift = inputs.mean(axis=0)
    scale = inputs.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def train(config, data):
    """
    Train a fresh MDN on ``data`` (anything with ``inputs`` and ``targets``
    arrays) with Adam over seeded shuffled minibatches.
    Return the model and its TrainHistory. The run is fully determined by the
    config (seed included) and the data.
    """
    X = np.asarray(data.inputs, dtype=float)
    Y = np.asarray(data.targets, dtype=float)
    if X.ndim != 2 or not X.shape[0]:
        raise InvalidArgument('Cannot train on an empty dataset')
    if X.shape[1] != config.input_dim or Y.shape[1] != config.output_dim:
        raise InvalidArgument('Dataset dimensions (%d, %d) do not match the config (%d, %d)'
                              % (X.shape[1], Y.shape[1], config.input_dim, config.output_dim))
    if X.shape[0] != Y.shape[0]:
        raise InvalidArgument('%d inputs for %d targets' % (X.shape[0], Y.shape[0]))

    rng = np.random.default_rng(config.seed)
    model = MdnModel.initialize(config, rng)
    model.input_shift, model.input_scale = _standardization(X)

    n = X.shape[0]
    state = AdamState()
    epoch_nll = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = grad(model, X[batch], Y[batch])
            model.params, state = adam_step(model.params, grads, state, config.learning_rate)
            total += loss * len(batch)
        mean_nll = total / n
        if not np.isfinite(mean_nll):
            raise TrainingError('Non finite NLL at epoch %d' % (epoch + 1), seed=config.seed)
        epoch_nll.append(mean_nll)
        if (epoch + 1) % 100 == 0:
            logger.debug('[seed=%s] epoch %d/%d, nll=%.6f', config.seed, epoch + 1,
                         config.epochs, mean_nll)

    final_nll = epoch_nll[-1] if epoch_nll else batch_nll(model, X, Y)
    history = TrainHistory(epoch_nll, final_nll, config.seed, config.to_dict())
    return model, history


def checkpoint_to_dict(model):
    names = MdnModel.parameter_names(model.config)
    return {
        'kind': CHECKPOINT_KIND,
        'format_version': FORMAT_VERSION,
        'config': model.config.to_dict(),
        'input_shift': model.input_shift.tolist(),
        'input_scale': model.input_scale.tolist(),
        'layer_order': names,
        'parameters': dict((name, {
            'shape': list(model.params[name].shape),
            'values': model.params[name].ravel().tolist(),
        }) for name in names),
    }


def checkpoint_from_dict(data):
    if data.get('kind') != CHECKPOINT_KIND:
        raise FormatVersionError('Not an MDN checkpoint')
    if data.get('format_version') != FORMAT_VERSION:
        raise FormatVersionError('Checkpoint format version %s is not supported (expected %s)'
                                 % (data.get('format_version'), FORMAT_VERSION))
    config = MdnConfig.from_dict(data['config'])
    shapes = MdnModel.parameter_shapes(config)
    params = {}
    for name in data['layer_order']:
        entry = data['parameters'][name]
        if tuple(entry['shape']) != shapes[name]:
            raise FormatVersionError('Parameter %s has shape %s, expected %s'
                                     % (name, entry['shape'], shapes[name]))
        params[name] = np.array(entry['values'], dtype=float).reshape(entry['shape'])
    return MdnModel(config, params, data['input_shift'], data['input_scale'])


def save_checkpoint(model, filename):
    with open(filename, 'w') as f:
        json.dump(checkpoint_to_dict(model), f, sort_keys=True)
        f.write('\n')


def load_checkpoint(filename):
    with open(filename) as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise FormatVersionError('Invalid checkpoint file %s: %s' % (filename, e))
    return checkpoint_from_dict(data)
