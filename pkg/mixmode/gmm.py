"""
Diagonal Gaussian mixtures: densities, sampling, and the closed-form
per-component quantities (KL divergence, 2-Wasserstein distance, entropy)
used by the multimodality metrics.
All logarithms are natural, entropies and divergences are in nats.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from mixmode import InvalidArgument, Unsupported
from mixmode.version import FORMAT_VERSION

__all__ = ('STD_FLOOR', 'WEIGHTS_TOLERANCE', 'GaussianComponent', 'Mixture',
           'EntropyEstimatorConfig', 'log_pdf', 'sample', 'kl_gaussian',
           'w2_gaussian', 'entropy_gaussian', 'kl_matrix', 'w2_matrix',
           'support_grid', 'stratified_counts', 'mixture_entropy', 'mixture_to_dict',
           'mixture_from_dict', 'dump_mixture', 'load_mixture')

STD_FLOOR = 1e-7
WEIGHTS_TOLERANCE = 1e-9
LOG_2PI = np.log(2 * np.pi)

# support envelope for 1-D quadrature, in number of standard deviations
ENVELOPE_WIDTH = 10.0
QUADRATURE_POINTS = 20001


def _frozen(array):
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GaussianComponent:
    """
    A diagonal Gaussian. ``std`` holds per-dimension standard deviations,
    floored at STD_FLOOR.
    """
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.atleast_1d(np.asarray(self.std, dtype=float))
        if mean.ndim != 1 or std.ndim != 1:
            raise InvalidArgument('mean and std must be vectors')
        if mean.shape != std.shape:
            raise InvalidArgument('mean has dimension %d but std has dimension %d'
                                  % (mean.shape[0], std.shape[0]))
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise InvalidArgument('mean and std must be finite')
        if np.any(std <= 0):
            raise InvalidArgument('std must be positive')
        object.__setattr__(self, 'mean', _frozen(mean))
        object.__setattr__(self, 'std', _frozen(np.maximum(std, STD_FLOOR)))

    @property
    def dim(self):
        return self.mean.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GaussianComponent):
            return NotImplemented
        return (np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std))

    def __hash__(self):
        return hash((self.mean.tobytes(), self.std.tobytes()))


@dataclass(frozen=True, eq=False)
class Mixture:
    """
    Weights (mixing coefficients) and components of a diagonal Gaussian
    mixture. ``means`` and ``stds`` are (k, d) views of the components.
    """
    weights: np.ndarray
    components: tuple
    means: np.ndarray = field(init=False, repr=False, compare=False)
    stds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        components = tuple(self.components)
        if weights.ndim != 1 or not len(components):
            raise InvalidArgument('A mixture needs at least one component')
        if weights.shape[0] != len(components):
            raise InvalidArgument('%d weights for %d components'
                                  % (weights.shape[0], len(components)))
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or np.any(weights > 1):
            raise InvalidArgument('weights must be in [0, 1]')
        if abs(weights.sum() - 1.0) > WEIGHTS_TOLERANCE:
            raise InvalidArgument('weights must sum to 1 (got %r)' % weights.sum())
        dims = set(component.dim for component in components)
        if len(dims) != 1:
            raise InvalidArgument('All components must share the same dimension')

        object.__setattr__(self, 'weights', _frozen(weights))
        object.__setattr__(self, 'components', components)
        object.__setattr__(self, 'means', _frozen([c.mean for c in components]))
        object.__setattr__(self, 'stds', _frozen([c.std for c in components]))

    @classmethod
    def from_arrays(cls, weights, means, stds):
        """
        Build a mixture from a (k,) weights vector and (k, d) means/stds
        """
        means = np.asarray(means, dtype=float)
        stds = np.asarray(stds, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if stds.ndim == 1:
            stds = stds[:, None]
        if means.shape != stds.shape:
            raise InvalidArgument('means and stds shapes differ')
        return cls(weights, [GaussianComponent(m, s) for m, s in zip(means, stds)])

    @classmethod
    def single(cls, mean, std):
        return cls([1.0], [GaussianComponent(mean, std)])

    @property
    def k(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    def active(self):
        """
        Return the indexes of the components with a positive weight
        """
        return np.flatnonzero(self.weights > 0)

    def is_collapsed(self):
        """
        Return True if all positive-weight components are identical, ie the
        mixture is a single Gaussian
        """
        active = self.active()
        first = active[0]
        return bool(np.all(self.means[active] == self.means[first])
                    and np.all(self.stds[active] == self.stds[first]))

    def translated(self, offset):
        """
        Return the same mixture with every mean shifted by ``offset``
        """
        return Mixture.from_arrays(self.weights, self.means + np.asarray(offset, dtype=float),
                                   self.stds)

    def permuted(self, order):
        order = list(order)
        return Mixture(self.weights[order], [self.components[i] for i in order])


def _check_same_dim(a, b):
    if a.dim != b.dim:
        raise InvalidArgument('Dimension mismatch: %d != %d' % (a.dim, b.dim))


def _component_log_pdfs(m, y):
    """
    Return the (n, k) per-component log densities at the (n, d) points y
    """
    z = (y[:, None, :] - m.means[None, :, :]) / m.stds[None, :, :]
    return (-0.5 * np.sum(z ** 2, axis=2)
            - np.sum(np.log(m.stds), axis=1)[None, :]
            - 0.5 * m.dim * LOG_2PI)


def log_pdf(m, y):
    """
    Log density of the mixture at y, with log-sum-exp over the components.
    ``y`` is a (d,) vector, giving a float, or a (n, d) batch, giving (n,).
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim <= 1
    if m.dim == 1 and y.ndim == 1 and y.shape[0] != 1:
        # a batch of scalars
        y, single = y[:, None], False
    y = np.atleast_2d(y)
    if y.shape[1] != m.dim:
        raise InvalidArgument('Point has dimension %d, mixture has dimension %d'
                              % (y.shape[1], m.dim))
    # zero-weight components are left out, they would only add -inf terms
    active = m.active()
    terms = _component_log_pdfs(m, y)[:, active] + np.log(m.weights[active])[None, :]
    values = logsumexp(terms, axis=1)
    return float(values[0]) if single else values


def sample(m, rng, n, return_components=False):
    """
    Draw ``n`` points from the mixture: a categorical choice over the weights,
    then a per-dimension gaussian draw. ``rng`` is a numpy Generator owned by
    the caller. Return a (n, d) array (and the (n,) chosen components if
    ``return_components``).
    """
    if n < 1:
        raise InvalidArgument('Cannot draw %s samples' % n)
    chosen = rng.choice(m.k, size=n, p=m.weights)
    points = m.means[chosen] + m.stds[chosen] * rng.standard_normal((n, m.dim))
    if return_components:
        return points, chosen
    return points


def kl_gaussian(a, b):
    """
    Closed-form KL(a || b) of two diagonal Gaussians
    """
    _check_same_dim(a, b)
    return float(np.sum(np.log(b.std / a.std)
                        + (a.std ** 2 + (a.mean - b.mean) ** 2) / (2 * b.std ** 2)
                        - 0.5))


def w2_gaussian(a, b):
    """
    Closed-form 2-Wasserstein distance of two diagonal Gaussians
    """
    _check_same_dim(a, b)
    return float(np.sqrt(np.sum((a.mean - b.mean) ** 2 + (a.std - b.std) ** 2)))


def entropy_gaussian(c):
    """
    Differential entropy of a diagonal Gaussian
    """
    return float(np.sum(0.5 * np.log(2 * np.pi * np.e * c.std ** 2)))


def kl_matrix(m):
    """
    (k, k) table of KL(p_i || p_j) for all ordered pairs of components.
    The diagonal is exactly 0.
    """
    mu_a, mu_b = m.means[:, None, :], m.means[None, :, :]
    sd_a, sd_b = m.stds[:, None, :], m.stds[None, :, :]
    table = np.sum(np.log(sd_b / sd_a) + (sd_a ** 2 + (mu_a - mu_b) ** 2) / (2 * sd_b ** 2) - 0.5,
                   axis=2)
    np.fill_diagonal(table, 0.0)
    return table


def w2_matrix(m):
    """
    (k, k) symmetric table of 2-Wasserstein distances between components
    """
    table = np.sqrt(np.sum((m.means[:, None, :] - m.means[None, :, :]) ** 2
                           + (m.stds[:, None, :] - m.stds[None, :, :]) ** 2, axis=2))
    np.fill_diagonal(table, 0.0)
    return table


@dataclass(frozen=True)
class EntropyEstimatorConfig:
    """
    How to estimate the entropy of a mixture:
    - ``quadrature``: trapezoid rule on the support envelope (d = 1 only)
    - ``mc``: Monte Carlo over ``n_samples`` draws seeded by ``seed``
    - ``auto``: quadrature for d = 1, mc otherwise
    """
    method: str = 'auto'
    n_samples: int = 4096
    seed: int = 0
    points: int = QUADRATURE_POINTS

    METHODS = ('auto', 'mc', 'quadrature')

    def __post_init__(self):
        if self.method not in self.METHODS:
            raise InvalidArgument('Unknown entropy estimator "%s"' % self.method)
        if self.n_samples < 1:
            raise InvalidArgument('n_samples must be positive')
        if self.points < 3:
            raise InvalidArgument('points must be at least 3')

    def resolve(self, dim):
        """
        Return the concrete method to use for a mixture of dimension ``dim``
        """
        if self.method == 'auto':
            return 'quadrature' if dim == 1 else 'mc'
        return self.method

    def with_seed(self, seed):
        return EntropyEstimatorConfig(self.method, self.n_samples, seed, self.points)


def support_grid(means, stds, points=QUADRATURE_POINTS):
    """
    Uniform grid over [min mu - 10 max sigma, max mu + 10 max sigma], the tail
    mass outside being below 1e-20
    """
    means, stds = np.ravel(means), np.ravel(stds)
    spread = ENVELOPE_WIDTH * stds.max()
    return np.linspace(means.min() - spread, means.max() + spread, points)


def _entropy_quadrature(m, points):
    if m.dim != 1:
        raise Unsupported('Quadrature entropy is only available in one dimension (got %d)'
                          % m.dim)
    grid = support_grid(m.means, m.stds, points)
    log_p = log_pdf(m, grid[:, None])
    p = np.exp(log_p)
    # 0 log 0 := 0
    integrand = np.where(p > 0, -p * log_p, 0.0)
    return float(trapezoid(integrand, grid))


def stratified_counts(m, n_samples):
    """
    Number of Monte Carlo draws given to each positive-weight component:
    round(n_samples * pi_i), at least one. The total may differ from
    ``n_samples``.
    """
    return np.maximum(1, np.round(m.weights[m.active()] * n_samples).astype(int))


def _entropy_monte_carlo(m, n_samples, seed):
    """
    Monte Carlo estimate of -E[log p(Y)], with the draws stratified by
    component: each positive-weight component gets round(n * pi_i) draws
    (at least one) and contributes pi_i times its mean log density.
    """
    rng = np.random.default_rng(seed)
    active = m.active()
    counts = stratified_counts(m, n_samples)
    chosen = np.repeat(active, counts)
    points = m.means[chosen] + m.stds[chosen] * rng.standard_normal((chosen.shape[0], m.dim))
    log_p = np.atleast_1d(log_pdf(m, points))
    strata = np.repeat(np.arange(active.shape[0]), counts)
    mean_log_p = np.bincount(strata, weights=log_p, minlength=active.shape[0]) / counts
    return float(-(m.weights[active] @ mean_log_p))


def mixture_entropy(m, cfg=None):
    """
    Estimate the differential entropy of the mixture, see
    EntropyEstimatorConfig for the available estimators
    """
    cfg = cfg or EntropyEstimatorConfig()
    method = cfg.resolve(m.dim)
    if method == 'quadrature':
        return _entropy_quadrature(m, cfg.points)
    return _entropy_monte_carlo(m, cfg.n_samples, cfg.seed)


def mixture_to_dict(m):
    return {
        'weights': m.weights.tolist(),
        'means': m.means.tolist(),
        'stds': m.stds.tolist(),
    }


def mixture_from_dict(data):
    try:
        return Mixture.from_arrays(data['weights'], data['means'], data['stds'])
    except KeyError as e:
        raise InvalidArgument('Missing mixture field %s' % e)


def dump_mixture(m, filename):
    data = mixture_to_dict(m)
    data['format_version'] = FORMAT_VERSION
    with open(filename, 'w') as f:
        json.dump(data, f, sort_keys=True)
        f.write('\n')


def load_mixture(filename):
    """
    Load one mixture, or a list of mixtures, from a json file
    """
    with open(filename) as f:
        data = json.load(f)
    if isinstance(data, list):
        return [mixture_from_dict(item) for item in data]
    return mixture_from_dict(data)
