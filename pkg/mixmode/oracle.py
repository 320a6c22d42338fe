"""
Slow numerical reference values for the closed forms and estimators of
``mixmode.gmm``, computed independently (scipy densities and quantiles, plain
trapezoid rule) on one dimensional distributions.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp
from scipy.stats import norm

from mixmode import InvalidArgument, Unsupported
from mixmode.gmm import (GaussianComponent, Mixture, EntropyEstimatorConfig,
                         ENVELOPE_WIDTH, QUADRATURE_POINTS, kl_gaussian, w2_gaussian,
                         mixture_entropy)
from mixmode.utils import derive_seed

__all__ = ('GridSpec', 'kl_quadrature_1d', 'wasserstein_1d', 'entropy_quadrature_1d',
           'OracleViolation', 'OracleReport', 'run_oracle_suite',
           'KL_TOLERANCE', 'W2_TOLERANCE', 'ENTROPY_TOLERANCE')

logger = logging.getLogger('mixmode.oracle')

KL_TOLERANCE = 1e-6
W2_TOLERANCE = 1e-3
ENTROPY_TOLERANCE = 0.02
QUANTILE_POINTS = 100000
SUITE_ENTROPY_SAMPLES = 65536

# parameter box of the randomized draws
MEAN_RANGE = (-5.0, 5.0)
STD_RANGE = (0.1, 5.0)
MAX_COMPONENTS = 10


@dataclass(frozen=True)
class GridSpec:
    lower: float
    upper: float
    points: int = QUADRATURE_POINTS

    def __post_init__(self):
        if not self.upper > self.lower:
            raise InvalidArgument('Grid upper bound must be above the lower one')
        if self.points < 3 or self.points % 2 == 0:
            raise InvalidArgument('Grid points must be an odd count >= 3 (got %s)' % self.points)

    @classmethod
    def envelope(cls, means, stds, points=QUADRATURE_POINTS):
        """
        The support envelope [min mu - 10 max sigma, max mu + 10 max sigma]
        """
        means, stds = np.ravel(means), np.ravel(stds)
        spread = ENVELOPE_WIDTH * float(stds.max())
        return cls(float(means.min()) - spread, float(means.max()) + spread, points)

    def refined(self):
        """
        Same bounds, half the step
        """
        return GridSpec(self.lower, self.upper, 2 * self.points - 1)

    def values(self):
        return np.linspace(self.lower, self.upper, self.points)


def _scalar(component):
    if component.dim != 1:
        raise Unsupported('Oracles only handle one dimensional distributions (got %d)'
                          % component.dim)
    return float(component.mean[0]), float(component.std[0])


def _pair_grid(a, b):
    return GridSpec.envelope([a.mean, b.mean], [a.std, b.std])


def kl_quadrature_1d(a, b, grid=None):
    """
    KL(a || b) by the trapezoid rule on the grid, the envelope of both
    components by default
    """
    mean_a, std_a = _scalar(a)
    mean_b, std_b = _scalar(b)
    y = (grid or _pair_grid(a, b)).values()
    log_a = norm.logpdf(y, mean_a, std_a)
    log_b = norm.logpdf(y, mean_b, std_b)
    return float(trapezoid(np.exp(log_a) * (log_a - log_b), y))


def _midpoint_quantiles(points):
    return norm.ppf((np.arange(points) + 0.5) / points)


def wasserstein_1d(a, b, quantile_points=QUANTILE_POINTS, quantiles=None):
    """
    (W1, W2) between two one dimensional Gaussians through the quantile
    coupling, evaluated on ``quantile_points`` midpoint quantiles.
    ``quantiles`` may pass precomputed standard normal midpoint quantiles.
    """
    mean_a, std_a = _scalar(a)
    mean_b, std_b = _scalar(b)
    if quantile_points < 1:
        raise InvalidArgument('quantile_points must be positive')
    z = _midpoint_quantiles(quantile_points) if quantiles is None else quantiles
    gap = np.abs((mean_a + std_a * z) - (mean_b + std_b * z))
    return float(np.mean(gap)), float(np.sqrt(np.mean(gap ** 2)))


def entropy_quadrature_1d(m, grid=None):
    """
    Differential entropy of a one dimensional mixture by the trapezoid rule
    of -p log p, on the envelope of its components by default
    """
    if m.dim != 1:
        raise Unsupported('Oracles only handle one dimensional distributions (got %d)' % m.dim)
    active = m.active()
    y = (grid or GridSpec.envelope(m.means[active], m.stds[active])).values()
    log_terms = norm.logpdf(y[:, None], m.means[active, 0], m.stds[active, 0])
    log_p = logsumexp(log_terms + np.log(m.weights[active]), axis=1)
    p = np.exp(log_p)
    return float(trapezoid(np.where(p > 0, -p * log_p, 0.0), y))


@dataclass
class OracleViolation:
    check: str
    draw: int
    seed: int
    params: dict
    expected: float
    actual: float
    tolerance: float

    def __str__(self):
        return '%s: draw %d (seed=%d) %s expected %.10g got %.10g (tolerance %g)' % (
            self.check, self.draw, self.seed, self.params, self.expected, self.actual,
            self.tolerance)


@dataclass
class OracleReport:
    draws: int
    seed: int
    checks: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    def summary(self):
        lines = ['%d draws, seed %d' % (self.draws, self.seed)]
        for name, stats in self.checks.items():
            lines.append('%-8s max error %.3g (tolerance %g) %d violation(s)' % (
                name, stats['max_error'], stats['tolerance'], stats['violations']))
        lines.extend(str(violation) for violation in self.violations)
        return '\n'.join(lines)

    def to_dict(self):
        return {
            'draws': self.draws,
            'seed': self.seed,
            'passed': self.passed,
            'checks': self.checks,
            'violations': [str(violation) for violation in self.violations],
        }


def _draw_component(rng):
    return GaussianComponent([rng.uniform(*MEAN_RANGE)], [rng.uniform(*STD_RANGE)])


def _draw_mixture(rng):
    k = int(rng.integers(1, MAX_COMPONENTS + 1))
    weights = rng.dirichlet(np.ones(k))
    return Mixture.from_arrays(weights, rng.uniform(*MEAN_RANGE, size=(k, 1)),
                               rng.uniform(*STD_RANGE, size=(k, 1)))


def _component_params(a, b):
    return {'a': (float(a.mean[0]), float(a.std[0])), 'b': (float(b.mean[0]), float(b.std[0]))}


def run_oracle_suite(draws=1000, seed=0, kl_perturbation=0.0,
                     entropy_samples=SUITE_ENTROPY_SAMPLES):
    """
    Compare over ``draws`` random parameter draws:
    - closed form KL against quadrature (within 1e-6),
    - closed form W2 against the quantile coupling (within 1e-3),
    - Monte Carlo mixture entropy against quadrature (within 0.02 nats).
    ``kl_perturbation`` is added to the closed form KL, a hook to check that
    the suite detects faults.
    """
    if draws < 1:
        raise InvalidArgument('At least one draw is needed')
    report = OracleReport(draws, seed)
    for name, tolerance in (('kl', KL_TOLERANCE), ('w2', W2_TOLERANCE),
                            ('entropy', ENTROPY_TOLERANCE)):
        report.checks[name] = {'tolerance': tolerance, 'max_error': 0.0, 'violations': 0}
    quantiles = _midpoint_quantiles(QUANTILE_POINTS)

    def record(name, draw, draw_seed, params, expected, actual):
        check = report.checks[name]
        error = abs(expected - actual)
        check['max_error'] = max(check['max_error'], error)
        if not error <= check['tolerance']:
            check['violations'] += 1
            report.violations.append(OracleViolation(name, draw, draw_seed, params,
                                                     expected, actual, check['tolerance']))

    for draw in range(draws):
        draw_seed = derive_seed(seed, draw)
        rng = np.random.default_rng(draw_seed)
        a, b = _draw_component(rng), _draw_component(rng)
        params = _component_params(a, b)
        record('kl', draw, draw_seed, params, kl_quadrature_1d(a, b),
               kl_gaussian(a, b) + kl_perturbation)
        record('w2', draw, draw_seed, params, wasserstein_1d(a, b, quantiles=quantiles)[1],
               w2_gaussian(a, b))

        m = _draw_mixture(rng)
        cfg = EntropyEstimatorConfig('mc', entropy_samples, derive_seed(draw_seed, 1))
        record('entropy', draw, draw_seed, {'k': m.k}, entropy_quadrature_1d(m),
               mixture_entropy(m, cfg))

    logger.info('Oracle suite: %d draws, %d violation(s)', draws, len(report.violations))
    return report
