"""
The four multimodality metrics, each mapping a Mixture to a score:
- MCE, the normalized entropy of the mixing coefficients
- WAKLD, the doubly weighted sum of pairwise KL divergences
- SEMD, the weighted transport distance from the primary mode to the other
  components
- JSD, the generalized Jensen-Shannon divergence of the components
A single component mixture scores 0 on every metric.
"""
import csv
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import entr

from mixmode import METRICS, InvalidArgument
from mixmode.gmm import (EntropyEstimatorConfig, kl_matrix, w2_matrix,
                         entropy_gaussian, mixture_entropy, stratified_counts)

__all__ = ('MetricValue', 'MetricRow', 'MetricReport', 'REPORT_COLUMNS',
           'mce', 'wakld', 'semd', 'jsd', 'all_metrics', 'primary_mode',
           'evaluate_mixtures')

REPORT_COLUMNS = ('sample_id', 'k', 'label', 'mce', 'wakld', 'semd', 'jsd',
                  'jsd_n_samples', 'seed')


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    estimator_meta: dict = None

    def __post_init__(self):
        if self.name not in METRICS.values():
            raise InvalidArgument('Unknown metric "%s"' % self.name)
        if self.value < 0 or (self.name == METRICS.MCE and self.value > 1):
            raise InvalidArgument('Invalid %s value %r' % (self.name, self.value))


@dataclass
class MetricRow:
    """
    The four metrics of one mixture, with the JSD estimator metadata
    (jsd_n_samples is 0 when the quadrature estimator was used)
    """
    sample_id: object
    k: int
    label: str
    mce: float
    wakld: float
    semd: float
    jsd: float
    jsd_n_samples: int
    seed: int

    def values(self):
        return dict((name, getattr(self, name)) for name in METRICS.values())

    def metric_values(self):
        """
        The four metrics as MetricValue, the JSD one carrying its estimator
        metadata
        """
        jsd_meta = {'n_samples': self.jsd_n_samples, 'seed': self.seed}
        return [MetricValue(name, value, jsd_meta if name == METRICS.JSD else None)
                for name, value in self.values().items()]


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, metric):
        return np.array([getattr(row, metric) for row in self.rows])

    def to_csv(self, filename):
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(REPORT_COLUMNS)
            for row in self.rows:
                data = asdict(row)
                writer.writerow([data[name] for name in REPORT_COLUMNS])


def mce(m):
    """
    Mixing coefficient entropy, normalized by log k, in [0, 1]
    """
    if m.k == 1:
        return 0.0
    value = float(np.sum(entr(m.weights)) / np.log(m.k))
    return min(max(value, 0.0), 1.0)


def _wakld(weights, kl_table):
    return max(float(weights @ kl_table @ weights), 0.0)


def wakld(m):
    """
    Weighted average KL divergence: sum_i pi_i sum_j pi_j KL(p_i || p_j)
    """
    if m.k == 1:
        return 0.0
    return _wakld(m.weights, kl_matrix(m))


def primary_mode(m):
    """
    Index of the component with the largest weight, the lowest index on ties
    """
    return int(np.argmax(m.weights))


def _semd(weights, w2_table):
    primary = int(np.argmax(weights))
    return float(weights @ w2_table[primary])


def semd(m):
    """
    Self earth mover's distance: weighted sum of the 2-Wasserstein distances
    between the primary mode and every other component
    """
    if m.k == 1:
        return 0.0
    return _semd(m.weights, w2_matrix(m))


def _estimator_meta(m, cfg):
    """
    Return the (n_samples, seed) recorded for the JSD of this mixture:
    n_samples is the number of draws actually made, 0 if the quadrature was
    used or if the JSD needed no estimation
    """
    if cfg.resolve(m.dim) != 'mc' or m.k == 1 or m.is_collapsed():
        return 0, cfg.seed
    return int(stratified_counts(m, cfg.n_samples).sum()), cfg.seed


def jsd(m, cfg=None):
    """
    Generalized Jensen-Shannon divergence: H(sum pi_i p_i) - sum pi_i H(p_i),
    clamped at 0
    """
    cfg = cfg or EntropyEstimatorConfig()
    if m.k == 1 or m.is_collapsed():
        return 0.0
    components_entropy = sum(weight * entropy_gaussian(component)
                             for weight, component in zip(m.weights, m.components))
    return max(mixture_entropy(m, cfg) - components_entropy, 0.0)


def all_metrics(m, cfg=None, sample_id=None, label=''):
    """
    Compute the four metrics in one pass, sharing the pairwise tables.
    Values are identical to the individual calls.
    """
    cfg = cfg or EntropyEstimatorConfig()
    n_samples, seed = _estimator_meta(m, cfg)
    if m.k == 1:
        values = (0.0, 0.0, 0.0, 0.0)
    else:
        values = (mce(m), _wakld(m.weights, kl_matrix(m)),
                  _semd(m.weights, w2_matrix(m)), jsd(m, cfg))
    return MetricRow(sample_id, m.k, label, *values, jsd_n_samples=n_samples, seed=seed)


def evaluate_mixtures(mixtures, cfg=None, seeds=None, labels=None, sample_ids=None):
    """
    Compute all metrics for a sequence of mixtures. ``seeds`` gives one JSD
    estimator seed per mixture (the one of ``cfg`` is used if None).
    """
    cfg = cfg or EntropyEstimatorConfig()
    report = MetricReport()
    for index, m in enumerate(mixtures):
        mixture_cfg = cfg if seeds is None else cfg.with_seed(int(seeds[index]))
        report.rows.append(all_metrics(
            m, mixture_cfg,
            sample_id=index if sample_ids is None else sample_ids[index],
            label='' if labels is None else labels[index],
        ))
    return report
