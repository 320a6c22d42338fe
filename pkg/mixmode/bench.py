"""
Experiment harnesses:
- the inverse sine study: metric curves along the input axis of 5 component
  MDNs, averaged over runs,
- the latent transition benchmark: for each number of components k and each
  repetition (a "cell"), an MDN is trained on masked and unmasked transitions
  and the metrics are averaged separately over held-out unimodal and
  multimodal transitions.
Cells are independent: they run in sequence, in local processes, or through
the redis queue (see ``mixmode.workers.QueueCellRunner``), and results are
merged by (k, repetition).
"""
import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from mixmode import METRICS, LABELS, MixmodeException, InvalidArgument
from mixmode.datasets import (LatentShiftEnv, gen_inverse_sine, gen_transitions,
                              transitions_to_dataset, split_by_label, ACTION_TOKENS)
from mixmode.gmm import Mixture, EntropyEstimatorConfig
from mixmode.mdn import MdnConfig, train, forward_batch, batch_nll, predict_mean
from mixmode.metrics import all_metrics
from mixmode.utils import derive_seed, get_threads

__all__ = ('DEFAULT_K_GRID', 'BenchSettings', 'BenchCell', 'CellResult',
           'SeparationResult', 'SineExperimentResult', 'BaselineComparison',
           'run_bench_cell', 'LocalCellRunner', 'run_worldmodel_bench',
           'separation_report', 'format_separation_report',
           'separation_acceptance', 'run_sine_experiment', 'sine_acceptance',
           'run_baseline_comparison', 'default_sine_grid')

logger = logging.getLogger('mixmode.bench')

DEFAULT_K_GRID = (2, 3, 4, 5, 6, 8, 10, 15, 20, 30, 50)
METRIC_NAMES = tuple(METRICS.values())


@dataclass(frozen=True)
class BenchSettings:
    """
    Everything defining a latent transition benchmark run. ``samples`` is the
    number of held-out transitions per label.
    With ``residual_targets`` the MDN predicts the displacement
    next_state - state, and the state is added back to the predicted means
    before scoring (the metrics do not change under a common translation).
    """
    k_grid: tuple = DEFAULT_K_GRID
    repetitions: int = 3
    samples: int = 2000
    train_samples: int = 8000
    epochs: int = 100
    hidden_widths: tuple = (64, 64, 64)
    learning_rate: float = 1e-3
    batch_size: int = 100
    jsd_samples: int = 4096
    mask_fraction: float = 0.5
    trajectory_length: int = 20
    d_latent: int = 8
    observation_noise_std: float = 0.05
    min_std: float = 0.01
    residual_targets: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'k_grid', tuple(sorted(set(int(k) for k in self.k_grid))))
        object.__setattr__(self, 'hidden_widths', tuple(int(w) for w in self.hidden_widths))
        if not self.k_grid or min(self.k_grid) < 1:
            raise InvalidArgument('The k grid must hold positive component counts')
        if self.repetitions < 1:
            raise InvalidArgument('At least one repetition is needed')
        if self.samples < 1 or self.train_samples < 1:
            raise InvalidArgument('samples and train_samples must be positive')
        if not self.min_std > 0:
            raise InvalidArgument('min_std must be positive')

    def to_dict(self):
        data = asdict(self)
        data['k_grid'] = list(self.k_grid)
        data['hidden_widths'] = list(self.hidden_widths)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as e:
            raise InvalidArgument('Invalid bench settings: %s' % e)

    def digest(self):
        """
        Short hash of the settings, identifying jobs of the same run name but
        different settings
        """
        encoded = json.dumps(self.to_dict(), sort_keys=True).encode('utf-8')
        return hashlib.sha1(encoded).hexdigest()[:10]

    def env(self):
        return LatentShiftEnv(d_latent=self.d_latent,
                              observation_noise_std=self.observation_noise_std)

    def cells(self):
        return [BenchCell(k, repetition)
                for k in self.k_grid for repetition in range(self.repetitions)]


@dataclass(frozen=True, order=True)
class BenchCell:
    k: int
    repetition: int

    @property
    def identifier(self):
        return 'k=%d:rep=%d' % (self.k, self.repetition)


@dataclass
class CellResult:
    """
    Result of one (k, repetition) cell: per label, per metric mean over the
    held-out transitions of that label.
    Sample ids of the training set are ``range(*train_ids)``, those of the
    held-out set ``range(*eval_ids)``.
    """
    k: int
    repetition: int
    means: dict
    counts: dict
    final_nll: float
    train_ids: tuple
    eval_ids: tuple

    @property
    def cell(self):
        return BenchCell(self.k, self.repetition)

    def to_dict(self):
        data = asdict(self)
        data['train_ids'] = list(self.train_ids)
        data['eval_ids'] = list(self.eval_ids)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['train_ids'] = tuple(data['train_ids'])
        data['eval_ids'] = tuple(data['eval_ids'])
        return cls(**data)


def _cell_log(cell, message, level='info'):
    getattr(logger, level)('[%s] %s' % (cell.identifier, message))


def _label_mixtures(model, samples, residual):
    """
    Predicted (weights, means, stds) for the transitions, means in state
    coordinates
    """
    weights, means, stds = forward_batch(model, transitions_to_dataset(samples).inputs)
    if residual:
        means = means + np.array([sample.state for sample in samples])[:, None, :]
    return weights, means, stds


def run_bench_cell(cell, settings):
    """
    Train an MDN with ``cell.k`` components on mixed masked/unmasked
    transitions, then average the four metrics over the held-out unimodal and
    multimodal transitions. JSD uses a Monte Carlo estimator seeded per
    (k, repetition, sample index).
    """
    cell_seed = derive_seed(settings.seed, cell.k, cell.repetition)
    env = settings.env()
    training = gen_transitions(env, settings.train_samples, settings.mask_fraction,
                               seed=derive_seed(cell_seed, 0),
                               trajectory_length=settings.trajectory_length)
    held_out = gen_transitions(env, 2 * settings.samples, 0.5,
                               seed=derive_seed(cell_seed, 1),
                               trajectory_length=settings.trajectory_length,
                               id_offset=settings.train_samples)

    config = MdnConfig(
        input_dim=settings.d_latent + len(ACTION_TOKENS),
        output_dim=settings.d_latent,
        n_components=cell.k,
        hidden_widths=settings.hidden_widths,
        seed=derive_seed(cell_seed, 2),
        learning_rate=settings.learning_rate,
        batch_size=settings.batch_size,
        epochs=settings.epochs,
        min_std=settings.min_std,
    )
    _cell_log(cell, 'training on %d transitions' % len(training), level='debug')
    model, history = train(config, transitions_to_dataset(training,
                                                          residual=settings.residual_targets))

    means, counts = {}, {}
    for label, samples in split_by_label(held_out).items():
        weights, mu, stds = _label_mixtures(model, samples, settings.residual_targets)
        sums = dict((name, 0.0) for name in METRIC_NAMES)
        for index, sample in enumerate(samples):
            # seeded by the position of the sample in the held-out set
            position = sample.sample_id - settings.train_samples
            cfg = EntropyEstimatorConfig('mc', settings.jsd_samples,
                                         derive_seed(settings.seed, cell.k, cell.repetition,
                                                     position))
            row = all_metrics(Mixture.from_arrays(weights[index], mu[index], stds[index]), cfg)
            for value in row.metric_values():
                sums[value.name] += value.value
        means[label] = dict((name, sums[name] / len(samples)) for name in METRIC_NAMES)
        counts[label] = len(samples)

    result = CellResult(
        k=cell.k,
        repetition=cell.repetition,
        means=means,
        counts=counts,
        final_nll=history.final_nll,
        train_ids=(0, settings.train_samples),
        eval_ids=(settings.train_samples, settings.train_samples + len(held_out)),
    )
    _cell_log(cell, 'done, final nll=%.4f' % history.final_nll)
    return result


class LocalCellRunner(object):
    """
    Run cells in the current process, or in a pool of ``threads`` processes
    (capped by MIXMODE_THREADS).
    """

    def __init__(self, threads=None, on_cell_done=None):
        self.threads = get_threads(threads)
        self.on_cell_done = on_cell_done

    def _done(self, result, done, total):
        if self.on_cell_done:
            self.on_cell_done(result, done, total)

    def run(self, cells, settings):
        results = {}
        total = len(cells)
        if self.threads == 1 or total == 1:
            for cell in cells:
                try:
                    results[cell] = run_bench_cell(cell, settings)
                except Exception as e:
                    raise MixmodeException('Cell %s failed (seed=%s): %s'
                                           % (cell.identifier, settings.seed, e))
                self._done(results[cell], len(results), total)
        else:
            with ProcessPoolExecutor(max_workers=min(self.threads, total)) as executor:
                futures = dict((executor.submit(run_bench_cell, cell, settings), cell)
                               for cell in cells)
                for future in as_completed(futures):
                    cell = futures[future]
                    try:
                        results[cell] = future.result()
                    except Exception as e:
                        raise MixmodeException('Cell %s failed (seed=%s): %s'
                                               % (cell.identifier, settings.seed, e))
                    self._done(results[cell], len(results), total)
        return [results[cell] for cell in sorted(results)]


@dataclass
class SeparationResult:
    """
    Per k and per metric (mean_unimodal, mean_multimodal) pairs, averaged over
    the repetitions, and the per-repetition cells they come from.
    """
    settings: BenchSettings
    cells: list

    k_values: list = field(init=False)
    means: dict = field(init=False)
    overlap: dict = field(init=False)

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda cell: (cell.k, cell.repetition))
        self.k_values = sorted(set(cell.k for cell in self.cells))
        self.means, self.overlap = {}, {}
        for name in METRIC_NAMES:
            self.means[name], self.overlap[name] = {}, {}
            for k in self.k_values:
                per_k = [cell for cell in self.cells if cell.k == k]
                unimodal = float(np.mean([cell.means[LABELS.UNIMODAL][name] for cell in per_k]))
                multimodal = float(np.mean([cell.means[LABELS.MULTIMODAL][name] for cell in per_k]))
                self.means[name][k] = (unimodal, multimodal)
                self.overlap[name][k] = multimodal <= unimodal

    def margin(self, metric, k):
        unimodal, multimodal = self.means[metric][k]
        return multimodal - unimodal

    def long_rows(self):
        """
        (k, repetition, label, metric, value) rows
        """
        for cell in self.cells:
            for label in LABELS.values():
                for name in METRIC_NAMES:
                    yield cell.k, cell.repetition, label, name, cell.means[label][name]

    def to_csv(self, filename):
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('k', 'repetition', 'label', 'metric', 'value'))
            for k, repetition, label, name, value in self.long_rows():
                writer.writerow((k, repetition, label, name, repr(float(value))))


def run_worldmodel_bench(k_grid=DEFAULT_K_GRID, repetitions=3, samples=2000, seed=0,
                         settings=None, runner=None):
    """
    Run every (k, repetition) cell of the latent transition benchmark and
    return the SeparationResult. ``settings`` holds the other parameters,
    ``runner`` defaults to a LocalCellRunner.
    """
    settings = replace(settings or BenchSettings(), k_grid=tuple(k_grid),
                       repetitions=repetitions, samples=samples, seed=seed)
    runner = runner or LocalCellRunner()
    cells = settings.cells()
    logger.info('Running %d cells (k=%s, %d repetitions)', len(cells),
                ','.join(str(k) for k in settings.k_grid), settings.repetitions)
    results = runner.run(cells, settings)
    return SeparationResult(settings, results)


def separation_report(result):
    """
    For each metric, the smallest grid k at and above which multimodal values
    stay above unimodal ones (None if the largest k overlaps), and the per-k
    margins
    """
    report = {'k_values': list(result.k_values), 'metrics': {}}
    for name in METRIC_NAMES:
        min_k = None
        for k in reversed(result.k_values):
            if result.overlap[name][k]:
                break
            min_k = k
        report['metrics'][name] = {
            'min_separated_k': min_k,
            'margins': dict((str(k), result.margin(name, k)) for k in result.k_values),
            'overlap': dict((str(k), result.overlap[name][k]) for k in result.k_values),
            'unimodal': dict((str(k), result.means[name][k][0]) for k in result.k_values),
            'multimodal': dict((str(k), result.means[name][k][1]) for k in result.k_values),
        }
    return report


def format_separation_report(report):
    lines = ['metric  min-k  margins (k: multimodal - unimodal)']
    for name in METRIC_NAMES:
        entry = report['metrics'][name]
        margins = ', '.join('%s: %.4g' % (k, entry['margins'][str(k)]) for k in report['k_values'])
        lines.append('%-7s %-6s %s' % (name, entry['min_separated_k'], margins))
    return '\n'.join(lines)


def separation_acceptance(result, relaxed_min_k=8):
    """
    MCE and JSD must separate at every k, WAKLD and SEMD at every
    k >= relaxed_min_k, and the WAKLD/JSD margins must grow between
    relaxed_min_k and the largest k
    """
    checks = {}
    for name in (METRICS.MCE, METRICS.JSD):
        checks['%s_separated' % name] = not any(result.overlap[name].values())
    for name in (METRICS.WAKLD, METRICS.SEMD):
        checks['%s_separated_from_k%d' % (name, relaxed_min_k)] = not any(
            overlap for k, overlap in result.overlap[name].items() if k >= relaxed_min_k)
    largest = max(result.k_values)
    if relaxed_min_k in result.k_values and largest > relaxed_min_k:
        for name in (METRICS.WAKLD, METRICS.JSD):
            checks['%s_margin_grows' % name] = \
                result.margin(name, largest) > result.margin(name, relaxed_min_k)
    return checks


def default_sine_grid():
    return np.linspace(-15.0, 15.0, 61)


@dataclass
class SineExperimentResult:
    """
    Metric curves along the input grid: ``run_curves[metric]`` is a
    (runs, grid) array, ``mean_curves[metric]`` its mean over runs.
    ``mixtures`` keeps the (weights, means, stds) predicted on the grid by
    every run, ``mean_predictions`` the (runs, grid) means of these mixtures,
    the point prediction a least squares regression would aim at.
    """
    grid: np.ndarray
    run_curves: dict
    run_seeds: list
    final_nll: list
    mixtures: list = field(default_factory=list, repr=False)
    mean_predictions: np.ndarray = None
    mean_curves: dict = field(init=False)

    def __post_init__(self):
        self.mean_curves = dict((name, np.mean(curves, axis=0))
                                for name, curves in self.run_curves.items())

    def to_csv(self, filename):
        """
        One row per grid point with the mean curves
        """
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('x', ) + METRIC_NAMES)
            for index, x in enumerate(self.grid):
                writer.writerow([repr(float(x))] + [repr(float(self.mean_curves[name][index]))
                                                    for name in METRIC_NAMES])

    def runs_to_csv(self, filename):
        """
        Long format: run, seed, x, metric, value
        """
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('run', 'seed', 'x', 'metric', 'value'))
            for run, seed in enumerate(self.run_seeds):
                for name in METRIC_NAMES:
                    for x, value in zip(self.grid, self.run_curves[name][run]):
                        writer.writerow((run, seed, repr(float(x)), name, repr(float(value))))


def _sine_config(k, epochs, seed, hidden_widths, learning_rate, batch_size, min_std):
    return MdnConfig(input_dim=1, output_dim=1, n_components=k, hidden_widths=hidden_widths,
                     seed=seed, learning_rate=learning_rate, batch_size=batch_size,
                     epochs=epochs, min_std=min_std)


# floor of the predicted stds, well below the spread of the conditionals
SINE_MIN_STD = 0.05


def run_sine_experiment(runs=50, epochs=1000, k=5, eval_grid=None, seed=0, n_points=3000,
                        hidden_widths=(64, 64, 64), learning_rate=1e-3, batch_size=100,
                        min_std=SINE_MIN_STD):
    """
    For each run, train a fresh MDN on a fresh inverse sine dataset (both
    seeded from the run), predict a mixture at each grid point and compute
    the four metrics, JSD by 1-D quadrature.
    """
    if runs < 1:
        raise InvalidArgument('At least one run is needed')
    grid = default_sine_grid() if eval_grid is None else np.asarray(eval_grid, dtype=float)
    run_curves = dict((name, np.zeros((runs, len(grid)))) for name in METRIC_NAMES)
    mean_predictions = np.zeros((runs, len(grid)))
    run_seeds, final_nll, mixtures = [], [], []
    quadrature = EntropyEstimatorConfig('quadrature')

    for run in range(runs):
        run_seed = derive_seed(seed, run)
        data = gen_inverse_sine(n_points, seed=derive_seed(run_seed, 0))
        config = _sine_config(k, epochs, derive_seed(run_seed, 1), hidden_widths,
                              learning_rate, batch_size, min_std)
        try:
            model, history = train(config, data)
        except MixmodeException as e:
            raise MixmodeException('Inverse sine run %d failed (seed=%s): %s' % (run, run_seed, e))
        weights, means, stds = forward_batch(model, grid[:, None])
        for index in range(len(grid)):
            row = all_metrics(Mixture.from_arrays(weights[index], means[index], stds[index]),
                              quadrature)
            for value in row.metric_values():
                run_curves[value.name][run, index] = value.value
        mean_predictions[run] = predict_mean(model, grid[:, None])[:, 0]
        run_seeds.append(run_seed)
        final_nll.append(history.final_nll)
        mixtures.append((weights, means, stds))
        logger.info('[run %d/%d] seed=%s final nll=%.4f', run + 1, runs, run_seed,
                    history.final_nll)

    return SineExperimentResult(grid, run_curves, run_seeds, final_nll, mixtures,
                                mean_predictions)


def sine_acceptance(result, edge=12.0, center=1.0, peak_window=2.0, ratio=0.2):
    """
    Per metric: the mean over |x| > edge must be below ``ratio`` times the
    mean over |x| < center, and the mean curve must peak within
    |x| <= peak_window.
    The inputs carry a unit gaussian noise, so the true conditional keeps a
    second branch up to |x| ~ 12 (about 40% of the mass at |x| = 11), hence
    the default edge.
    """
    grid = result.grid
    checks = {}
    for name in METRIC_NAMES:
        curve = result.mean_curves[name]
        edge_mean = float(np.mean(curve[np.abs(grid) > edge]))
        center_mean = float(np.mean(curve[np.abs(grid) < center]))
        peak_x = float(grid[int(np.argmax(curve))])
        checks[name] = {
            'edge_mean': edge_mean,
            'center_mean': center_mean,
            'peak_x': peak_x,
            'passed': edge_mean < ratio * center_mean and abs(peak_x) <= peak_window,
        }
    return checks


@dataclass
class BaselineComparison:
    """
    Held-out mean NLL of the k-component MDN and of a single Gaussian (k=1)
    model trained on the same data, per run
    """
    run_seeds: list
    mdn_nll: list
    single_nll: list

    def mdn_wins(self):
        return [mdn < single for mdn, single in zip(self.mdn_nll, self.single_nll)]

    def to_csv(self, filename):
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(('run', 'seed', 'mdn_nll', 'single_nll'))
            for run, (seed, mdn, single) in enumerate(zip(self.run_seeds, self.mdn_nll,
                                                          self.single_nll)):
                writer.writerow((run, seed, repr(float(mdn)), repr(float(single))))


def run_baseline_comparison(runs=5, epochs=1000, k=5, seed=0, n_points=3000,
                            hidden_widths=(64, 64, 64), learning_rate=1e-3, batch_size=100,
                            min_std=SINE_MIN_STD):
    """
    Train a k component MDN and a single Gaussian one on the same inverse sine
    data, and compare their NLL on a held-out draw of the dataset
    """
    run_seeds, mdn_nll, single_nll = [], [], []
    for run in range(runs):
        run_seed = derive_seed(seed, run)
        data = gen_inverse_sine(n_points, seed=derive_seed(run_seed, 0))
        held_out = gen_inverse_sine(n_points, seed=derive_seed(run_seed, 2))
        values = []
        for components in (k, 1):
            config = _sine_config(components, epochs, derive_seed(run_seed, 1), hidden_widths,
                                  learning_rate, batch_size, min_std)
            model, _ = train(config, data)
            values.append(batch_nll(model, held_out.inputs, held_out.targets))
        run_seeds.append(run_seed)
        mdn_nll.append(values[0])
        single_nll.append(values[1])
        logger.info('[run %d/%d] held-out nll: k=%d %.4f, k=1 %.4f', run + 1, runs, k,
                    values[0], values[1])
    return BaselineComparison(run_seeds, mdn_nll, single_nll)
