"""
SVG figures of the experiments. Figures are built with the object oriented
matplotlib API (no pyplot global state) and saved without a date, with a
fixed hash salt, so that identical data gives identical files.
"""
import os

import matplotlib
from matplotlib.figure import Figure
import numpy as np

from mixmode import LABELS, METRICS

__all__ = ('METRIC_TITLES', 'metric_curves_svg', 'separation_svg', 'separation_svgs',
           'mixing_coefficients_svg', 'mean_prediction_svg')

matplotlib.rcParams['svg.hashsalt'] = 'mixmode'

METRIC_TITLES = {
    METRICS.MCE: 'Mixing coefficient entropy',
    METRICS.WAKLD: 'Weighted average KL divergence',
    METRICS.SEMD: 'Self earth mover\'s distance',
    METRICS.JSD: 'Jensen-Shannon divergence',
}

LABEL_STYLES = {
    LABELS.UNIMODAL: {'color': 'tab:blue', 'marker': 'o'},
    LABELS.MULTIMODAL: {'color': 'tab:red', 'marker': 's'},
}


def _save(figure, filename):
    figure.savefig(filename, format='svg', metadata={'Date': None})
    return filename


def metric_curves_svg(result, filename):
    """
    The four mean metric curves of an inverse sine experiment along its grid,
    each with the spread of the individual runs
    """
    figure = Figure(figsize=(10, 7))
    axes = figure.subplots(2, 2, sharex=True)
    for ax, name in zip(axes.ravel(), METRICS.values()):
        runs = result.run_curves[name]
        ax.fill_between(result.grid, runs.min(axis=0), runs.max(axis=0),
                        color='tab:gray', alpha=0.3, linewidth=0)
        ax.plot(result.grid, result.mean_curves[name], color='tab:blue')
        ax.set_title(METRIC_TITLES[name])
        ax.set_xlabel('x')
    figure.suptitle('Mean over %d run(s)' % runs.shape[0])
    figure.tight_layout()
    return _save(figure, filename)


def separation_svg(result, metric, filename):
    """
    Unimodal and multimodal mean values of one metric over k
    """
    figure = Figure(figsize=(6, 4))
    ax = figure.subplots()
    k_values = result.k_values
    for index, label in enumerate(LABELS.values()):
        values = [result.means[metric][k][index] for k in k_values]
        ax.plot(k_values, values, label=label, **LABEL_STYLES[label])
    ax.set_title(METRIC_TITLES[metric])
    ax.set_xlabel('number of components k')
    ax.legend()
    figure.tight_layout()
    return _save(figure, filename)


def separation_svgs(result, directory, prefix='separation'):
    """
    One separation figure per metric, return the file names
    """
    return [separation_svg(result, name, os.path.join(directory, '%s_%s.svg' % (prefix, name)))
            for name in METRICS.values()]


def mixing_coefficients_svg(grid, weights, means, stds, filename, data=None):
    """
    Top: mixing coefficient of each component along the input grid.
    Bottom: component means, drawn with a width proportional to pi * sigma,
    over the training data if given.
    ``weights``, ``means`` and ``stds`` are (n, k) arrays (or (n, k, 1)).
    """
    grid = np.ravel(grid)
    weights = np.asarray(weights).reshape(len(grid), -1)
    means = np.asarray(means).reshape(len(grid), -1)
    stds = np.asarray(stds).reshape(len(grid), -1)

    figure = Figure(figsize=(8, 7))
    top, bottom = figure.subplots(2, 1, sharex=True)
    if data is not None:
        bottom.scatter(np.ravel(data.inputs), np.ravel(data.targets), s=2, color='tab:gray',
                       alpha=0.3)
    for component in range(weights.shape[1]):
        line, = top.plot(grid, weights[:, component], label='component %d' % component)
        widths = 10 * weights[:, component] * stds[:, component]
        bottom.scatter(grid, means[:, component], s=np.maximum(widths, 0.1) ** 2,
                       color=line.get_color())
    top.set_ylabel('mixing coefficient')
    top.legend(fontsize='small')
    bottom.set_ylabel('component mean')
    bottom.set_xlabel('x')
    figure.tight_layout()
    return _save(figure, filename)


def mean_prediction_svg(result, filename, data=None):
    """
    Mean of the predicted mixtures along the grid, for every run of an
    inverse sine experiment, over the training data if given. This single
    curve averages the branches where the data is multimodal.
    """
    figure = Figure(figsize=(8, 4))
    ax = figure.subplots()
    if data is not None:
        ax.scatter(np.ravel(data.inputs), np.ravel(data.targets), s=2, color='tab:gray',
                   alpha=0.3)
    for run, predictions in enumerate(result.mean_predictions):
        ax.plot(result.grid, predictions, color='tab:red', alpha=0.6,
                label='mean prediction' if not run else None)
    ax.set_xlabel('x')
    ax.set_ylabel('t')
    ax.legend()
    figure.tight_layout()
    return _save(figure, filename)
