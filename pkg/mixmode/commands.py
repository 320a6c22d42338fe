"""
Sub-commands of the ``mixmode`` command line tool. Each one is an optparse
based class in the same spirit as ``mixmode.workers.WorkerConfig``: options
are declared in ``option_list``, checked in ``manage_options`` (through
``parser.error``, exiting with status 1), then ``execute`` does the work and
returns the exit status.

Every command writes a ``config.json`` in its output directory, with the
resolved options, so that a run can be replayed with ``--config``.
"""
import logging
import os
import sys
from optparse import make_option, OptionParser

from setproctitle import setproctitle

from mixmode import EXIT_CODES, METRICS, OracleFailure
from mixmode.bench import (BenchSettings, LocalCellRunner, run_worldmodel_bench,
                           separation_report, format_separation_report, separation_acceptance,
                           run_sine_experiment, sine_acceptance, run_baseline_comparison,
                           SineExperimentResult)
from mixmode.datasets import (INVERSE_SINE, LATENT_ENV, LatentShiftEnv, gen_inverse_sine,
                              gen_transitions, save_dataset, save_transitions, load_dataset)
from mixmode.gmm import STD_FLOOR, EntropyEstimatorConfig, Mixture, load_mixture
from mixmode.mdn import MdnConfig, train, save_checkpoint, load_checkpoint, forward_batch
from mixmode.metrics import REPORT_COLUMNS, evaluate_mixtures
from mixmode.plots import (metric_curves_svg, separation_svgs, mixing_coefficients_svg,
                           mean_prediction_svg)
from mixmode.oracle import run_oracle_suite
from mixmode.utils import (derive_seed, ensure_directory, parse_grid, parse_int_list,
                           read_json, write_json)
from mixmode.version import EXACT_VERSION, FORMAT_VERSION
from mixmode.workers import (LOGGER_NAME, QueueCellRunner, set_log_handler, parse_logger_level,
                             parse_database)

__all__ = ('CommandParser', 'BaseCommand', 'GenDataCommand', 'TrainMdnCommand',
           'EvalMetricsCommand', 'BenchCommand', 'OracleCheckCommand', 'COMMANDS')

logger = logging.getLogger(LOGGER_NAME)


class CommandParser(OptionParser):
    """
    An OptionParser exiting with the usage status code on errors
    """
    def error(self, msg):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CODES.USAGE, '%s: error: %s\n' % (self.get_prog_name(), msg))


class BaseCommand(object):
    name = None
    help = None
    # positional arguments, for the usage line
    arguments = ''

    # options of every command
    base_option_list = (
        make_option('--seed', type='int', dest='seed',
            help='Base seed of the run, e.g. --seed=1 (default to 0)'),
        make_option('--out', action='store', dest='out',
            help='Output directory, e.g. --out=results (default to the current directory)'),
        make_option('--config', action='store', dest='config',
            help='A json file with default values for the options (as written in config.json '
                 'by a previous run), explicit options override them, e.g. --config=config.json'),
        make_option('--logger-level', action='store', dest='logger_level',
            help='The level to use for logging, e.g. --logger-level=DEBUG'),
        make_option('--no-title', action='store_false', dest='update_title', default=True,
            help="Do not update the title of the process, e.g. --no-title"),
    )
    option_list = ()

    # defaults not set on the options, to know which ones were passed explicitly
    defaults = {'seed': 0, 'out': '.'}

    def __init__(self, argv=None, prog_name='mixmode'):
        self.argv = list(sys.argv[2:] if argv is None else argv)
        self.prog_name = '%s %s' % (prog_name, self.name)
        self.manage_options()

    def usage(self):
        return '%%prog [options] %s\n\n%s' % (self.arguments, self.help)

    def create_parser(self):
        return CommandParser(prog=self.prog_name,
                             usage=self.usage(),
                             version='%%prog %s' % EXACT_VERSION,
                             option_list=self.base_option_list + self.option_list)

    def _config_defaults(self, filename):
        """
        Read the option defaults of a config file, either a config.json
        written by a previous run or a plain {option: value} object
        """
        try:
            data = read_json(filename)
        except (OSError, ValueError) as e:
            self.parser.error('Unable to read the config file %s: %s' % (filename, e))
        if not isinstance(data, dict):
            self.parser.error('The config file %s must hold a json object' % filename)
        values = data.get('options', data)
        known = set(option.dest for option in self.parser.option_list if option.dest)
        unknown = set(values) - known
        if unknown:
            self.parser.error('Unknown option(s) in %s: %s' % (filename, ', '.join(sorted(unknown))))
        return values

    def manage_options(self):
        self.parser = self.create_parser()
        options, self.args = self.parser.parse_args(self.argv)
        defaults = dict(self.defaults)
        if options.config:
            defaults.update(self._config_defaults(options.config))
            defaults.pop('config', None)
        self.parser.set_defaults(**defaults)
        self.options, self.args = self.parser.parse_args(self.argv)

        if self.options.logger_level:
            try:
                self.options.logger_level = parse_logger_level(self.options.logger_level)
            except ValueError:
                self.parser.error('Invalid logger-level %s' % self.options.logger_level)

        if self.options.seed < 0:
            self.parser.error('The seed must be a positive integer (got %s)' % self.options.seed)

        self.check_options()

    def check_options(self):
        """
        Validate the command specific options, using self.parser.error
        """

    def option_error(self, message):
        self.parser.error(message)

    def resolved_options(self):
        """
        Options to echo in config.json
        """
        ignored = ('config', 'logger_level', 'update_title')
        return dict((name, value) for name, value in vars(self.options).items()
                    if name not in ignored)

    def write_config(self):
        write_json(self.output('config.json'), {
            'command': self.name,
            'arguments': self.args,
            'options': self.resolved_options(),
            'format_version': FORMAT_VERSION,
            'version': EXACT_VERSION,
        })

    def output(self, filename):
        return os.path.join(self.options.out, filename)

    def update_proc_title(self, status, details=None):
        if not self.options.update_title:
            return
        parts = ['mixmode-%s' % self.name, '[%s]' % status]
        if details:
            parts.append(details)
        setproctitle(' '.join(parts))

    def prepare_logging(self):
        set_log_handler(logger)
        if self.options.logger_level is not None:
            logger.setLevel(self.options.logger_level)
        elif logger.level == logging.NOTSET:
            logger.setLevel(logging.INFO)

    def execute(self):
        """
        Run the command and return the exit status
        """
        self.prepare_logging()
        ensure_directory(self.options.out)
        self.write_config()
        self.update_proc_title('running')
        status = self.run()
        self.update_proc_title('done')
        return status

    def run(self):
        raise NotImplementedError


class GenDataCommand(BaseCommand):
    name = 'gen-data'
    help = ('Generate a dataset: "inverse-sine" (input_0, target_0 columns) or "latent-env" '
            '(sample_id, state_*, action, next_state_*, label columns), written as '
            'dataset.csv with its metadata in dataset.json')
    arguments = '%s|%s' % (INVERSE_SINE, LATENT_ENV)

    option_list = (
        make_option('--n', type='int', dest='n',
            help='Number of samples, e.g. --n=3000'),
        make_option('--noise-std', type='float', dest='noise_std',
            help='Std of the noise added to the inverse sine outputs, e.g. --noise-std=1'),
        make_option('--mask-fraction', type='float', dest='mask_fraction',
            help='Fraction of masked (multimodal) transitions, e.g. --mask-fraction=0.5'),
        make_option('--trajectory-length', type='int', dest='trajectory_length',
            help='Number of transitions per trajectory, e.g. --trajectory-length=20'),
        make_option('--d-latent', type='int', dest='d_latent',
            help='Dimension of the latent states, e.g. --d-latent=8'),
        make_option('--action-probabilities', action='store', dest='action_probabilities',
            help='Weights of the left,right,jump,noop actions, normalized, '
                 'e.g. --action-probabilities=.15,.32,.30,.50'),
    )
    defaults = dict(BaseCommand.defaults, n=3000, noise_std=1.0, mask_fraction=0.5,
                    trajectory_length=20, d_latent=8, action_probabilities=None)

    def check_options(self):
        if len(self.args) != 1 or self.args[0] not in (INVERSE_SINE, LATENT_ENV):
            self.option_error('One generator is needed: %s or %s' % (INVERSE_SINE, LATENT_ENV))
        self.generator = self.args[0]
        if self.options.n < 1:
            self.option_error('The n argument (%s) must be a positive integer' % self.options.n)
        if self.options.noise_std < 0:
            self.option_error('The noise-std argument must be positive or 0')
        if not 0 <= self.options.mask_fraction <= 1:
            self.option_error('The mask-fraction argument must be in [0, 1]')
        if self.options.trajectory_length < 1 or self.options.d_latent < 1:
            self.option_error('The trajectory-length and d-latent arguments must be positive')
        self.probabilities = None
        if self.options.action_probabilities:
            try:
                self.probabilities = [float(part) for part in
                                      str(self.options.action_probabilities).split(',')]
            except ValueError:
                self.option_error('Invalid action-probabilities %s'
                                  % self.options.action_probabilities)

    def run(self):
        filename = self.output('dataset.csv')
        if self.generator == INVERSE_SINE:
            dataset = gen_inverse_sine(self.options.n, self.options.seed, self.options.noise_std)
            save_dataset(dataset, filename)
        else:
            env = LatentShiftEnv(d_latent=self.options.d_latent)
            samples = gen_transitions(env, self.options.n, self.options.mask_fraction,
                                      seed=self.options.seed,
                                      trajectory_length=self.options.trajectory_length,
                                      action_probabilities=self.probabilities)
            save_transitions(samples, filename, meta={
                'generator': LATENT_ENV,
                'n': self.options.n,
                'seed': self.options.seed,
                'mask_fraction': self.options.mask_fraction,
                'trajectory_length': self.options.trajectory_length,
                'action_probabilities': self.probabilities,
                'env': env.to_dict(),
            })
        logger.info('%d samples written to %s', self.options.n, filename)
        return EXIT_CODES.SUCCESS


class TrainMdnCommand(BaseCommand):
    name = 'train-mdn'
    help = ('Train an MDN on a dataset written by gen-data; writes checkpoint.json and '
            'history.csv (epoch, nll columns)')

    option_list = (
        make_option('--data', action='store', dest='data',
            help='The dataset csv file, e.g. --data=dataset.csv'),
        make_option('--components', type='int', dest='components',
            help='Number of mixture components, e.g. --components=5'),
        make_option('--epochs', type='int', dest='epochs',
            help='Number of training epochs, e.g. --epochs=1000'),
        make_option('--hidden', action='store', dest='hidden',
            help='Comma separated widths of the hidden layers, e.g. --hidden=64,64,64'),
        make_option('--learning-rate', type='float', dest='learning_rate',
            help='Adam learning rate, e.g. --learning-rate=0.001'),
        make_option('--batch-size', type='int', dest='batch_size',
            help='Minibatch size, e.g. --batch-size=100'),
        make_option('--min-std', type='float', dest='min_std',
            help='Lower bound of the predicted standard deviations, e.g. --min-std=0.05 '
                 '(default to 1e-7)'),
    )
    defaults = dict(BaseCommand.defaults, data=None, components=5, epochs=1000,
                    hidden='64,64,64', learning_rate=1e-3, batch_size=100, min_std=STD_FLOOR)

    def check_options(self):
        if not self.options.data:
            self.option_error('The data argument is required')
        if self.options.components < 1 or self.options.epochs < 0 \
                or self.options.batch_size < 1 or not self.options.learning_rate > 0 \
                or not self.options.min_std > 0:
            self.option_error('components, batch-size, learning-rate and min-std must be '
                              'positive, epochs positive or 0')
        try:
            self.hidden = parse_int_list(self.options.hidden)
        except ValueError as e:
            self.option_error(str(e))
        if not self.hidden or min(self.hidden) < 1:
            self.option_error('Invalid hidden widths %s' % self.options.hidden)
        if isinstance(self.options.hidden, (list, tuple)):
            self.options.hidden = ','.join(str(width) for width in self.hidden)

    def run(self):
        # raises FileNotFoundError, reported by the script with the runtime status
        dataset = load_dataset(self.options.data)
        config = MdnConfig(
            input_dim=dataset.inputs.shape[1],
            output_dim=dataset.targets.shape[1],
            n_components=self.options.components,
            hidden_widths=self.hidden,
            seed=self.options.seed,
            learning_rate=self.options.learning_rate,
            batch_size=self.options.batch_size,
            epochs=self.options.epochs,
            min_std=self.options.min_std,
        )
        logger.info('Training a %d components MDN on %d samples for %d epochs',
                    config.n_components, len(dataset), config.epochs)
        model, history = train(config, dataset)
        save_checkpoint(model, self.output('checkpoint.json'))
        history.to_csv(self.output('history.csv'))
        logger.info('Final nll: %.6f', history.final_nll)
        return EXIT_CODES.SUCCESS


class EvalMetricsCommand(BaseCommand):
    name = 'eval-metrics'
    help = ('Compute the four metrics of the mixtures predicted by a checkpoint on a grid or '
            'a dataset, or of mixtures read from a json file; writes metrics.csv with the '
            'columns %s' % ', '.join(REPORT_COLUMNS))

    option_list = (
        make_option('--checkpoint', action='store', dest='checkpoint',
            help='An MDN checkpoint, e.g. --checkpoint=checkpoint.json'),
        make_option('--mixtures', action='store', dest='mixtures',
            help='A json file with one mixture or a list of mixtures, e.g. --mixtures=m.json'),
        make_option('--grid', action='store', dest='grid',
            help='Input grid lower:upper:points, for one dimensional inputs, '
                 'e.g. --grid=-15:15:61'),
        make_option('--data', action='store', dest='data',
            help='Evaluate on the inputs of this dataset csv, e.g. --data=dataset.csv'),
        make_option('--jsd-method', type='choice', choices=EntropyEstimatorConfig.METHODS,
            dest='jsd_method',
            help='Entropy estimator of the JSD: auto, mc or quadrature, e.g. --jsd-method=mc'),
        make_option('--jsd-samples', type='int', dest='jsd_samples',
            help='Monte Carlo samples per mixture for the JSD, e.g. --jsd-samples=4096'),
        make_option('--plot', action='store_true', dest='plot',
            help='Also draw the metric curves in metrics.svg (grid mode only), e.g. --plot'),
    )
    defaults = dict(BaseCommand.defaults, checkpoint=None, mixtures=None, grid=None, data=None,
                    jsd_method='auto', jsd_samples=4096, plot=False)

    def check_options(self):
        if bool(self.options.checkpoint) == bool(self.options.mixtures):
            self.option_error('Exactly one of checkpoint and mixtures is needed')
        if self.options.checkpoint and bool(self.options.grid) == bool(self.options.data):
            self.option_error('A checkpoint needs exactly one of grid and data')
        if self.options.jsd_samples < 1:
            self.option_error('The jsd-samples argument must be a positive integer')
        self.grid = None
        if self.options.grid:
            try:
                self.grid = parse_grid(self.options.grid)
            except ValueError as e:
                self.option_error(str(e))

    def _mixtures(self):
        """
        Return the mixtures to evaluate with their sample ids and labels
        """
        if self.options.mixtures:
            mixtures = load_mixture(self.options.mixtures)
            if isinstance(mixtures, Mixture):
                mixtures = [mixtures]
            return mixtures, list(range(len(mixtures))), None

        model = load_checkpoint(self.options.checkpoint)
        if self.grid is not None:
            inputs, sample_ids, labels = self.grid[:, None], list(range(len(self.grid))), None
        else:
            dataset = load_dataset(self.options.data)
            inputs = dataset.inputs
            sample_ids = dataset.meta.get('sample_ids', list(range(len(dataset))))
            labels = dataset.meta.get('labels')
        self.model = model
        self.predictions = forward_batch(model, inputs)
        weights, means, stds = self.predictions
        return ([Mixture.from_arrays(w, m, s) for w, m, s in zip(weights, means, stds)],
                sample_ids, labels)

    def run(self):
        self.model = None
        mixtures, sample_ids, labels = self._mixtures()
        cfg = EntropyEstimatorConfig(self.options.jsd_method, self.options.jsd_samples,
                                     self.options.seed)
        seeds = [derive_seed(self.options.seed, index) for index in range(len(mixtures))]
        report = evaluate_mixtures(mixtures, cfg, seeds=seeds, labels=labels,
                                   sample_ids=sample_ids)
        report.to_csv(self.output('metrics.csv'))
        logger.info('Metrics of %d mixture(s) written to %s', len(mixtures),
                    self.output('metrics.csv'))

        if self.options.plot and self.grid is not None:
            curves = SineExperimentResult(self.grid,
                                          dict((name, report.column(name)[None, :])
                                               for name in METRICS.values()),
                                          [self.options.seed], [float('nan')])
            metric_curves_svg(curves, self.output('metrics.svg'))
            mixing_coefficients_svg(self.grid, *self.predictions,
                                    filename=self.output('mixing_coefficients.svg'))
        return EXIT_CODES.SUCCESS


class BenchCommand(BaseCommand):
    name = 'bench'
    help = ('Run an experiment. "worldmodel" (default): the unimodal vs multimodal separation '
            'benchmark over k, writing separation.csv (k, repetition, label, metric, value '
            'columns), summary.json and one separation_<metric>.svg per metric. "sine": the '
            'inverse sine study, writing sine_curves.csv (x and one column per metric), '
            'sine_runs.csv (run, seed, x, metric, value columns), summary.json and svg plots.')

    option_list = (
        make_option('--experiment', type='choice', choices=('worldmodel', 'sine'),
            dest='experiment', help='The experiment to run, e.g. --experiment=sine'),
        make_option('--k', action='store', dest='k',
            help='Comma separated numbers of components, e.g. --k=2,5,10 (worldmodel)'),
        make_option('--repetitions', type='int', dest='repetitions',
            help='Repetitions per k, e.g. --repetitions=3 (worldmodel)'),
        make_option('--samples', type='int', dest='samples',
            help='Held-out transitions per label, e.g. --samples=2000 (worldmodel)'),
        make_option('--train-samples', type='int', dest='train_samples',
            help='Training transitions per cell, e.g. --train-samples=8000 (worldmodel)'),
        make_option('--jsd-samples', type='int', dest='jsd_samples',
            help='Monte Carlo samples per mixture for the JSD, e.g. --jsd-samples=4096 '
                 '(worldmodel)'),
        make_option('--runs', type='int', dest='runs',
            help='Number of runs, e.g. --runs=5 (sine)'),
        make_option('--components', type='int', dest='components',
            help='Number of mixture components, e.g. --components=5 (sine)'),
        make_option('--grid', action='store', dest='grid',
            help='Evaluation grid lower:upper:points, e.g. --grid=-15:15:61 (sine)'),
        make_option('--baseline', action='store_true', dest='baseline',
            help='Also compare the held-out nll with a single gaussian model (sine)'),
        make_option('--epochs', type='int', dest='epochs',
            help='Training epochs, e.g. --epochs=100 (default to 100 for worldmodel, '
                 '1000 for sine)'),
        make_option('--threads', type='int', dest='threads',
            help='Local processes running cells, capped by MIXMODE_THREADS, e.g. --threads=4'),
        make_option('--database', action='store', dest='database',
            help='Run the cells through the redis queue of this database (host:port:db), '
                 'shared with mixmode-worker processes, e.g. --database=localhost:6379:0'),
        make_option('--queue-name', action='store', dest='queue_name',
            help='Name of the redis queue, e.g. --queue-name=mixmode-bench'),
        make_option('--check', action='store_true', dest='check',
            help='Evaluate the acceptance criteria, exit with status 3 if one fails'),
    )
    defaults = dict(BaseCommand.defaults, experiment='worldmodel', k='2,3,4,5,6,8,10,15,20,30,50',
                    repetitions=3, samples=2000, train_samples=8000, jsd_samples=4096, runs=5,
                    components=5, grid='-15:15:61', baseline=False, epochs=None, threads=None,
                    database=None, queue_name='mixmode-bench', check=False)

    def check_options(self):
        options = self.options
        try:
            self.k_grid = parse_int_list(options.k)
            self.grid = parse_grid(options.grid)
        except ValueError as e:
            self.option_error(str(e))
        if isinstance(options.k, (list, tuple)):
            options.k = ','.join(str(k) for k in self.k_grid)
        if not self.k_grid or min(self.k_grid) < 1:
            self.option_error('The k argument needs positive numbers of components')
        for name in ('repetitions', 'samples', 'train_samples', 'jsd_samples', 'runs',
                     'components'):
            if getattr(options, name) < 1:
                self.option_error('The %s argument must be a positive integer'
                                  % name.replace('_', '-'))
        if options.epochs is None:
            options.epochs = 1000 if options.experiment == 'sine' else BenchSettings.epochs
        if options.epochs < 1:
            self.option_error('The epochs argument must be a positive integer')
        if options.threads is not None and options.threads < 1:
            self.option_error('The threads argument must be a positive integer')
        self.database = None
        if options.database:
            try:
                self.database = parse_database(options.database)
            except ValueError:
                self.option_error('Invalid database "%s", expected host:port:db'
                                  % options.database)

    def on_cell_done(self, result, done, total):
        logger.info('Cell k=%d rep=%d done (%d/%d)', result.k, result.repetition, done, total)
        self.update_proc_title('running', 'cells=%d/%d' % (done, total))

    def run(self):
        if self.options.experiment == 'sine':
            return self.run_sine()
        return self.run_worldmodel()

    def run_worldmodel(self):
        options = self.options
        settings = BenchSettings(k_grid=self.k_grid, repetitions=options.repetitions,
                                 samples=options.samples, train_samples=options.train_samples,
                                 epochs=options.epochs, jsd_samples=options.jsd_samples,
                                 seed=options.seed)
        if self.database:
            runner = QueueCellRunner(self.database, options.queue_name,
                                     on_cell_done=self.on_cell_done)
        else:
            runner = LocalCellRunner(options.threads, on_cell_done=self.on_cell_done)
        self.update_proc_title('running', 'cells=0/%d' % len(settings.cells()))

        result = run_worldmodel_bench(settings.k_grid, settings.repetitions, settings.samples,
                                      settings.seed, settings=settings, runner=runner)
        result.to_csv(self.output('separation.csv'))
        separation_svgs(result, options.out)

        report = separation_report(result)
        summary = {'settings': settings.to_dict(), 'separation': report,
                   'cells': [cell.to_dict() for cell in result.cells]}
        status = EXIT_CODES.SUCCESS
        if options.check:
            checks = separation_acceptance(result)
            summary['acceptance'] = checks
            if not all(checks.values()):
                status = EXIT_CODES.FAILURE
        write_json(self.output('summary.json'), summary)
        print(format_separation_report(report))
        if status != EXIT_CODES.SUCCESS:
            logger.error('Acceptance failed: %s', ', '.join(
                name for name, passed in summary['acceptance'].items() if not passed))
        return status

    def run_sine(self):
        options = self.options
        result = run_sine_experiment(options.runs, options.epochs, options.components,
                                     self.grid, options.seed)
        result.to_csv(self.output('sine_curves.csv'))
        result.runs_to_csv(self.output('sine_runs.csv'))
        metric_curves_svg(result, self.output('sine_curves.svg'))
        data = gen_inverse_sine(seed=derive_seed(result.run_seeds[0], 0))
        mixing_coefficients_svg(result.grid, *result.mixtures[0],
                                filename=self.output('mixing_coefficients.svg'), data=data)
        mean_prediction_svg(result, self.output('mean_prediction.svg'), data=data)

        summary = {'runs': options.runs, 'epochs': options.epochs, 'k': options.components,
                   'run_seeds': result.run_seeds, 'final_nll': result.final_nll}
        status = EXIT_CODES.SUCCESS
        if options.baseline:
            comparison = run_baseline_comparison(options.runs, options.epochs,
                                                 options.components, options.seed)
            comparison.to_csv(self.output('baseline.csv'))
            summary['baseline'] = {'mdn_nll': comparison.mdn_nll,
                                   'single_nll': comparison.single_nll,
                                   'mdn_wins': comparison.mdn_wins()}
        if options.check:
            checks = sine_acceptance(result)
            summary['acceptance'] = checks
            passed = all(check['passed'] for check in checks.values())
            if options.baseline:
                passed = passed and all(summary['baseline']['mdn_wins'])
            if not passed:
                status = EXIT_CODES.FAILURE
                logger.error('Acceptance failed, see %s', self.output('summary.json'))
        write_json(self.output('summary.json'), summary)
        return status


class OracleCheckCommand(BaseCommand):
    name = 'oracle-check'
    help = ('Compare the closed forms and estimators with slow numerical references over '
            'random parameter draws; exit with status 3 on any tolerance violation')

    option_list = (
        make_option('--draws', type='int', dest='draws',
            help='Number of random parameter draws, e.g. --draws=1000'),
        make_option('--inject-kl-fault', action='store_const', const=1e-3, dest='kl_perturbation',
            help='Perturb the closed form KL by 1e-3, to check that faults are detected'),
    )
    defaults = dict(BaseCommand.defaults, draws=1000, kl_perturbation=0.0)

    def check_options(self):
        if self.options.draws < 1:
            self.option_error('The draws argument must be a positive integer')

    def run(self):
        report = run_oracle_suite(self.options.draws, self.options.seed,
                                  kl_perturbation=self.options.kl_perturbation)
        write_json(self.output('oracle.json'), report.to_dict())
        print(report.summary())
        if not report.passed:
            raise OracleFailure('%d oracle violation(s), see %s'
                                % (len(report.violations), self.output('oracle.json')))
        return EXIT_CODES.SUCCESS


COMMANDS = dict((command.name, command) for command in (
    GenDataCommand, TrainMdnCommand, EvalMetricsCommand, BenchCommand, OracleCheckCommand))
