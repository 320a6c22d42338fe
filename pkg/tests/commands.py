import csv
import json
import os

from mixmode import EXIT_CODES, OracleFailure
from mixmode.commands import COMMANDS, GenDataCommand, BenchCommand, OracleCheckCommand, TrainMdnCommand
from mixmode.gmm import Mixture, mixture_to_dict
from mixmode.scripts.cli import main
from mixmode.utils import write_json

from .base import MixmodeBaseTest


class CommandsBaseTests(MixmodeBaseTest):

    def setUp(self):
        super(CommandsBaseTests, self).setUp()
        self.directory = self.make_directory()

    def path(self, *parts):
        return os.path.join(self.directory, *parts)

    def run_command(self, args, code=EXIT_CODES.SUCCESS, out='run', in_stdout=None,
                    in_stderr=None):
        """
        Run the mixmode script with ``args`` (a string), in its own output
        directory, and check the exit status
        """
        argv = args.split(' ') + ['--out=%s' % self.path(out), '--no-title']
        with self.assertSystemExit(in_stdout=in_stdout, in_stderr=in_stderr, code=code):
            main(argv)
        return self.path(out)

    def read_csv(self, filename):
        with open(filename) as f:
            return list(csv.reader(f))


class ScriptTests(CommandsBaseTests):

    def test_no_command(self):
        with self.assertSystemExit(in_stdout='usage: mixmode <command>', code=EXIT_CODES.USAGE):
            main([])

    def test_help(self):
        with self.assertSystemExit(in_stdout='oracle-check', code=EXIT_CODES.SUCCESS):
            main(['--help'])

    def test_unknown_command(self):
        with self.assertSystemExit(in_stderr='unknown command "fly"', code=EXIT_CODES.USAGE):
            main(['fly'])

    def test_command_help(self):
        with self.assertSystemExit(in_stdout='--mask-fraction', code=0):
            main(['gen-data', '--help'])

    def test_all_commands_are_registered(self):
        self.assertEqual(sorted(COMMANDS),
                         ['bench', 'eval-metrics', 'gen-data', 'oracle-check', 'train-mdn'])


class GenDataTests(CommandsBaseTests):

    def test_inverse_sine(self):
        out = self.run_command('gen-data inverse-sine --n=3000 --seed=1')
        lines = self.read_file(os.path.join(out, 'dataset.csv')).splitlines()
        self.assertEqual(len(lines), 3001)
        self.assertEqual(lines[0], 'input_0,target_0')

        config = json.loads(self.read_file(os.path.join(out, 'config.json')))
        self.assertEqual(config['command'], 'gen-data')
        self.assertEqual(config['arguments'], ['inverse-sine'])
        self.assertEqual(config['options']['n'], 3000)
        self.assertEqual(config['options']['seed'], 1)

    def test_same_seed_same_bytes(self):
        first = self.run_command('gen-data inverse-sine --n=200 --seed=4', out='first')
        second = self.run_command('gen-data inverse-sine --n=200 --seed=4', out='second')
        self.assertEqual(self.read_file(os.path.join(first, 'dataset.csv'), 'rb'),
                         self.read_file(os.path.join(second, 'dataset.csv'), 'rb'))

    def test_latent_env(self):
        out = self.run_command('gen-data latent-env --n=40 --d-latent=3 --mask-fraction=0.25')
        rows = self.read_csv(os.path.join(out, 'dataset.csv'))
        self.assertEqual(len(rows), 41)
        self.assertEqual(rows[0][:2], ['sample_id', 'state_0'])
        self.assertEqual(sum(1 for row in rows[1:] if row[-1] == 'multimodal'), 10)

    def test_usage_errors(self):
        for args in ('gen-data inverse-sine --n=0', 'gen-data', 'gen-data circles',
                     'gen-data latent-env --mask-fraction=2', 'gen-data inverse-sine --seed=-1'):
            self.run_command(args, code=EXIT_CODES.USAGE, in_stderr='error')

    def test_replay_a_config(self):
        first = self.run_command('gen-data inverse-sine --n=50 --seed=3 --noise-std=0.5',
                                 out='first')
        second = self.run_command('gen-data inverse-sine --config=%s'
                                  % os.path.join(first, 'config.json'), out='second')
        self.assertEqual(self.read_file(os.path.join(first, 'dataset.csv')),
                         self.read_file(os.path.join(second, 'dataset.csv')))

        # explicit options win
        third = self.run_command('gen-data inverse-sine --n=20 --config=%s'
                                 % os.path.join(first, 'config.json'), out='third')
        self.assertEqual(len(self.read_file(os.path.join(third, 'dataset.csv')).splitlines()),
                         21)

    def test_config_with_unknown_option(self):
        filename = self.path('config.json')
        write_json(filename, {'n': 10, 'colour': 'blue'})
        self.run_command('gen-data inverse-sine --config=%s' % filename,
                         code=EXIT_CODES.USAGE, in_stderr='Unknown option(s)')

    def test_defaults(self):
        command = GenDataCommand(['inverse-sine'])
        self.assertEqual(command.options.n, 3000)
        self.assertEqual(command.options.seed, 0)
        self.assertEqual(command.options.out, '.')


class TrainAndEvalTests(CommandsBaseTests):

    def setUp(self):
        super(TrainAndEvalTests, self).setUp()
        self.data = os.path.join(self.run_command('gen-data inverse-sine --n=60 --seed=2',
                                                  out='data'), 'dataset.csv')

    def train(self):
        return self.run_command('train-mdn --data=%s --epochs=1 --components=3 --hidden=4 '
                                '--batch-size=20' % self.data, out='model')

    def test_train(self):
        out = self.train()
        history = self.read_csv(os.path.join(out, 'history.csv'))
        self.assertEqual(history[0], ['epoch', 'nll'])
        self.assertEqual(len(history), 2)
        checkpoint = json.loads(self.read_file(os.path.join(out, 'checkpoint.json')))
        self.assertEqual(checkpoint['kind'], 'mdn-checkpoint')

    def test_train_errors(self):
        self.run_command('train-mdn --data=%s' % self.path('missing.csv'),
                         code=EXIT_CODES.RUNTIME)
        self.run_command('train-mdn', code=EXIT_CODES.USAGE, in_stderr='data argument')
        self.run_command('train-mdn --data=%s --hidden=4,x' % self.data, code=EXIT_CODES.USAGE,
                         in_stderr='error')
        self.run_command('train-mdn --data=%s --min-std=0' % self.data, code=EXIT_CODES.USAGE,
                         in_stderr='min-std must be positive')

    def test_min_std(self):
        self.assertEqual(TrainMdnCommand(['--data=%s' % self.data]).options.min_std, 1e-7)
        out = self.run_command('train-mdn --data=%s --epochs=1 --components=3 --hidden=4 '
                               '--min-std=0.5' % self.data, out='model')
        checkpoint = json.loads(self.read_file(os.path.join(out, 'checkpoint.json')))
        self.assertEqual(checkpoint['config']['min_std'], 0.5)

    def test_eval_on_a_grid(self):
        model = self.train()
        out = self.run_command('eval-metrics --checkpoint=%s --grid=-15:15:7 --plot'
                               % os.path.join(model, 'checkpoint.json'), out='eval')
        rows = self.read_csv(os.path.join(out, 'metrics.csv'))
        self.assertEqual(rows[0], ['sample_id', 'k', 'label', 'mce', 'wakld', 'semd', 'jsd',
                                   'jsd_n_samples', 'seed'])
        self.assertEqual(len(rows), 8)
        self.assertEqual(set(row[1] for row in rows[1:]), {'3'})
        self.assertTrue(os.path.exists(os.path.join(out, 'metrics.svg')))
        self.assertTrue(os.path.exists(os.path.join(out, 'mixing_coefficients.svg')))

    def test_eval_on_a_dataset(self):
        model = self.train()
        out = self.run_command('eval-metrics --checkpoint=%s --data=%s --jsd-method=mc '
                               '--jsd-samples=32' % (os.path.join(model, 'checkpoint.json'),
                                                     self.data), out='eval')
        rows = self.read_csv(os.path.join(out, 'metrics.csv'))
        self.assertEqual(len(rows), 61)
        # one draw per component at least, each rounded from 32 * pi_i
        for row in rows[1:]:
            self.assertLessEqual(abs(int(row[7]) - 32), 3)

    def test_eval_mixtures(self):
        filename = self.path('mixtures.json')
        write_json(filename, [
            mixture_to_dict(Mixture.single([0.0], [1.0])),
            mixture_to_dict(Mixture.from_arrays([0.5, 0.5], [-10.0, 10.0], [1.0, 1.0])),
        ])
        out = self.run_command('eval-metrics --mixtures=%s' % filename, out='eval')
        rows = self.read_csv(os.path.join(out, 'metrics.csv'))
        self.assertEqual(len(rows), 3)
        single, separated = rows[1], rows[2]
        self.assertEqual([float(value) for value in single[3:7]], [0.0, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(float(separated[3]), 1.0, delta=1e-12)
        self.assertAlmostEqual(float(separated[6]), 0.693147, delta=1e-4)

    def test_eval_usage_errors(self):
        self.run_command('eval-metrics', code=EXIT_CODES.USAGE, in_stderr='Exactly one of')
        self.run_command('eval-metrics --checkpoint=x.json', code=EXIT_CODES.USAGE,
                         in_stderr='exactly one of grid and data')
        self.run_command('eval-metrics --checkpoint=x.json --grid=1:0:3',
                         code=EXIT_CODES.USAGE, in_stderr='Invalid grid')


class BenchCommandTests(CommandsBaseTests):

    def test_default_epochs(self):
        self.assertEqual(BenchCommand([]).options.epochs, 100)
        self.assertEqual(BenchCommand(['--experiment=sine']).options.epochs, 1000)

    def test_worldmodel(self):
        out = self.run_command('bench --k=3,2 --repetitions=1 --samples=5 --train-samples=20 '
                               '--epochs=1 --jsd-samples=16 --threads=1', in_stdout='')
        rows = self.read_csv(os.path.join(out, 'separation.csv'))
        self.assertEqual(rows[0], ['k', 'repetition', 'label', 'metric', 'value'])
        self.assertEqual(len(rows), 1 + 2 * 2 * 4)
        summary = json.loads(self.read_file(os.path.join(out, 'summary.json')))
        self.assertEqual(summary['settings']['k_grid'], [2, 3])
        self.assertEqual(len(summary['cells']), 2)
        for metric in ('mce', 'wakld', 'semd', 'jsd'):
            self.assertTrue(os.path.exists(os.path.join(out, 'separation_%s.svg' % metric)))

    def test_sine(self):
        out = self.run_command('bench --experiment=sine --runs=1 --epochs=1 --components=2 '
                               '--grid=-1:1:3')
        rows = self.read_csv(os.path.join(out, 'sine_curves.csv'))
        self.assertEqual(rows[0], ['x', 'mce', 'wakld', 'semd', 'jsd'])
        self.assertEqual(len(rows), 4)
        summary = json.loads(self.read_file(os.path.join(out, 'summary.json')))
        self.assertEqual(summary['runs'], 1)
        self.assertEqual(len(summary['final_nll']), 1)
        self.assertTrue(os.path.exists(os.path.join(out, 'mean_prediction.svg')))

    def test_usage_errors(self):
        for args in ('bench --k=0', 'bench --k=a,b', 'bench --epochs=0', 'bench --threads=0',
                     'bench --database=nowhere', 'bench --experiment=chess'):
            self.run_command(args, code=EXIT_CODES.USAGE, in_stderr='error')


class OracleCheckTests(CommandsBaseTests):

    def test_passing_check(self):
        out = self.run_command('oracle-check --draws=10', in_stdout='')
        report = json.loads(self.read_file(os.path.join(out, 'oracle.json')))
        self.assertTrue(report['passed'])
        self.assertEqual(report['draws'], 10)

    def test_injected_fault_fails(self):
        out = self.run_command('oracle-check --draws=3 --inject-kl-fault',
                               code=EXIT_CODES.FAILURE, in_stdout='kl: draw 0')
        report = json.loads(self.read_file(os.path.join(out, 'oracle.json')))
        self.assertFalse(report['passed'])

    def test_injected_fault_raises(self):
        command = OracleCheckCommand(['--draws=3', '--inject-kl-fault',
                                      '--out=%s' % self.path('direct'), '--no-title'])
        with self.assertRaises(OracleFailure) as raised:
            command.execute()
        self.assertIn('oracle.json', str(raised.exception))
        self.assertEqual(raised.exception.code, EXIT_CODES.FAILURE)
