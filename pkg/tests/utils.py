import os
from unittest import mock

from mixmode import InvalidArgument
from mixmode.models import CellJob
from mixmode.utils import (derive_seed, get_threads, parse_int_list, parse_grid, import_class,
                           ensure_directory, write_json, read_json, THREADS_ENV_VAR)

from .base import MixmodeBaseTest


class DeriveSeedTests(MixmodeBaseTest):

    def test_deterministic(self):
        self.assertEqual(derive_seed(0, 5, 1), derive_seed(0, 5, 1))
        self.assertLess(derive_seed(12345, 3), 2 ** 32)

    def test_distinct_paths(self):
        seeds = set(derive_seed(7, k, repetition) for k in range(10) for repetition in range(3))
        self.assertEqual(len(seeds), 30)
        self.assertNotEqual(derive_seed(7, 1, 2), derive_seed(7, 2, 1))
        self.assertNotEqual(derive_seed(7), derive_seed(8))


class ThreadsTests(MixmodeBaseTest):

    def test_requested(self):
        with mock.patch.dict(os.environ, {THREADS_ENV_VAR: ''}):
            self.assertEqual(get_threads(3), 3)
            self.assertGreaterEqual(get_threads(), 1)

    def test_capped_by_the_environment(self):
        with mock.patch.dict(os.environ, {THREADS_ENV_VAR: '2'}):
            self.assertEqual(get_threads(8), 2)
            self.assertEqual(get_threads(1), 1)
        with mock.patch.dict(os.environ, {THREADS_ENV_VAR: 'many'}):
            with self.assertRaises(InvalidArgument):
                get_threads(2)


class ParsersTests(MixmodeBaseTest):

    def test_int_list(self):
        self.assertEqual(parse_int_list('2,3,5'), [2, 3, 5])
        self.assertEqual(parse_int_list((4, 1)), [4, 1])
        self.assertEqual(parse_int_list('8,'), [8])
        with self.assertRaises(InvalidArgument):
            parse_int_list('2,x')

    def test_grid(self):
        self.assertArrayAlmostEqual(parse_grid('-15:15:61')[[0, 30, 60]], [-15, 0, 15])
        self.assertEqual(len(parse_grid('0:1:1')), 1)
        for value in ('1:2', '0:1:a', '1:0:3', '0:1:0'):
            with self.assertRaises(InvalidArgument):
                parse_grid(value)


class FilesTests(MixmodeBaseTest):

    def test_json(self):
        directory = ensure_directory(os.path.join(self.make_directory(), 'a', 'b'))
        filename = os.path.join(directory, 'data.json')
        write_json(filename, {'b': 1, 'a': [1, 2]})
        self.assertEqual(read_json(filename), {'a': [1, 2], 'b': 1})
        self.assertTrue(self.read_file(filename).startswith('{\n  "a"'))

    def test_import_class(self):
        self.assertIs(import_class('mixmode.models.CellJob'), CellJob)
        with self.assertRaises(ImportError):
            import_class('mixmode.nothing.Here')
