import json
import os
from importlib import import_module

import numpy as np

from mixmode import InvalidArgument

THREADS_ENV_VAR = 'MIXMODE_THREADS'


def derive_seed(seed, *keys):
    """
    Return a 32 bits seed derived from the given base seed and a path of
    non-negative integer keys, e.g. ``derive_seed(seed, k, repetition)``.
    Distinct key paths give independent streams.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1)[0])


def get_threads(requested=None):
    """
    Return the number of parallel workers to use: the requested one (or the
    cpu count), capped by the MIXMODE_THREADS environment variable if set.
    """
    threads = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV_VAR)
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise InvalidArgument('Invalid %s value: %s' % (THREADS_ENV_VAR, cap))
        if cap >= 1:
            threads = min(threads, cap)
    return max(1, int(threads))


def parse_int_list(value):
    """
    Parse a comma separated list of integers, e.g. "2,3,5"
    """
    if isinstance(value, (list, tuple)):
        return [int(part) for part in value]
    try:
        return [int(part) for part in str(value).split(',') if part.strip()]
    except ValueError:
        raise InvalidArgument('Invalid list of integers: %s' % value)


def parse_grid(value):
    """
    Parse a "lower:upper:points" string into a numpy grid
    """
    try:
        lower, upper, points = str(value).split(':')
        lower, upper, points = float(lower), float(upper), int(points)
    except ValueError:
        raise InvalidArgument('Invalid grid "%s", expected lower:upper:points' % value)
    if points < 1 or upper < lower:
        raise InvalidArgument('Invalid grid "%s"' % value)
    return np.linspace(lower, upper, points)


def ensure_directory(directory):
    """
    Create the directory if needed and return it
    """
    os.makedirs(directory, exist_ok=True)
    return directory


def write_json(filename, data):
    """
    Write data as json, with sorted keys so that files are byte-identical
    between runs
    """
    with open(filename, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(filename):
    with open(filename) as f:
        return json.load(f)


def import_class(class_uri):
    """
    Import a class by string 'from.path.module.class'
    """

    parts = class_uri.split('.')
    class_name = parts.pop()
    module_uri = '.'.join(parts)

    try:
        module = import_module(module_uri)
    except ImportError as e:
        # maybe we are still in a module, test going up one level
        try:
            module = import_class(module_uri)
        except Exception:
            # if failure raise the original exception
            raise e

    return getattr(module, class_name)
