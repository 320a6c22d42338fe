#!/usr/bin/env python
"mixmode-worker: compute the cells of benchmark runs queued in redis"
import logging
import sys


def worker_config_path(args):
    """
    Return the value of --worker-config, given as "--worker-config x" or
    "--worker-config=x", or None
    """
    for index, arg in enumerate(args):
        if arg.startswith('--worker-config='):
            return arg[len('--worker-config='):]
        if arg == '--worker-config' and index + 1 < len(args):
            return args[index + 1]
    return None


def main(argv=None):
    argv = sys.argv[:] if argv is None else list(argv)

    from mixmode import EXIT_CODES, MixmodeException
    from mixmode.utils import import_class
    from mixmode.workers import LOGGER_NAME, WorkerConfig

    worker_config_class = WorkerConfig
    path = worker_config_path(argv[1:])
    if path:
        try:
            worker_config_class = import_class(path)
        except (ImportError, AttributeError) as e:
            sys.stderr.write('mixmode-worker: error: No WorkerConfig found at "%s": %s\n'
                             % (path, e))
            sys.exit(EXIT_CODES.USAGE)

    try:
        worker_config_class(argv).execute()
    except MixmodeException as e:
        logging.getLogger(LOGGER_NAME).error('%s: %s', e.__class__.__name__, e)
        sys.exit(e.code)
    sys.exit(EXIT_CODES.SUCCESS)


if __name__ == '__main__':
    main()
