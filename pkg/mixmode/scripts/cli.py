#!/usr/bin/env python
"The mixmode command line tool: mixmode <command> [options]"
import logging
import sys
import traceback

USAGE = """usage: mixmode <command> [options]

Commands:
  gen-data       generate the inverse sine or latent transitions dataset
  train-mdn      train an MDN on a generated dataset
  eval-metrics   compute the multimodality metrics of predicted mixtures
  bench          run the inverse sine study or the separation benchmark
  oracle-check   check the closed forms against numerical references

Use "mixmode <command> --help" for the options of a command.
Exit status: 0 success, 1 usage error, 2 runtime error, 3 acceptance or
oracle failure.
"""


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)

    from mixmode import EXIT_CODES, MixmodeException
    from mixmode.commands import COMMANDS

    if not argv or argv[0] in ('-h', '--help'):
        sys.stdout.write(USAGE)
        sys.exit(EXIT_CODES.SUCCESS if argv else EXIT_CODES.USAGE)

    name, arguments = argv[0], argv[1:]
    if name not in COMMANDS:
        sys.stderr.write(USAGE)
        sys.stderr.write('mixmode: error: unknown command "%s"\n' % name)
        sys.exit(EXIT_CODES.USAGE)

    command = COMMANDS[name](arguments)
    try:
        status = command.execute()
    except MixmodeException as e:
        logging.getLogger('mixmode').error('%s: %s', e.__class__.__name__, e)
        status = e.code
    except (OSError, ValueError) as e:
        logging.getLogger('mixmode').error('%s: %s\n%s', e.__class__.__name__, e,
                                           traceback.format_exc())
        status = EXIT_CODES.RUNTIME
    sys.exit(status)


if __name__ == '__main__':
    main()
