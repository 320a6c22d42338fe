"""Multimodality metrics for Gaussian-mixture predictive distributions"""

from .version import *


class Choices(dict):
    """
    A dict of named constants, with attribute access.
    To use this way:
        sample.label == LABELS.MULTIMODAL  # or LABELS['MULTIMODAL']
    Use the `by_value` to get the key from a value:
        LABELS.by_value('multimodal')
        >> 'MULTIMODAL'
    Keys keep their declaration order.
    """
    def __getattr__(self, name):
        return self[name]

    def by_value(self, value, default=None):
        """
        Returns the key for the given value
        """
        try:
            return [k for k, v in self.items() if v == value][0]
        except IndexError:
            if default is not None:
                return default
            raise ValueError('%s' % value)


# status of a bench cell job in the queue
STATUSES = Choices(
        WAITING='w',
        RUNNING='r',
        SUCCESS='s',
        ERROR='e',
        CANCELED='c',
    )

# action tokens of the latent environment, MASKED is the invalid action
ACTIONS = Choices(
        LEFT='left',
        RIGHT='right',
        JUMP='jump',
        NOOP='noop',
        MASKED='masked',
    )

# ground truth modality of a transition
LABELS = Choices(
        UNIMODAL='unimodal',
        MULTIMODAL='multimodal',
    )

METRICS = Choices(
        MCE='mce',
        WAKLD='wakld',
        SEMD='semd',
        JSD='jsd',
    )

# exit codes of the command line tools
EXIT_CODES = Choices(
        SUCCESS=0,
        USAGE=1,
        RUNTIME=2,
        FAILURE=3,
    )


class MixmodeException(Exception):
    code = EXIT_CODES.RUNTIME


class ConfigurationException(MixmodeException):
    code = EXIT_CODES.USAGE


class InvalidArgument(MixmodeException, ValueError):
    code = EXIT_CODES.USAGE


class Unsupported(MixmodeException):
    code = EXIT_CODES.RUNTIME


class FormatVersionError(MixmodeException):
    code = EXIT_CODES.RUNTIME


class TrainingError(MixmodeException):
    code = EXIT_CODES.RUNTIME

    def __init__(self, message, seed=None):
        if seed is not None:
            message = '%s (seed=%s)' % (message, seed)
        super(TrainingError, self).__init__(message)
        self.seed = seed


class OracleFailure(MixmodeException):
    code = EXIT_CODES.FAILURE


# the imports below are to ease import for users of the module
from .gmm import GaussianComponent, Mixture, EntropyEstimatorConfig
from .metrics import mce, wakld, semd, jsd, all_metrics
