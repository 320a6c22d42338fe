from configparser import ConfigParser
from importlib import metadata
from os import path


def _extract_version(package_name):
    try:
        # if package is installed
        version = metadata.version(package_name)
    except metadata.PackageNotFoundError:
        # if not installed, so we must be in source, with ``setup.cfg`` available
        conf = ConfigParser()
        conf.read(path.join(path.dirname(__file__), '..', 'setup.cfg'))
        version = conf.get('metadata', 'version', fallback='0')

    return version


__all__ = ('EXACT_VERSION', 'VERSION', 'FORMAT_VERSION')


EXACT_VERSION = _extract_version('mixmode')
VERSION = tuple(int(part) for part in EXACT_VERSION.split('.') if str(part).isnumeric())

# version of the json/csv formats written by the package
FORMAT_VERSION = 1
