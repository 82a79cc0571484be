"""Error types shared across the package.

ConfigurationError maps to CLI exit code 2, NumericalError to exit code 3.
"""


class ConfigurationError(Exception):
    """Invalid user input: parameters, config files, geometry specs."""


class NumericalError(Exception):
    """A solve or factorization failed or missed its accuracy contract."""
