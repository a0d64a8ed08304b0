"""Exception hierarchy shared by the library and the CLI.

The CLI maps ConformalError to exit code 1; argparse usage errors exit 2.
"""


class ConformalError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ConformalError):
    """Invalid data: shape mismatches, out-of-range labels, bad rows."""


class ParseError(InputError):
    """Malformed file content; message carries line or byte position."""


class ConfigError(ConformalError):
    """Invalid parameter combination: levels, score settings, overrides."""
