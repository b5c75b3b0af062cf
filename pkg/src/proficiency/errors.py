"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, anything else -> 3.
"""


class ConfigError(Exception):
    """Invalid configuration, flags, or missing model artifacts."""


class DataError(Exception):
    """Input data violates a documented contract."""


class CorpusFormatError(DataError):
    """A corpus file could not be parsed; message carries file and line."""

    def __init__(self, path, lineno, reason):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = str(path)
        self.lineno = lineno


class NoScorableTokens(DataError):
    """A post has no tokens usable for proficiency scoring."""
