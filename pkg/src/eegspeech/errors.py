"""Exception types shared across the pipeline. The CLI maps these to exit codes."""


class EegSpeechError(Exception):
    """Base class for pipeline errors."""


class ConfigError(EegSpeechError):
    """Invalid configuration file or option value (CLI exit code 1)."""


class DataError(EegSpeechError):
    """Malformed or inconsistent input data or files (CLI exit code 2)."""


class NumericError(EegSpeechError):
    """Numeric failure such as a diverged (NaN) training loss (CLI exit code 3)."""
