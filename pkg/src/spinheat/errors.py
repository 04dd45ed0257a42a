"""Error types mapped to distinct CLI exit codes."""


class ConfigError(ValueError):
    """Invalid or missing configuration (exit code 2)."""


class NumericalError(RuntimeError):
    """Propagation or integration failure (exit code 3)."""


class PositivityError(RuntimeError):
    """Density-matrix positivity fell below the abort threshold (exit code 4)."""
