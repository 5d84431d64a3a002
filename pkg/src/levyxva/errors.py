"""Exception taxonomy shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
ValidationFailure -> 4.
"""


class EngineError(Exception):
    """Base class for engine failures."""


class ConfigError(EngineError):
    """Invalid or incomplete run configuration."""


class NumericalError(EngineError):
    """A numerical precondition failed (contraction, degenerate range, ...)."""


class ValidationFailure(EngineError):
    """A validation job detected a broken invariant."""
