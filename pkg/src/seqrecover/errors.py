"""Exception hierarchy shared across the package."""


class SeqRecoverError(Exception):
    """Base class for all package errors."""


class DomainError(SeqRecoverError, ValueError):
    """An argument is outside the domain of the operation."""


class DegenerateModelError(DomainError):
    """The two hypotheses are indistinguishable (zero divergence)."""


class ConfigError(SeqRecoverError, ValueError):
    """A run configuration is invalid or incomplete."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class OracleOverflowError(SeqRecoverError):
    """Exact enumeration refused because the outcome space is too large."""

    def __init__(self, states: int, max_states: int):
        self.states = states
        self.max_states = max_states
        super().__init__(
            f"exact enumeration needs {states} states, limit is {max_states}"
        )
