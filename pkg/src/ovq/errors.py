"""Shared exception types. The CLI maps these onto exit codes."""


class ConfigurationError(ValueError):
    """Bad shapes, parameters, or flags. CLI exit code 2."""


class InvalidStateError(RuntimeError):
    """Operation attempted on a state that cannot support it."""


class GenerationError(RuntimeError):
    """A task generator could not satisfy its constraints."""


class ParseError(ValueError):
    """Malformed stream file. Carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateComponentError(RuntimeError):
    """A mixture component received zero responsibility mass."""

    def __init__(self, indices):
        self.indices = list(int(i) for i in indices)
        super().__init__(f"degenerate mixture components: {self.indices}")
