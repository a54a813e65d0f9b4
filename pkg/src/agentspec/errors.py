"""Exception types shared across the package."""
from __future__ import annotations


class AgentError(Exception):
    """Base class for all errors raised by this package."""


class SExprError(AgentError):
    """Malformed s-expression input. Carries 1-based line/column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class SpecError(AgentError):
    """A syntactically valid s-expression that is not a valid agent spec."""


class CompileError(AgentError):
    """Behavior formula could not be compiled (e.g. empty language)."""


class TransitionError(AgentError):
    """An observed state symbol has no transition from the current position.

    ``expected`` lists the symbols that would have been accepted, in state
    declaration order.
    """

    def __init__(self, expected: tuple[str, ...], got: str):
        super().__init__(f"invalid transition to {got!r}; expected one of {list(expected)}")
        self.expected = expected
        self.got = got


class BackendError(AgentError):
    """Completion/scoring provider failure."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class CapabilityError(BackendError):
    """Backend does not implement the requested capability (e.g. scoring)."""

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


class MockScriptError(AgentError):
    """Malformed mock script file. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EnvError(AgentError):
    """Environment handler failed while producing content for a state."""

    def __init__(self, state: str, cause: BaseException):
        super().__init__(f"environment handler for state {state!r} failed: {cause}")
        self.state = state
        self.cause = cause


class BudgetExhausted(AgentError):
    """A run hit its step or retry budget before reaching a final state.

    ``transcript`` holds the partial session state at the point of failure.
    """

    def __init__(self, kind: str, transcript=None):
        super().__init__(f"{kind} budget exhausted")
        self.kind = kind
        self.transcript = transcript
