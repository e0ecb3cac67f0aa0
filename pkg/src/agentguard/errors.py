"""Exception types shared across the package.

Errors that a live analysis loop must survive (per-property evaluation
failures, callback crashes) are caught at the loop boundary and turned into
labeled results; everything here is still a real exception at the point of
use so library callers get precise failures.
"""

from __future__ import annotations


class AgentGuardError(Exception):
    """Base class for all package errors."""


class UnknownState(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"unknown state: {name!r}")
        self.name = name


class UnknownAction(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"unknown action: {name!r}")
        self.name = name


class NeverObserved(AgentGuardError):
    """Raised when a query needs observations that the model does not have.

    Distinct from probability 0: an observed (state, action) pair may assign
    probability 0 to a successor, while an unobserved pair has no
    distribution at all.
    """


class InvalidDecay(AgentGuardError):
    def __init__(self, value: float):
        super().__init__(f"decay factor must be in (0, 1], got {value}")
        self.value = value


class PropertySyntaxError(AgentGuardError):
    """Property text failed to parse.

    ``offset`` is the byte offset of the failure inside the input and
    ``expected`` is the set of token descriptions that would have been
    accepted there.
    """

    def __init__(self, offset: int, expected: set[str], found: str = ""):
        self.offset = offset
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(expected))
        what = f", found {found!r}" if found else ""
        super().__init__(f"syntax error at offset {offset}: expected {exp}{what}")


class BoundError(AgentGuardError):
    def __init__(self, k: int):
        super().__init__(f"step bound must be >= 1, got {k}")
        self.k = k


class ThresholdError(AgentGuardError):
    def __init__(self, value: float, message: str):
        super().__init__(f"invalid threshold {value}: {message}")
        self.value = value


class UnknownLabel(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"unknown label: {name!r}")
        self.name = name


class UnknownRewardStructure(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"unknown reward structure: {name!r}")
        self.name = name


class ModeMismatch(AgentGuardError):
    """Property optimization direction is not permitted by the configured mode."""


class ConfigError(AgentGuardError):
    """Configuration rejected; ``path`` locates the offending entry (YAML-path style)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class EmptyModel(AgentGuardError):
    """The snapshot has no usable initial state (nothing observed yet)."""


class UnsupportedConstruct(AgentGuardError):
    """Model text uses something outside the supported import subset."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class QueueFull(AgentGuardError):
    """Event queue at capacity under the ``reject`` policy."""


class EngineNotRunning(AgentGuardError):
    pass


class UnknownCommand(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"unknown actuator command: {name!r}")
        self.name = name


class InvalidScenario(AgentGuardError):
    """Scenario definition rejected; ``path`` locates the offending entry."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class TerminalState(AgentGuardError):
    def __init__(self, name: str):
        super().__init__(f"cannot step from terminal state {name!r}")
        self.name = name


class TraceFormatError(AgentGuardError):
    """A persisted trace line could not be decoded; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"trace line {line}: {message}")
