"""Exception hierarchy shared by all mmorf modules."""

from __future__ import annotations


class MmorfError(Exception):
    """Base class for every error raised by this package."""


# chemworld
class MoleculeError(MmorfError, ValueError):
    pass


class EmptyMolecule(MoleculeError):
    pass


class IllegalCharacter(MoleculeError):
    pass


class NoReactants(MmorfError, ValueError):
    pass


class MalformedPattern(MmorfError, ValueError):
    pass


class LengthMismatch(MmorfError, ValueError):
    pass


class ParseError(MmorfError):
    pass


class SchemaViolation(MmorfError):
    """A file parsed but broke the schema; ``path`` locates the offending entry."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


# vfdsl
class VfError(MmorfError):
    pass


class VfSyntaxError(VfError):
    pass


class UnknownComponent(VfError):
    pass


class ForbiddenOperator(VfError):
    pass


class BadArgument(VfError):
    pass


class VfDivisionByZero(VfError, ZeroDivisionError):
    pass


# planner
class PurchasableTarget(MmorfError):
    pass


class UnknownSystem(MmorfError, ValueError):
    pass


class FrontierEmpty(MmorfError):
    pass


class IncompleteAssignment(MmorfError):
    pass


# agents
class ActionParseError(MmorfError):
    pass


class NoActionFound(ActionParseError):
    pass


class UnknownTool(ActionParseError):
    pass


class MalformedArguments(ActionParseError):
    pass


class DisallowedTool(ActionParseError):
    pass


class UnknownTemplate(MmorfError, KeyError):
    pass


class MissingPlaceholder(MmorfError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing placeholder {self.name!r}"


class LlmError(MmorfError):
    pass


class ScenarioExhausted(LlmError):
    pass


class HttpError(LlmError):
    def __init__(self, status: int | None, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class LlmTimeout(LlmError, TimeoutError):
    pass


# evalbench
class InvalidRoute(MmorfError):
    pass


class UnknownConstraintType(MmorfError, ValueError):
    pass


class MalformedEntry(MmorfError):
    def __init__(self, index: int, message: str):
        super().__init__(f"restriction entry {index}: {message}")
        self.index = index


class BudgetExceeded(MmorfError):
    pass


class NotFound(MmorfError, LookupError):
    pass
