"""Exception types shared across the package."""

from __future__ import annotations


class InfospaceError(Exception):
    """Base class for all errors raised by this package."""


class TaxonomyError(InfospaceError):
    """Malformed operation definition or registry misuse."""


class UnknownOperationError(TaxonomyError):
    """Lookup of an operation name not present in the registry.

    Attributes:
        name: the name that failed to resolve.
        suggestion: closest known name, or None when nothing is near.
    """

    def __init__(self, name: str, suggestion: str | None = None):
        self.name = name
        self.suggestion = suggestion
        message = f"unknown operation {name!r}"
        if suggestion is not None:
            message += f" (did you mean {suggestion!r}?)"
        super().__init__(message)


class LabelingError(InfospaceError):
    """Structural or referential problem in a domain labeling document.

    Attributes:
        path: dotted/indexed path into the document, e.g.
            "dataAbstraction.relationships[0].joinChain[0]".
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class PlanSyntaxError(InfospaceError):
    """Plan text that does not conform to the grammar.

    Attributes:
        line: 1-based line number.
        column: 1-based column number, when known.
    """

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class PlanCheckError(InfospaceError):
    """Type or arity violation found while checking a parsed plan.

    Attributes:
        step_id: id of the offending step.
    """

    def __init__(self, message: str, step_id: int):
        self.step_id = step_id
        super().__init__(f"step |{step_id}|: {message}")


class CompileError(InfospaceError):
    """Checked plan that cannot be lowered to SQL.

    Attributes:
        step_id: id of the offending step, when one is identifiable.
    """

    def __init__(self, message: str, step_id: int | None = None):
        self.step_id = step_id
        super().__init__(f"step |{step_id}|: {message}" if step_id else message)


class GenerationError(InfospaceError):
    """Question-space enumeration misuse, e.g. harvesting a non-discrete attribute."""


class ExecutionError(InfospaceError):
    """Query execution failure, carrying the SQL and parameters for context."""

    def __init__(self, message: str, sql_text: str | None = None, parameters: tuple | None = None):
        self.sql_text = sql_text
        self.parameters = parameters
        super().__init__(message)
