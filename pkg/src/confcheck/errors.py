"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class InputSyntaxError(EngineError):
    """Malformed XML or JSON input."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaError(EngineError):
    """Structurally well-formed input that violates the expected document shape."""


class RefError(EngineError):
    """Duplicate or contradictory identifier declarations."""


class KindError(EngineError):
    """A property value does not conform to the registered value kind."""

    def __init__(self, property_name: str, identifier: str, value: str, kind: str):
        self.property_name = property_name
        self.identifier = identifier
        self.value = value
        super().__init__(
            f"value {value!r} for property {property_name!r} of {identifier!r}"
            f" is not a valid {kind}"
        )


class QuerySyntaxError(EngineError):
    """Query source outside the supported XPath subset."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"at offset {offset}: {message}")


class MissingAttributeError(EngineError):
    """An attribute required for collection is undefined for an identifier."""

    def __init__(self, property_name: str, identifier: str):
        self.property_name = property_name
        self.identifier = identifier
        super().__init__(f"property {property_name!r} undefined for identifier {identifier!r}")


class MultiValuedError(EngineError):
    """An attribute required single-valued has several values for an identifier."""

    def __init__(self, property_name: str, identifier: str):
        self.property_name = property_name
        self.identifier = identifier
        super().__init__(
            f"property {property_name!r} has multiple values for identifier {identifier!r}"
        )


class InvalidTargetError(EngineError):
    """Target definition failed structural validation."""


class InvalidCheckError(EngineError):
    """Check definition failed structural validation."""


class ScaleError(EngineError):
    """Input exceeds the size guard of the exhaustive resolver."""
