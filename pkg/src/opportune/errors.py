"""Exception types shared across the package."""


class OpportuneError(Exception):
    """Base class for all errors raised by this package."""


class PddlParseError(OpportuneError):
    """Syntax or validation error in PDDL input, with source position."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, col {col})"
        super().__init__(message)


class TaskError(OpportuneError):
    """Violation of a planning-task invariant (duplicate object, unknown type, ...)."""


class OntologySchemaError(OpportuneError):
    """Ontology interchange file violates the schema (cycles, missing root, ...)."""


class KnowledgeStoreError(OpportuneError):
    """Knowledge-edge file is unreadable or malformed."""


class MatchingError(OpportuneError):
    """Alignment called with arguments that violate its contract."""


class KnowledgeFetchError(OpportuneError):
    """Online knowledge lookup failed (network, HTTP, or malformed response)."""


class ConfigError(OpportuneError):
    """Bad configuration file, unknown key, or malformed override."""


class ScenarioError(OpportuneError):
    """Scenario file violates the scenario schema."""


class ProviderError(OpportuneError):
    """Object-facts provider file is malformed."""
