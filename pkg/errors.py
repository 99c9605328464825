"""
Exception hierarchy for the sememe-driven language model.
Library code raises these; only main.py turns them into exit codes.
"""

from typing import Any, Optional


class SDLMError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(SDLMError):
    """A lexicon file line does not follow the TSV schema."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LexiconValidationError(SDLMError):
    """The parsed hierarchy breaks a lexicon invariant."""


class ArgumentError(SDLMError, ValueError):
    """A caller passed an argument outside its documented range."""


class ContractViolation(SDLMError):
    """A precondition or numeric contract was broken (NaN, disconnected edge, OOV id)."""


class ConfigError(SDLMError):
    """Configuration failed validation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InputError(SDLMError):
    """Raw input could not be decoded."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingError(SDLMError):
    """A training step produced a non-finite loss."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class CheckpointError(SDLMError):
    """A checkpoint file is malformed or does not match the lexicon."""
