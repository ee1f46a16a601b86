"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class FigsmithError(Exception):
    """Base class for every error raised by this package."""


# --- document ingestion ---

class DocumentError(FigsmithError):
    pass


class DecodeError(DocumentError):
    """Input file is not valid UTF-8."""


class EmptyDocumentError(DocumentError):
    """Stripped document text is empty."""


class UnsupportedFormatError(DocumentError):
    """Input format we deliberately do not parse (e.g. PDF)."""


# --- backend gateway ---

class BackendError(FigsmithError):
    pass


class NoBackendError(BackendError):
    """No backend registered for the requested capability."""


class TransientBackendError(BackendError):
    """Retryable backend failure (timeouts, 5xx, rate trips)."""


class BackendRejectedError(BackendError):
    """Non-retryable backend failure (bad auth, invalid request)."""


class ExhaustedError(BackendError):
    """All retry attempts spent."""


# --- model reply parsing ---

class ParseError(FigsmithError):
    """Free-form model reply could not be normalized to the expected value."""


class SchemaError(FigsmithError):
    """Structured model reply failed validation after the repair retry."""


# --- layout markup ---

class MarkupError(FigsmithError):
    pass


class MalformedMarkupError(MarkupError):
    """Markup is not well-formed or is missing required attributes."""


class UnsupportedElementError(MarkupError):
    """Markup uses an element outside the supported subset."""


class InvariantError(FigsmithError):
    """A domain value violates its declared invariants."""


# --- synthesis ---

class CoverageError(FigsmithError):
    """Render prompt is missing a required label after the repair retry."""


# --- evaluation & statistics ---

class EmptyGroupError(FigsmithError):
    pass


class EmptyInputError(FigsmithError):
    pass


class DegenerateError(FigsmithError):
    """Agreement table has chance agreement of exactly 1 without perfect agreement."""


class LengthMismatchError(FigsmithError):
    pass


class ZeroVarianceError(FigsmithError):
    pass


# --- run orchestration ---

class ValidationError(FigsmithError):
    """Configuration or CLI arguments failed validation."""


class RefinementError(FigsmithError):
    """Stage-I loop failed; carries the partial state for resuming."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
