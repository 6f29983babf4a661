"""Exception hierarchy shared by every meshgate module."""

from __future__ import annotations

from dataclasses import dataclass


class MeshgateError(Exception):
    """Base class for all domain errors raised by meshgate."""


@dataclass(frozen=True)
class Issue:
    """One positioned problem found while parsing or validating a document."""

    path: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        loc = f"{self.path}: " if self.path else ""
        return f"{where}{loc}{self.message}"


class ContractValidationError(MeshgateError, ValueError):
    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "invalid contract")


class FixtureError(MeshgateError, ValueError):
    """Malformed catalog, rule pack, annotation, sample or event file."""

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source:
            prefix += f"{source}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}".strip() if prefix else message)


class DatasetNotFoundError(MeshgateError, LookupError):
    pass


class ProviderError(MeshgateError):
    """Model transport kept failing after all retries."""

    def __init__(self, message: str, attempts: int):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempts)")


class SchemaEnforcementError(MeshgateError):
    def __init__(self, errors: list[str], repair_attempts: int):
        self.errors = list(errors)
        self.repair_attempts = repair_attempts
        joined = "; ".join(self.errors)
        super().__init__(f"model output rejected after {repair_attempts} repair attempts: {joined}")


class UnmappableTypeError(MeshgateError, ValueError):
    def __init__(self, column: str, physical_type: str):
        self.column = column
        self.physical_type = physical_type
        super().__init__(f"unmappable physical type {physical_type!r} on column {column!r}")


class IllegalTransitionError(MeshgateError):
    pass


class DuplicateSubmissionError(MeshgateError):
    pass


class UnknownRecordError(MeshgateError, LookupError):
    pass


class RecordStateError(MeshgateError):
    pass


class IntegrityError(MeshgateError):
    pass


class StoreBusyError(MeshgateError):
    """The store lock is held by another writer; retry later."""


class NotFoundError(MeshgateError, LookupError):
    pass


class DatasetMismatchError(MeshgateError, ValueError):
    pass


class ClockSkewError(MeshgateError, ValueError):
    pass


class UndefinedMetricError(MeshgateError, ValueError):
    pass


class ConfigError(MeshgateError, ValueError):
    pass


class InvalidReviewerError(MeshgateError, ValueError):
    pass
