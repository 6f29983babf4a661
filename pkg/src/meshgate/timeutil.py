from __future__ import annotations

import re
from datetime import date, datetime, timezone

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    A trailing ``Z`` is accepted. Naive timestamps are rejected because every
    timestamp crossing a file boundary must be unambiguous.
    """
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {type(text).__name__}")
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        value = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}") from None
    if value.tzinfo is None:
        raise ValueError(f"timestamp lacks a UTC offset: {text!r}")
    return value.astimezone(timezone.utc)


def format_utc(value: datetime) -> str:
    value = value.astimezone(timezone.utc)
    if value.microsecond:
        return value.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return value.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_date(text: str) -> date:
    if not isinstance(text, str) or not _DATE_RE.match(text):
        raise ValueError(f"not an ISO-8601 date: {text!r}")
    return date.fromisoformat(text)


def utcnow() -> datetime:
    return datetime.now(timezone.utc)
