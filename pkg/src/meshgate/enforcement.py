"""Run-time enforcement: dataset validation against contracts and PII profiling.

Samples are JSON Lines files, one record per line. An optional metadata
record ``{"_meta": {"dataset": "...", "last_updated": "<ISO-8601>"}}`` may
appear anywhere; it is not a data row.

PII detectors are deterministic: regular expressions, the Luhn checksum and
two small shipped word lists. ``name_like`` and ``address_like`` are
advisory heuristics with a high false-positive rate.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from datetime import datetime
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from meshgate.contract_model import (
    DETECTOR_CLASSES,
    PII_CLASS_RANK,
    DataContract,
    LifecycleState,
    LogicalType,
    PiiClass,
    QualityRule,
    RuleKind,
    Severity,
    bound_key,
)
from meshgate.errors import ClockSkewError, DatasetMismatchError, FixtureError
from meshgate.timeutil import parse_date, parse_utc

Scalar = Any  # str | int | float | bool | None


@dataclass(frozen=True)
class DatasetSample:
    dataset_name: str
    rows: tuple[Mapping[str, Scalar], ...]
    last_updated: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.rows:
            cols = set(self.rows[0])
            for i, row in enumerate(self.rows):
                if set(row) != cols:
                    raise FixtureError(f"row {i} has a different column set than row 0")

    @property
    def columns(self) -> list[str]:
        return list(self.rows[0]) if self.rows else []


def load_sample(
    path: str | Path,
    *,
    dataset_name: str | None = None,
    last_updated: datetime | None = None,
    default_dataset: str | None = None,
    default_last_updated: datetime | None = None,
) -> DatasetSample:
    """Read a JSONL sample.

    Explicit ``dataset_name``/``last_updated`` override the metadata record,
    which in turn overrides the ``default_*`` fallbacks.
    """
    rows: list[dict] = []
    meta: dict = {}
    src = str(path)
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise FixtureError(f"invalid JSON: {exc}", source=src, line=no) from None
        if not isinstance(obj, dict):
            raise FixtureError("each line must be a JSON object", source=src, line=no)
        if "_meta" in obj:
            if len(obj) != 1 or not isinstance(obj["_meta"], dict):
                raise FixtureError("metadata record must be {\"_meta\": {...}}", source=src, line=no)
            meta.update(obj["_meta"])
            continue
        for key, value in obj.items():
            if isinstance(value, (list, dict)):
                raise FixtureError(f"column {key!r} holds a non-scalar value", source=src, line=no)
        rows.append(obj)
    name = dataset_name or meta.get("dataset") or default_dataset
    if not name:
        raise FixtureError("dataset name not given and no _meta.dataset record", source=src)
    when = last_updated
    if when is None:
        if "last_updated" not in meta and default_last_updated is not None:
            return DatasetSample(name, tuple(rows), default_last_updated)
        if "last_updated" not in meta:
            raise FixtureError("last_updated not given and no _meta.last_updated record", source=src)
        try:
            when = parse_utc(meta["last_updated"])
        except ValueError as exc:
            raise FixtureError(str(exc), source=src) from None
    return DatasetSample(name, tuple(rows), when)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class SchemaFinding:
    column: str
    issue: str  # missing | extra | type_mismatch | null_violation
    rows: tuple[int, ...] = ()


@dataclass(frozen=True)
class RuleFinding:
    field: str
    kind: RuleKind
    rows: tuple[int, ...]
    severity: Severity


@dataclass(frozen=True)
class FreshnessResult:
    age_seconds: float
    limit_seconds: int
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    schema_findings: tuple[SchemaFinding, ...]
    rule_findings: tuple[RuleFinding, ...]
    freshness: FreshnessResult
    pass_rate: float
    min_pass_rate: float
    row_count: int

    @property
    def quality_passed(self) -> bool:
        return self.pass_rate >= self.min_pass_rate

    @property
    def passed(self) -> bool:
        return not self.schema_findings and self.quality_passed and self.freshness.passed

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


_DECIMAL_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


def _is_num(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def conforms(ltype: LogicalType, value: Scalar) -> bool:
    """Whether a non-null cell fits the logical type."""
    if ltype is LogicalType.STRING:
        return isinstance(value, str)
    if ltype is LogicalType.BOOLEAN:
        return isinstance(value, bool)
    if ltype is LogicalType.INTEGER:
        return _is_num(value) and float(value).is_integer()
    if ltype is LogicalType.FLOAT:
        return _is_num(value)
    if ltype is LogicalType.DECIMAL:
        return _is_num(value) or (isinstance(value, str) and bool(_DECIMAL_RE.fullmatch(value.strip())))
    if ltype is LogicalType.DATE:
        try:
            parse_date(value)
            return True
        except ValueError:
            return False
    if ltype is LogicalType.TIMESTAMP:
        try:
            parse_utc(value)
            return True
        except ValueError:
            return False
    return False


def _cell_key(ltype: LogicalType, value: Scalar) -> Any:
    """Comparable form of a conforming cell."""
    if ltype is LogicalType.DECIMAL and isinstance(value, str):
        try:
            return Decimal(value.strip())
        except InvalidOperation:
            return value
    if ltype is LogicalType.DATE:
        return parse_date(value)
    if ltype is LogicalType.TIMESTAMP:
        return parse_utc(value)
    return value


def _violates(rule: QualityRule, ltype: LogicalType, value: Scalar) -> bool:
    if rule.kind is RuleKind.NOT_NULL:
        return value is None
    if value is None or not conforms(ltype, value):
        return False
    key = _cell_key(ltype, value)
    if rule.kind is RuleKind.RANGE:
        if rule.min is not None and key < bound_key(ltype, rule.min):
            return True
        if rule.max is not None and key > bound_key(ltype, rule.max):
            return True
        return False
    if rule.kind is RuleKind.REGEX:
        return re.fullmatch(rule.pattern, value) is None
    if rule.kind is RuleKind.ENUM_VALUES:
        allowed = {bound_key(ltype, v) for v in rule.values}
        return key not in allowed
    return False


def check_freshness(contract: DataContract, last_updated: datetime, now: datetime) -> tuple[float, bool]:
    """Age of the data in seconds and whether it is within the SLA (inclusive)."""
    if now < last_updated:
        raise ClockSkewError(f"evaluation time {now.isoformat()} precedes last update {last_updated.isoformat()}")
    age = (now - last_updated).total_seconds()
    return age, age <= contract.sla.freshness_max_age_seconds


def validate_dataset(contract: DataContract, sample: DatasetSample, now: datetime) -> ValidationReport:
    if contract.dataset_name != sample.dataset_name:
        raise DatasetMismatchError(f"sample is {sample.dataset_name}, contract is {contract.dataset_name}")
    rows = sample.rows
    columns = set(sample.columns)
    schema: list[SchemaFinding] = []
    rule_findings: list[RuleFinding] = []
    failing_rows: set[int] = set()

    for f in contract.schema:
        if rows and f.name not in columns:
            schema.append(SchemaFinding(f.name, "missing"))
            continue
        if not rows:
            continue
        values = [row[f.name] for row in rows]
        bad_type = tuple(i for i, v in enumerate(values) if v is not None and not conforms(f.logical_type, v))
        if bad_type:
            schema.append(SchemaFinding(f.name, "type_mismatch", bad_type))
        if not f.nullable:
            nulls = tuple(i for i, v in enumerate(values) if v is None)
            if nulls:
                schema.append(SchemaFinding(f.name, "null_violation", nulls))
        for rule in f.rules:
            if rule.kind is RuleKind.UNIQUE:
                seen: set = set()
                hits = []
                for i, v in enumerate(values):
                    if v is None or not conforms(f.logical_type, v):
                        continue
                    key = _cell_key(f.logical_type, v)
                    if key in seen:
                        hits.append(i)
                    seen.add(key)
            else:
                hits = [i for i, v in enumerate(values) if _violates(rule, f.logical_type, v)]
            if hits:
                rule_findings.append(RuleFinding(f.name, rule.kind, tuple(hits), rule.severity))
                if rule.severity is Severity.ERROR:
                    failing_rows.update(hits)

    known = {f.name for f in contract.schema}
    for col in sample.columns:
        if col not in known:
            schema.append(SchemaFinding(col, "extra"))

    pass_rate = 1.0 if not rows else (len(rows) - len(failing_rows)) / len(rows)
    age, fresh = check_freshness(contract, sample.last_updated, now)
    return ValidationReport(
        schema_findings=tuple(schema),
        rule_findings=tuple(rule_findings),
        freshness=FreshnessResult(age, contract.sla.freshness_max_age_seconds, fresh),
        pass_rate=pass_rate,
        min_pass_rate=contract.sla.quality_min_pass_rate,
        row_count=len(rows),
    )


# ---------------------------------------------------------------------------
# PII profiling

DETECTORS = ("email", "phone", "credit_card", "national_id_like", "address_like", "name_like")
EXCERPT_CHARS = 4

DEFAULT_NATIONAL_ID_PATTERNS: tuple[str, ...] = (
    r"(?<![\d-])\d{3}-\d{2}-\d{4}(?![\d-])",  # US SSN
    r"\b[A-CEGHJ-PR-TW-Z]{2}\d{6}[A-D]\b",  # UK National Insurance number
)

_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}")
_DIGIT_RUN_RE = re.compile(r"\d(?:[ -]?\d)*")
_PHONE_RE = re.compile(r"(?<![\w:+])\+?\(?\d[\d ().-]*\d(?![\w:])")
_ISO_DATE_PREFIX_RE = re.compile(r"\d{4}-\d{2}-\d{2}")
_WORD_RE = re.compile(r"[A-Za-z0-9]+")
_CAP_WORD_RE = re.compile(r"\b[A-Z][a-z]+\b")


def luhn_valid(digits: str) -> bool:
    """Luhn mod-10 check over a string of ASCII digits."""
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = ord(ch) - 48
        if i % 2:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


@lru_cache(maxsize=None)
def _word_list(name: str) -> frozenset[str]:
    text = resources.files("meshgate.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def first_names() -> frozenset[str]:
    return _word_list("first_names.txt")


def street_suffixes() -> frozenset[str]:
    return _word_list("street_suffixes.txt")


def find_credit_cards(text: str) -> list[tuple[int, int]]:
    """Spans of 13-19 digit runs (single space/hyphen separators) passing Luhn."""
    spans = []
    for m in _DIGIT_RUN_RE.finditer(text):
        digits = re.sub(r"[ -]", "", m.group())
        if 13 <= len(digits) <= 19 and luhn_valid(digits):
            spans.append(m.span())
    return spans


def find_emails(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _EMAIL_RE.finditer(text)]


def find_phones(text: str, exclude: Sequence[tuple[int, int]] = ()) -> list[tuple[int, int]]:
    """E.164-like numbers: 10-15 digits, written with a leading + or separators."""
    spans = []
    for m in _PHONE_RE.finditer(text):
        token = m.group()
        digits = sum(c.isdigit() for c in token)
        if not 10 <= digits <= 15:
            continue
        if not (token.startswith("+") or any(c in token for c in " ().-")):
            continue
        if _ISO_DATE_PREFIX_RE.match(token):
            continue
        a, b = m.span()
        if any(a < e and s < b for s, e in exclude):
            continue
        spans.append((a, b))
    return spans


def find_national_ids(text: str, patterns: Iterable[str] = DEFAULT_NATIONAL_ID_PATTERNS) -> list[tuple[int, int]]:
    spans = []
    for pat in patterns:
        spans.extend(m.span() for m in re.finditer(pat, text))
    return sorted(set(spans))


def find_addresses(text: str) -> list[tuple[int, int]]:
    """A number-led token followed within five words by a street-type word."""
    words = list(_WORD_RE.finditer(text))
    suffixes = street_suffixes()
    spans = []
    i = 0
    while i < len(words):
        w = words[i]
        if w.group()[0].isdigit():
            for j in range(i + 2, min(i + 6, len(words))):
                if words[j].group().lower() in suffixes:
                    spans.append((w.start(), words[j].end()))
                    i = j
                    break
        i += 1
    return spans


def find_names(text: str) -> list[tuple[int, int]]:
    """A known given name immediately followed by another capitalised word."""
    names = first_names()
    caps = list(_CAP_WORD_RE.finditer(text))
    spans = []
    for a, b in zip(caps, caps[1:]):
        gap = text[a.end() : b.start()]
        if a.group().lower() in names and gap == " ":
            spans.append((a.start(), b.end()))
    return spans


@dataclass(frozen=True)
class PiiFinding:
    column: str
    row: int
    label: str
    excerpt: str


@dataclass(frozen=True)
class PiiFindings:
    findings: tuple[PiiFinding, ...] = ()
    proposed_classifications: tuple[tuple[str, PiiClass], ...] = ()
    routing: tuple[str, ...] = ()

    @property
    def classifications(self) -> dict[str, PiiClass]:
        return dict(self.proposed_classifications)


def scan_text(text: str, national_id_patterns: Iterable[str] = DEFAULT_NATIONAL_ID_PATTERNS) -> list[tuple[str, str]]:
    """All (detector label, matched text) hits in one string."""
    cards = find_credit_cards(text)
    ids = find_national_ids(text, national_id_patterns)
    hits = [("email", s) for s in find_emails(text)]
    hits += [("phone", s) for s in find_phones(text, exclude=cards + ids)]
    hits += [("credit_card", s) for s in cards]
    hits += [("national_id_like", s) for s in ids]
    hits += [("address_like", s) for s in find_addresses(text)]
    hits += [("name_like", s) for s in find_names(text)]
    return [(label, text[a:b]) for label, (a, b) in hits]


def route(classes: Iterable[PiiClass]) -> tuple[str, ...]:
    classes = list(classes)
    if not classes:
        return ()
    actions = ["apply_classification"]
    if any(c in (PiiClass.DIRECT_IDENTIFIER, PiiClass.FINANCIAL) for c in classes):
        actions.append("recommend_masking")
    actions.append("notify_security")
    return tuple(actions)


def profile_pii(
    sample: DatasetSample,
    national_id_patterns: Iterable[str] = DEFAULT_NATIONAL_ID_PATTERNS,
) -> PiiFindings:
    patterns = tuple(national_id_patterns)
    findings: list[PiiFinding] = []
    proposed: dict[str, PiiClass] = {}
    for i, row in enumerate(sample.rows):
        for column, value in row.items():
            if not isinstance(value, str):
                continue
            for label, matched in scan_text(value, patterns):
                findings.append(PiiFinding(column, i, label, matched[:EXCERPT_CHARS]))
                cls = DETECTOR_CLASSES[label]
                if column not in proposed or PII_CLASS_RANK[cls] > PII_CLASS_RANK[proposed[column]]:
                    proposed[column] = cls
    ordered = tuple(sorted(proposed.items()))
    return PiiFindings(tuple(findings), ordered, route(proposed.values()))


def apply_classification(contract: DataContract, findings: PiiFindings) -> tuple[DataContract, tuple[str, ...]]:
    """Fold findings into a new draft contract and return the routing actions.

    The input contract is never modified. When the findings add nothing new
    the original contract comes back unchanged; routing still notifies.
    Columns absent from the contract schema are reported but not added.
    """
    if not findings.findings:
        return contract, ()
    proposed = findings.classifications
    fields = []
    pii = list(contract.compliance.pii_fields)
    for f in contract.schema:
        cls = proposed.get(f.name)
        if cls is None:
            fields.append(f)
            continue
        current = f.pii_class or PiiClass.NONE
        if PII_CLASS_RANK[cls] > PII_CLASS_RANK[current]:
            f = replace(f, pii_class=cls)
        fields.append(f)
        if f.name not in pii:
            pii.append(f.name)
    routing = route(proposed.values())
    amended = replace(contract, schema=tuple(fields), compliance=replace(contract.compliance, pii_fields=tuple(pii)))
    if amended == contract:
        return contract, routing
    return replace(amended, status=LifecycleState.DRAFT), routing
