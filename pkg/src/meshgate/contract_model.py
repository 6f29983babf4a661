"""Typed data-contract objects, lifecycle rules and the canonical text format.

A contract document is line oriented and indentation structured (two spaces
per level). Identifiers, enum members, versions and timestamps are written
bare; free text and lists are JSON literals. ``serialize`` is the only
producer of canonical documents and ``parse`` accepts exactly the closed key
set it emits::

    dataset_name: sales.orders
    version: 1.0.0
    status: approved
    owner:
      team: "sales-analytics"
      email: "sales-data@example.com"
    schema:
      - name: amount
        logical_type: decimal
        nullable: false
        description: "Order total"
        pii_class: none
        rules:
          - kind: range
            severity: error
            min: 0
            max: null
    sla:
      ...
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Union

from meshgate.errors import ContractValidationError, IllegalTransitionError, Issue
from meshgate.timeutil import format_utc, parse_date, parse_utc

IDENT_RE = re.compile(r"[a-z][a-z0-9_]*")
DATASET_RE = re.compile(r"[a-z][a-z0-9_]*(\.[a-z][a-z0-9_]*)*")
EMAIL_RE = re.compile(r"[^@\s]+@[^@\s.]+(\.[^@\s.]+)+")
HEX_RE = re.compile(r"[0-9a-f]+")
VERSION_RE = re.compile(r"(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)")


class LogicalType(str, Enum):
    STRING = "string"
    INTEGER = "integer"
    FLOAT = "float"
    BOOLEAN = "boolean"
    DATE = "date"
    TIMESTAMP = "timestamp"
    DECIMAL = "decimal"


NUMERIC_TYPES = frozenset({LogicalType.INTEGER, LogicalType.FLOAT, LogicalType.DECIMAL})
TEMPORAL_TYPES = frozenset({LogicalType.DATE, LogicalType.TIMESTAMP})


class RuleKind(str, Enum):
    NOT_NULL = "not_null"
    RANGE = "range"
    REGEX = "regex"
    ENUM_VALUES = "enum_values"
    UNIQUE = "unique"


class Severity(str, Enum):
    ERROR = "error"
    WARN = "warn"


class PiiClass(str, Enum):
    NONE = "none"
    DIRECT_IDENTIFIER = "direct_identifier"
    QUASI_IDENTIFIER = "quasi_identifier"
    FINANCIAL = "financial"


# Detector label -> privacy class applied when that detector fires.
DETECTOR_CLASSES: dict[str, PiiClass] = {
    "email": PiiClass.DIRECT_IDENTIFIER,
    "phone": PiiClass.DIRECT_IDENTIFIER,
    "credit_card": PiiClass.FINANCIAL,
    "national_id_like": PiiClass.DIRECT_IDENTIFIER,
    "address_like": PiiClass.QUASI_IDENTIFIER,
    "name_like": PiiClass.QUASI_IDENTIFIER,
}

# Higher wins when several detectors fire on one column.
PII_CLASS_RANK = {
    PiiClass.NONE: 0,
    PiiClass.QUASI_IDENTIFIER: 1,
    PiiClass.DIRECT_IDENTIFIER: 2,
    PiiClass.FINANCIAL: 3,
}


class LifecycleState(str, Enum):
    DRAFT = "draft"
    PENDING_REVIEW = "pending_review"
    APPROVED = "approved"
    REJECTED = "rejected"
    SUPERSEDED = "superseded"


class DrafterKind(str, Enum):
    DETERMINISTIC = "deterministic"
    MODEL = "model"


LEGAL_TRANSITIONS: dict[LifecycleState, frozenset[LifecycleState]] = {
    LifecycleState.DRAFT: frozenset({LifecycleState.PENDING_REVIEW}),
    LifecycleState.PENDING_REVIEW: frozenset({LifecycleState.APPROVED, LifecycleState.REJECTED}),
    LifecycleState.APPROVED: frozenset({LifecycleState.SUPERSEDED}),
    LifecycleState.REJECTED: frozenset(),
    LifecycleState.SUPERSEDED: frozenset(),
}


def check_transition(current: LifecycleState, target: LifecycleState) -> LifecycleState:
    if target not in LEGAL_TRANSITIONS[current]:
        raise IllegalTransitionError(f"illegal lifecycle transition {current.value} -> {target.value}")
    return target


def _coerce(enum_cls: type[Enum], value: Any) -> Any:
    # Unknown members are kept raw so validation can report them with a path.
    try:
        return enum_cls(value)
    except ValueError:
        return value


@dataclass(frozen=True, order=True)
class Version:
    major: int
    minor: int
    patch: int

    @classmethod
    def parse(cls, text: str) -> "Version":
        m = VERSION_RE.fullmatch(text.strip()) if isinstance(text, str) else None
        if not m:
            raise ValueError(f"version must be major.minor.patch, got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)), int(m.group(3)))

    def bump_major(self) -> "Version":
        return Version(self.major + 1, 0, 0)

    def bump_minor(self) -> "Version":
        return Version(self.major, self.minor + 1, 0)

    def bump_patch(self) -> "Version":
        return Version(self.major, self.minor, self.patch + 1)

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


Bound = Union[int, float, str, None]


@dataclass(frozen=True)
class QualityRule:
    """A row-level check attached to one field.

    Only the parameters of ``kind`` may be set: ``min``/``max`` for range
    (inclusive, either may be open), ``pattern`` for regex and ``values``
    for enum_values.
    """

    kind: RuleKind
    severity: Severity = Severity.ERROR
    min: Bound = None
    max: Bound = None
    pattern: str | None = None
    values: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", _coerce(RuleKind, self.kind))
        object.__setattr__(self, "severity", _coerce(Severity, self.severity))
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class FieldSpec:
    name: str
    logical_type: LogicalType
    nullable: bool = True
    description: str = ""
    rules: tuple[QualityRule, ...] = ()
    pii_class: PiiClass | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "logical_type", _coerce(LogicalType, self.logical_type))
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.pii_class is not None:
            object.__setattr__(self, "pii_class", _coerce(PiiClass, self.pii_class))

    def rule(self, kind: RuleKind) -> QualityRule | None:
        for r in self.rules:
            if r.kind == kind:
                return r
        return None


@dataclass(frozen=True)
class SlaSpec:
    freshness_max_age_seconds: int
    quality_min_pass_rate: float


@dataclass(frozen=True)
class ComplianceSpec:
    pii_fields: tuple[str, ...] = ()
    gdpr: bool = False
    retention_days: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "pii_fields", tuple(self.pii_fields))


@dataclass(frozen=True)
class OwnerSpec:
    team: str
    email: str


@dataclass(frozen=True)
class ProvenanceStamp:
    drafter: DrafterKind
    context_digest: str
    drafted_at: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "drafter", _coerce(DrafterKind, self.drafter))


@dataclass(frozen=True)
class DataContract:
    dataset_name: str
    version: Version
    schema: tuple[FieldSpec, ...]
    sla: SlaSpec
    compliance: ComplianceSpec
    owner: OwnerSpec
    status: LifecycleState
    provenance: ProvenanceStamp

    def __post_init__(self) -> None:
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "status", _coerce(LifecycleState, self.status))

    def field(self, name: str) -> FieldSpec | None:
        for f in self.schema:
            if f.name == name:
                return f
        return None

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.schema]

    def with_status(self, status: LifecycleState) -> "DataContract":
        return replace(self, status=status)


# ---------------------------------------------------------------------------
# validation


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _bound_value(ltype: LogicalType, value: Any) -> Any:
    """Comparable form of a range bound or enum member, or raise ValueError."""
    if ltype in NUMERIC_TYPES:
        if not _is_number(value):
            raise ValueError(f"expected a number for {ltype.value}, got {value!r}")
        if ltype is LogicalType.INTEGER and not float(value).is_integer():
            raise ValueError(f"expected a whole number for integer, got {value!r}")
        return value
    if ltype is LogicalType.DATE:
        return parse_date(value)
    if ltype is LogicalType.TIMESTAMP:
        return parse_utc(value)
    if ltype is LogicalType.STRING:
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return value
    if ltype is LogicalType.BOOLEAN:
        if not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    raise ValueError(f"unsupported type {ltype!r}")


_RULE_TYPES: dict[RuleKind, frozenset[LogicalType] | None] = {
    RuleKind.NOT_NULL: None,
    RuleKind.UNIQUE: None,
    RuleKind.RANGE: NUMERIC_TYPES | TEMPORAL_TYPES,
    RuleKind.REGEX: frozenset({LogicalType.STRING}),
    RuleKind.ENUM_VALUES: frozenset(
        {LogicalType.STRING, LogicalType.INTEGER, LogicalType.DECIMAL, LogicalType.BOOLEAN, LogicalType.DATE}
    ),
}


def validate_rule(rule: QualityRule, ltype: Any, path: str, out: list[Issue]) -> None:
    if not isinstance(rule.kind, RuleKind):
        out.append(Issue(f"{path}.kind", f"unknown rule kind: {rule.kind}"))
        return
    if not isinstance(rule.severity, Severity):
        out.append(Issue(f"{path}.severity", f"unknown severity: {rule.severity}"))
    kind = rule.kind
    allowed = _RULE_TYPES[kind]
    if isinstance(ltype, LogicalType) and allowed is not None and ltype not in allowed:
        out.append(Issue(path, f"rule {kind.value} is not valid for logical_type {ltype.value}"))
        return
    stray = []
    if kind is not RuleKind.RANGE and (rule.min is not None or rule.max is not None):
        stray.append("min/max")
    if kind is not RuleKind.REGEX and rule.pattern is not None:
        stray.append("pattern")
    if kind is not RuleKind.ENUM_VALUES and rule.values:
        stray.append("values")
    if stray:
        out.append(Issue(path, f"parameters {', '.join(stray)} not valid for rule {kind.value}"))
    if not isinstance(ltype, LogicalType):
        return
    if kind is RuleKind.RANGE:
        if rule.min is None and rule.max is None:
            out.append(Issue(path, "range needs at least one bound"))
            return
        bounds = {}
        for key in ("min", "max"):
            raw = getattr(rule, key)
            if raw is None:
                continue
            try:
                bounds[key] = _bound_value(ltype, raw)
            except ValueError as exc:
                out.append(Issue(f"{path}.{key}", str(exc)))
        if len(bounds) == 2 and bounds["min"] > bounds["max"]:
            out.append(Issue(path, f"range min {rule.min!r} exceeds max {rule.max!r}"))
    elif kind is RuleKind.REGEX:
        if not isinstance(rule.pattern, str) or not rule.pattern:
            out.append(Issue(f"{path}.pattern", "regex needs a non-empty pattern"))
        else:
            try:
                re.compile(rule.pattern)
            except (re.error, RecursionError, OverflowError) as exc:
                out.append(Issue(f"{path}.pattern", f"invalid regex: {exc}"))
    elif kind is RuleKind.ENUM_VALUES:
        if not rule.values:
            out.append(Issue(f"{path}.values", "enum_values must be non-empty"))
            return
        seen = []
        for i, v in enumerate(rule.values):
            try:
                key = _bound_value(ltype, v)
            except ValueError as exc:
                out.append(Issue(f"{path}.values[{i}]", str(exc)))
                continue
            if key in seen:
                out.append(Issue(f"{path}.values[{i}]", f"duplicate enum value: {v!r}"))
            seen.append(key)


def validate_contract(contract: DataContract) -> list[Issue]:
    """Return every invariant violation in ``contract`` (empty when valid)."""
    out: list[Issue] = []
    c = contract
    if not isinstance(c.dataset_name, str) or not DATASET_RE.fullmatch(c.dataset_name):
        out.append(Issue("dataset_name", f"invalid dataset name: {c.dataset_name!r}"))
    v = c.version
    if not isinstance(v, Version) or not all(_is_int(x) and x >= 0 for x in (v.major, v.minor, v.patch)):
        out.append(Issue("version", f"invalid version: {v!r}"))
    if not isinstance(c.status, LifecycleState):
        out.append(Issue("status", f"unknown status: {c.status}"))

    seen_names: dict[str, int] = {}
    for i, f in enumerate(c.schema):
        path = f"schema[{i}]"
        if not isinstance(f.name, str) or not IDENT_RE.fullmatch(f.name):
            out.append(Issue(f"{path}.name", f"invalid field name: {f.name!r}"))
        else:
            low = f.name.lower()
            if low in seen_names:
                out.append(Issue(f"{path}.name", f"duplicate field: {f.name}"))
            seen_names[low] = i
        if not isinstance(f.logical_type, LogicalType):
            out.append(Issue(f"{path}.logical_type", f"unknown logical_type: {f.logical_type}"))
        if not isinstance(f.nullable, bool):
            out.append(Issue(f"{path}.nullable", "nullable must be a boolean"))
        if not isinstance(f.description, str):
            out.append(Issue(f"{path}.description", "description must be text"))
        if f.pii_class is not None and not isinstance(f.pii_class, PiiClass):
            out.append(Issue(f"{path}.pii_class", f"unknown pii_class: {f.pii_class}"))
        kinds = set()
        for j, rule in enumerate(f.rules):
            rpath = f"{path}.rules[{j}]"
            if rule.kind in kinds:
                out.append(Issue(rpath, f"duplicate rule kind on field {f.name}: {rule.kind.value}"))
            kinds.add(rule.kind)
            validate_rule(rule, f.logical_type, rpath, out)

    sla = c.sla
    if not _is_int(sla.freshness_max_age_seconds) or sla.freshness_max_age_seconds <= 0:
        out.append(Issue("sla.freshness_max_age_seconds", "must be a positive integer"))
    if not _is_number(sla.quality_min_pass_rate) or not 0 <= sla.quality_min_pass_rate <= 1:
        out.append(Issue("sla.quality_min_pass_rate", "must be a fraction in [0, 1]"))

    comp = c.compliance
    names = {f.name for f in c.schema}
    seen_pii: set[str] = set()
    for i, name in enumerate(comp.pii_fields):
        if name in seen_pii:
            out.append(Issue(f"compliance.pii_fields[{i}]", f"duplicate pii field: {name}"))
        seen_pii.add(name)
        if name not in names:
            out.append(Issue(f"compliance.pii_fields[{i}]", f"pii field references unknown field: {name}"))
    if not isinstance(comp.gdpr, bool):
        out.append(Issue("compliance.gdpr", "gdpr must be a boolean"))
    if comp.retention_days is not None and (not _is_int(comp.retention_days) or comp.retention_days <= 0):
        out.append(Issue("compliance.retention_days", "retention_days must be a positive integer"))

    own = c.owner
    if not isinstance(own.team, str) or not own.team.strip():
        out.append(Issue("owner.team", "team must be non-empty"))
    if not valid_email(own.email):
        out.append(Issue("owner.email", f"invalid email: {own.email!r}"))

    prov = c.provenance
    if not isinstance(prov.drafter, DrafterKind):
        out.append(Issue("provenance.drafter", f"unknown drafter: {prov.drafter}"))
    if not isinstance(prov.context_digest, str) or not HEX_RE.fullmatch(prov.context_digest):
        out.append(Issue("provenance.context_digest", "context_digest must be lowercase hex"))
    if not isinstance(prov.drafted_at, datetime) or prov.drafted_at.tzinfo is None:
        out.append(Issue("provenance.drafted_at", "drafted_at must be an aware UTC timestamp"))
    return out


def valid_email(email: Any) -> bool:
    return isinstance(email, str) and email.count("@") == 1 and bool(EMAIL_RE.fullmatch(email))


def ensure_valid(contract: DataContract) -> DataContract:
    issues = validate_contract(contract)
    if issues:
        raise ContractValidationError(issues)
    return contract


# ---------------------------------------------------------------------------
# serialization


def _q(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _lit(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False)


def _rule_lines(rule: QualityRule, indent: str) -> list[str]:
    lines = [f"{indent}- kind: {rule.kind.value}", f"{indent}  severity: {rule.severity.value}"]
    if rule.kind is RuleKind.RANGE:
        lines.append(f"{indent}  min: {_lit(rule.min)}")
        lines.append(f"{indent}  max: {_lit(rule.max)}")
    elif rule.kind is RuleKind.REGEX:
        lines.append(f"{indent}  pattern: {_q(rule.pattern)}")
    elif rule.kind is RuleKind.ENUM_VALUES:
        lines.append(f"{indent}  values: {_lit(list(rule.values))}")
    return lines


def serialize(contract: DataContract) -> str:
    """Render the canonical document for ``contract``.

    Raises ContractValidationError if the contract breaks any invariant.
    """
    ensure_valid(contract)
    c = contract
    out = [
        f"dataset_name: {c.dataset_name}",
        f"version: {c.version}",
        f"status: {c.status.value}",
        "owner:",
        f"  team: {_q(c.owner.team)}",
        f"  email: {_q(c.owner.email)}",
    ]
    if not c.schema:
        out.append("schema: []")
    else:
        out.append("schema:")
        for f in c.schema:
            out.append(f"  - name: {f.name}")
            out.append(f"    logical_type: {f.logical_type.value}")
            out.append(f"    nullable: {_lit(f.nullable)}")
            out.append(f"    description: {_q(f.description)}")
            out.append(f"    pii_class: {f.pii_class.value if f.pii_class is not None else 'null'}")
            if not f.rules:
                out.append("    rules: []")
            else:
                out.append("    rules:")
                for rule in f.rules:
                    out.extend(_rule_lines(rule, "      "))
    out += [
        "sla:",
        f"  freshness_max_age_seconds: {_lit(c.sla.freshness_max_age_seconds)}",
        f"  quality_min_pass_rate: {_lit(c.sla.quality_min_pass_rate)}",
        "compliance:",
        f"  pii_fields: {_lit(list(c.compliance.pii_fields))}",
        f"  gdpr: {_lit(c.compliance.gdpr)}",
        f"  retention_days: {_lit(c.compliance.retention_days)}",
        "provenance:",
        f"  drafter: {c.provenance.drafter.value}",
        f"  context_digest: {c.provenance.context_digest}",
        f"  drafted_at: {format_utc(c.provenance.drafted_at)}",
    ]
    return "\n".join(out) + "\n"


def content_digest(contract: DataContract) -> str:
    """SHA-256 hex digest of the canonical serialization."""
    return hashlib.sha256(serialize(contract).encode("utf-8")).hexdigest()


# Closed key schema, also rendered into model prompts.
CONTRACT_KEYS: dict[str, Any] = {
    "dataset_name": "dotted identifier",
    "version": "major.minor.patch",
    "status": [s.value for s in LifecycleState],
    "owner": {"team": "text", "email": "text"},
    "schema": [
        {
            "name": "identifier",
            "logical_type": [t.value for t in LogicalType],
            "nullable": "boolean",
            "description": "text",
            "pii_class": [p.value for p in PiiClass] + ["null"],
            "rules": [
                {
                    "kind": [k.value for k in RuleKind],
                    "severity": [s.value for s in Severity],
                    "min": "range only: number, ISO date/timestamp string, or null",
                    "max": "range only: number, ISO date/timestamp string, or null",
                    "pattern": "regex only: text",
                    "values": "enum_values only: JSON array",
                }
            ],
        }
    ],
    "sla": {"freshness_max_age_seconds": "positive integer", "quality_min_pass_rate": "number in [0, 1]"},
    "compliance": {"pii_fields": "JSON array of field names", "gdpr": "boolean", "retention_days": "positive integer or null"},
    "provenance": {"drafter": [d.value for d in DrafterKind], "context_digest": "hex", "drafted_at": "ISO-8601 UTC"},
}


# ---------------------------------------------------------------------------
# parsing

_KEY_LINE_RE = re.compile(r"([a-z_]+):(?: (.*))?")
_MAX_DEPTH = 6


class _SyntaxFail(Exception):
    def __init__(self, line: int, message: str):
        self.issue = Issue("", message, line)


@dataclass
class _Scalar:
    text: str
    line: int


@dataclass
class _Map:
    line: int
    entries: dict[str, Any] = field(default_factory=dict)
    key_lines: dict[str, int] = field(default_factory=dict)


@dataclass
class _List:
    line: int
    items: list[_Map] = field(default_factory=list)


def _tokenize(document: str) -> list[tuple[int, int, str]]:
    rows = []
    for no, raw in enumerate(document.split("\n"), start=1):
        line = raw.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        body = line.lstrip(" ")
        if body.startswith("\t") or "\t" in line[: len(line) - len(body)]:
            raise _SyntaxFail(no, "tabs are not allowed in indentation")
        rows.append((no, len(line) - len(body), body.rstrip()))
    return rows


class _TreeParser:
    def __init__(self, rows: list[tuple[int, int, str]]):
        self.rows = rows
        self.pos = 0

    def peek(self) -> tuple[int, int, str] | None:
        return self.rows[self.pos] if self.pos < len(self.rows) else None

    def parse_map(self, indent: int, first_line: int, depth: int) -> _Map:
        if depth > _MAX_DEPTH:
            raise _SyntaxFail(first_line, "nesting too deep")
        node = _Map(first_line)
        while True:
            row = self.peek()
            if row is None or row[1] < indent:
                return node
            no, ind, body = row
            if ind > indent:
                raise _SyntaxFail(no, "unexpected indentation")
            if body.startswith("- "):
                return node
            m = _KEY_LINE_RE.fullmatch(body)
            if not m:
                raise _SyntaxFail(no, f"expected 'key: value', got {body[:40]!r}")
            key, value = m.group(1), m.group(2)
            self.pos += 1
            if key in node.entries:
                raise _SyntaxFail(no, f"duplicate key: {key}")
            node.key_lines[key] = no
            if value is not None and value.strip():
                node.entries[key] = _Scalar(value.strip(), no)
                continue
            nxt = self.peek()
            if nxt is None or nxt[1] <= indent:
                raise _SyntaxFail(no, f"missing value for key: {key}")
            if nxt[2].startswith("- "):
                node.entries[key] = self.parse_list(nxt[1], no, depth + 1)
            else:
                node.entries[key] = self.parse_map(nxt[1], no, depth + 1)

    def parse_list(self, indent: int, first_line: int, depth: int) -> _List:
        node = _List(first_line)
        while True:
            row = self.peek()
            if row is None or row[1] < indent:
                return node
            no, ind, body = row
            if ind > indent or not body.startswith("- "):
                raise _SyntaxFail(no, "expected list item '- key: value'")
            # Re-read the item head as a key line two columns deeper.
            self.rows[self.pos] = (no, indent + 2, body[2:].lstrip(" "))
            node.items.append(self.parse_map(indent + 2, no, depth + 1))


class _Converter:
    def __init__(self) -> None:
        self.issues: list[Issue] = []
        self.lines: dict[str, int] = {}

    def fail(self, path: str, message: str, line: int | None) -> None:
        self.issues.append(Issue(path, message, line))

    def keys(self, node: Any, path: str, required: Iterable[str], optional: Iterable[str] = ()) -> dict | None:
        if not isinstance(node, _Map):
            self.fail(path, "expected a mapping", getattr(node, "line", None))
            return None
        required = list(required)
        allowed = set(required) | set(optional)
        for key, line in node.key_lines.items():
            self.lines[f"{path}.{key}" if path else key] = line
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, f"unknown key: {key}", line)
        for key in required:
            if key not in node.entries:
                self.fail(path, f"missing key: {key}", node.line)
        return node.entries

    def scalar(self, node: Any, path: str) -> _Scalar | None:
        if not isinstance(node, _Scalar):
            self.fail(path, "expected a scalar value", getattr(node, "line", None))
            return None
        return node

    def json(self, node: Any, path: str) -> tuple[bool, Any]:
        s = self.scalar(node, path)
        if s is None:
            return False, None
        try:
            return True, json.loads(s.text)
        except (ValueError, RecursionError):
            self.fail(path, f"invalid literal: {s.text[:40]!r}", s.line)
            return False, None

    def bare(self, node: Any, path: str, pattern: re.Pattern[str], what: str) -> str | None:
        s = self.scalar(node, path)
        if s is None:
            return None
        if not pattern.fullmatch(s.text):
            self.fail(path, f"invalid {what}: {s.text[:40]!r}", s.line)
            return None
        return s.text

    def enum(self, node: Any, path: str, enum_cls: type[Enum], allow_null: bool = False) -> Any:
        s = self.scalar(node, path)
        if s is None:
            return None
        if allow_null and s.text == "null":
            return None
        try:
            return enum_cls(s.text)
        except ValueError:
            self.fail(path, f"unknown {path.rsplit('.', 1)[-1]}: {s.text[:40]!r}", s.line)
            return None

    def typed(self, node: Any, path: str, check, what: str) -> Any:
        ok, value = self.json(node, path)
        if ok and not check(value):
            self.fail(path, f"expected {what}", node.line)
            return None
        return value

    def text(self, node: Any, path: str) -> str | None:
        return self.typed(node, path, lambda v: isinstance(v, str), "a quoted string")

    def boolean(self, node: Any, path: str) -> bool | None:
        return self.typed(node, path, lambda v: isinstance(v, bool), "true or false")


def _block_list(conv: _Converter, node: Any, path: str) -> list[_Map]:
    if isinstance(node, _Scalar) and node.text == "[]":
        return []
    if isinstance(node, _List):
        conv.lines[path] = node.line
        return node.items
    conv.fail(path, "expected a list", getattr(node, "line", None))
    return []


def _convert_rule(conv: _Converter, node: _Map, path: str) -> QualityRule | None:
    conv.lines[path] = node.line
    e = conv.keys(node, path, ["kind", "severity"], ["min", "max", "pattern", "values"])
    if e is None or "kind" not in e:
        return None
    kind = conv.enum(e["kind"], f"{path}.kind", RuleKind)
    severity = conv.enum(e["severity"], f"{path}.severity", Severity) if "severity" in e else None
    if kind is None or severity is None:
        return None
    params: dict[str, Any] = {}
    expected = {
        RuleKind.RANGE: ("min", "max"),
        RuleKind.REGEX: ("pattern",),
        RuleKind.ENUM_VALUES: ("values",),
    }.get(kind, ())
    for key in ("min", "max", "pattern", "values"):
        if key in e and key not in expected:
            conv.fail(f"{path}.{key}", f"unknown key: {key} (not a {kind.value} parameter)", node.key_lines[key])
    for key in expected:
        if key not in e:
            conv.fail(path, f"missing key: {key}", node.line)
            continue
        ok, value = conv.json(e[key], f"{path}.{key}")
        if not ok:
            continue
        if key in ("min", "max") and not (value is None or _is_number(value) or isinstance(value, str)):
            conv.fail(f"{path}.{key}", "expected a number, date string or null", e[key].line)
            continue
        if key == "pattern" and not isinstance(value, str):
            conv.fail(f"{path}.{key}", "expected a quoted string", e[key].line)
            continue
        if key == "values":
            if not isinstance(value, list) or any(isinstance(v, (list, dict)) or v is None for v in value):
                conv.fail(f"{path}.{key}", "expected a JSON array of scalars", e[key].line)
                continue
            value = tuple(value)
        params[key] = value
    return QualityRule(kind=kind, severity=severity, **params)


def _convert_field(conv: _Converter, node: _Map, path: str) -> FieldSpec | None:
    conv.lines[path] = node.line
    e = conv.keys(node, path, ["name", "logical_type", "nullable", "description", "pii_class", "rules"])
    if e is None:
        return None
    name = conv.bare(e["name"], f"{path}.name", IDENT_RE, "field name") if "name" in e else None
    ltype = conv.enum(e["logical_type"], f"{path}.logical_type", LogicalType) if "logical_type" in e else None
    nullable = conv.boolean(e["nullable"], f"{path}.nullable") if "nullable" in e else None
    desc = conv.text(e["description"], f"{path}.description") if "description" in e else None
    pii = conv.enum(e["pii_class"], f"{path}.pii_class", PiiClass, allow_null=True) if "pii_class" in e else None
    rules = []
    if "rules" in e:
        for j, item in enumerate(_block_list(conv, e["rules"], f"{path}.rules")):
            r = _convert_rule(conv, item, f"{path}.rules[{j}]")
            if r is not None:
                rules.append(r)
    if None in (name, ltype, nullable, desc):
        return None
    return FieldSpec(name=name, logical_type=ltype, nullable=nullable, description=desc, rules=tuple(rules), pii_class=pii)


_PLACEHOLDER_PROVENANCE = ProvenanceStamp(DrafterKind.MODEL, "0" * 64, datetime(1970, 1, 1, tzinfo=timezone.utc))


def _has(entries: dict, *keys: str) -> bool:
    return all(k in entries for k in keys)


def _convert(conv: _Converter, root: _Map, require_provenance: bool) -> DataContract | None:
    top = ["dataset_name", "version", "status", "owner", "schema", "sla", "compliance"]
    e = conv.keys(root, "", top + (["provenance"] if require_provenance else []), [] if require_provenance else ["provenance"])
    assert e is not None
    name = conv.bare(e["dataset_name"], "dataset_name", DATASET_RE, "dataset name") if "dataset_name" in e else None
    version = None
    if "version" in e:
        raw = conv.bare(e["version"], "version", VERSION_RE, "version (expected major.minor.patch)")
        version = Version.parse(raw) if raw is not None else None
    status = conv.enum(e["status"], "status", LifecycleState) if "status" in e else None

    owner = None
    if "owner" in e:
        oe = conv.keys(e["owner"], "owner", ["team", "email"])
        if oe is not None and "team" in oe and "email" in oe:
            team, email = conv.text(oe["team"], "owner.team"), conv.text(oe["email"], "owner.email")
            if team is not None and email is not None:
                owner = OwnerSpec(team, email)

    fields_: list[FieldSpec] = []
    schema_ok = "schema" in e
    if schema_ok:
        for i, item in enumerate(_block_list(conv, e["schema"], "schema")):
            f = _convert_field(conv, item, f"schema[{i}]")
            if f is None:
                schema_ok = False
            else:
                fields_.append(f)

    sla = None
    if "sla" in e:
        se = conv.keys(e["sla"], "sla", ["freshness_max_age_seconds", "quality_min_pass_rate"])
        if se is not None and _has(se, "freshness_max_age_seconds", "quality_min_pass_rate"):
            fresh = conv.typed(se["freshness_max_age_seconds"], "sla.freshness_max_age_seconds", _is_int, "an integer")
            rate = conv.typed(se["quality_min_pass_rate"], "sla.quality_min_pass_rate", _is_number, "a number")
            if fresh is not None and rate is not None:
                sla = SlaSpec(fresh, rate)

    comp = None
    if "compliance" in e:
        ce = conv.keys(e["compliance"], "compliance", ["pii_fields", "gdpr", "retention_days"])
        if ce is not None and _has(ce, "pii_fields", "gdpr", "retention_days"):
            pii = conv.typed(
                ce["pii_fields"],
                "compliance.pii_fields",
                lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
                "a JSON array of field names",
            )
            gdpr = conv.boolean(ce["gdpr"], "compliance.gdpr")
            ok, retention = conv.json(ce["retention_days"], "compliance.retention_days")
            if ok and retention is not None and not _is_int(retention):
                conv.fail("compliance.retention_days", "expected an integer or null", ce["retention_days"].line)
                ok = False
            if pii is not None and gdpr is not None and ok:
                comp = ComplianceSpec(tuple(pii), gdpr, retention)

    prov = _PLACEHOLDER_PROVENANCE
    if "provenance" in e:
        prov = None
        pe = conv.keys(e["provenance"], "provenance", ["drafter", "context_digest", "drafted_at"])
        if pe is not None and _has(pe, "drafter", "context_digest", "drafted_at"):
            drafter = conv.enum(pe["drafter"], "provenance.drafter", DrafterKind)
            digest = conv.bare(pe["context_digest"], "provenance.context_digest", HEX_RE, "hex digest")
            ts = conv.scalar(pe["drafted_at"], "provenance.drafted_at")
            when = None
            if ts is not None:
                try:
                    when = parse_utc(ts.text)
                except ValueError as exc:
                    conv.fail("provenance.drafted_at", str(exc), ts.line)
            if drafter is not None and digest is not None and when is not None:
                prov = ProvenanceStamp(drafter, digest, when)

    parts = (name, version, status, owner, sla, comp, prov)
    if conv.issues or not schema_ok or any(p is None for p in parts):
        return None
    return DataContract(name, version, tuple(fields_), sla, comp, owner, status, prov)


def _line_for(path: str, lines: dict[str, int]) -> int | None:
    probe = path
    while probe:
        if probe in lines:
            return lines[probe]
        cut = max(probe.rfind("."), probe.rfind("["))
        probe = probe[:cut] if cut > 0 else ""
    return None


def parse(document: str, *, require_provenance: bool = True) -> DataContract:
    """Parse a contract document.

    Raises ContractValidationError carrying positioned issues for malformed
    syntax, unknown or missing keys, bad versions and invariant violations.
    With ``require_provenance=False`` a missing provenance block is replaced
    by a placeholder stamp the caller is expected to overwrite.
    """
    if not isinstance(document, str):
        raise ContractValidationError([Issue("", "document must be text")])
    try:
        rows = _tokenize(document)
        if not rows:
            raise _SyntaxFail(1, "empty document")
        if rows[0][1] != 0:
            raise _SyntaxFail(rows[0][0], "document must start at column 0")
        tp = _TreeParser(rows)
        root = tp.parse_map(0, rows[0][0], 0)
        if tp.peek() is not None:
            raise _SyntaxFail(tp.peek()[0], "unexpected content")
    except _SyntaxFail as fail:
        raise ContractValidationError([fail.issue]) from None
    conv = _Converter()
    contract = _convert(conv, root, require_provenance)
    if contract is None:
        raise ContractValidationError(conv.issues or [Issue("", "incomplete contract document")])
    issues = validate_contract(contract)
    if issues:
        raise ContractValidationError([Issue(i.path, i.message, _line_for(i.path, conv.lines)) for i in issues])
    return contract


def bound_key(ltype: LogicalType, value: Any) -> Any:
    """Comparable form of a validated range bound or enum member."""
    return _bound_value(ltype, value)


__all__ = [
    "ComplianceSpec",
    "DataContract",
    "DrafterKind",
    "FieldSpec",
    "LifecycleState",
    "LogicalType",
    "OwnerSpec",
    "PiiClass",
    "ProvenanceStamp",
    "QualityRule",
    "RuleKind",
    "Severity",
    "SlaSpec",
    "Version",
    "check_transition",
    "ensure_valid",
    "content_digest",
    "parse",
    "serialize",
    "validate_contract",
]
