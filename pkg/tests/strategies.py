"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

from hypothesis import strategies as st

from meshgate.contract_model import (
    ComplianceSpec,
    DataContract,
    DrafterKind,
    FieldSpec,
    LifecycleState,
    LogicalType,
    OwnerSpec,
    PiiClass,
    ProvenanceStamp,
    QualityRule,
    RuleKind,
    Severity,
    SlaSpec,
    Version,
)

# Built from alphabets rather than st.from_regex, which is several times slower.
LOWER = "abcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"
IDENT = st.builds(str.__add__, st.sampled_from(LOWER), st.text(alphabet=LOWER + DIGITS + "_", max_size=10))
DATASET = st.lists(IDENT, min_size=1, max_size=3).map(".".join)
EMAIL = st.builds(
    "{}@{}.{}".format,
    st.text(alphabet=LOWER + DIGITS + "._-", min_size=1, max_size=8),
    st.text(alphabet=LOWER + DIGITS + "-", min_size=1, max_size=8),
    st.sampled_from(["com", "org", "io", "example"]),
)
HEX_DIGEST = st.binary(min_size=32, max_size=32).map(bytes.hex)
UTC_TIMES = st.datetimes(
    min_value=datetime(2000, 1, 1), max_value=datetime(2099, 12, 31), timezones=st.just(timezone.utc)
)
DATE_TEXT = st.dates().map(lambda d: d.isoformat())
TIMESTAMP_TEXT = UTC_TIMES.map(lambda d: d.strftime("%Y-%m-%dT%H:%M:%SZ"))
FINITE = st.floats(allow_nan=False, allow_infinity=False)
PATTERNS = st.sampled_from([r"[A-Z]{3}-\d+", r".+@.+", r"^\w*$", r"(a|b)+", "x"])


def _compiles(p: str) -> bool:
    try:
        re.compile(p)
    except (re.error, RecursionError, OverflowError):
        return False
    return bool(p)


def _ordered(lo, hi, key=lambda v: v):
    return (lo, hi) if key(lo) <= key(hi) else (hi, lo)


@st.composite
def range_rules(draw, ltype: LogicalType) -> QualityRule:
    if ltype is LogicalType.INTEGER:
        values = st.integers(-10**12, 10**12)
        key = float
    elif ltype is LogicalType.DATE:
        values, key = DATE_TEXT, str
    elif ltype is LogicalType.TIMESTAMP:
        values, key = TIMESTAMP_TEXT, str
    else:
        values, key = st.one_of(st.integers(-10**6, 10**6), FINITE), float
    lo, hi = _ordered(draw(values), draw(values), key)
    shape = draw(st.sampled_from(["both", "min", "max"]))
    return QualityRule(
        RuleKind.RANGE,
        draw(st.sampled_from(Severity)),
        min=None if shape == "max" else lo,
        max=None if shape == "min" else hi,
    )


@st.composite
def enum_rules(draw, ltype: LogicalType) -> QualityRule:
    if ltype is LogicalType.STRING:
        values = draw(st.lists(st.text(max_size=8), min_size=1, max_size=5, unique=True))
    elif ltype in (LogicalType.INTEGER, LogicalType.DECIMAL):
        values = draw(st.lists(st.integers(-1000, 1000), min_size=1, max_size=5, unique=True))
    elif ltype is LogicalType.BOOLEAN:
        values = draw(st.sampled_from([[True], [False], [True, False]]))
    else:
        values = draw(st.lists(DATE_TEXT, min_size=1, max_size=4, unique=True))
    return QualityRule(RuleKind.ENUM_VALUES, draw(st.sampled_from(Severity)), values=tuple(values))


@st.composite
def rules_for(draw, ltype: LogicalType) -> tuple[QualityRule, ...]:
    kinds = [RuleKind.NOT_NULL, RuleKind.UNIQUE]
    if ltype in (LogicalType.INTEGER, LogicalType.FLOAT, LogicalType.DECIMAL, LogicalType.DATE, LogicalType.TIMESTAMP):
        kinds.append(RuleKind.RANGE)
    if ltype is LogicalType.STRING:
        kinds.append(RuleKind.REGEX)
    if ltype is not LogicalType.FLOAT and ltype is not LogicalType.TIMESTAMP:
        kinds.append(RuleKind.ENUM_VALUES)
    chosen = draw(st.lists(st.sampled_from(kinds), unique=True, max_size=len(kinds)))
    out = []
    for kind in chosen:
        if kind is RuleKind.RANGE:
            out.append(draw(range_rules(ltype)))
        elif kind is RuleKind.ENUM_VALUES:
            out.append(draw(enum_rules(ltype)))
        elif kind is RuleKind.REGEX:
            pattern = draw(st.one_of(PATTERNS, st.text(min_size=1, max_size=6).filter(_compiles)))
            out.append(QualityRule(kind, draw(st.sampled_from(Severity)), pattern=pattern))
        else:
            out.append(QualityRule(kind, draw(st.sampled_from(Severity))))
    return tuple(out)


@st.composite
def fields(draw, name: str) -> FieldSpec:
    ltype = draw(st.sampled_from(LogicalType))
    return FieldSpec(
        name=name,
        logical_type=ltype,
        nullable=draw(st.booleans()),
        description=draw(st.text(max_size=30)),
        rules=draw(rules_for(ltype)),
        pii_class=draw(st.one_of(st.none(), st.sampled_from(PiiClass))),
    )


@st.composite
def contracts(draw, max_fields: int = 6, dataset: str | None = None) -> DataContract:
    names = draw(st.lists(IDENT, max_size=max_fields, unique=True))
    schema = tuple(draw(fields(n)) for n in names)
    pii = draw(st.lists(st.sampled_from(names), unique=True)) if names else []
    return DataContract(
        dataset_name=dataset or draw(DATASET),
        version=Version(*draw(st.tuples(*[st.integers(0, 999)] * 3))),
        schema=schema,
        sla=SlaSpec(draw(st.integers(1, 10**8)), draw(st.floats(0, 1))),
        compliance=ComplianceSpec(tuple(pii), draw(st.booleans()), draw(st.one_of(st.none(), st.integers(1, 10**5)))),
        owner=OwnerSpec(draw(st.text(min_size=1, max_size=12).filter(str.strip)), draw(EMAIL)),
        status=draw(st.sampled_from(LifecycleState)),
        provenance=ProvenanceStamp(
            draw(st.sampled_from(DrafterKind)),
            draw(HEX_DIGEST),
            draw(UTC_TIMES),
        ),
    )


class StepClock:
    """Deterministic clock advancing a fixed step per call."""

    def __init__(self, start: datetime = datetime(2026, 1, 1, tzinfo=timezone.utc), step_seconds: int = 60):
        self.now = start
        self.step = timedelta(seconds=step_seconds)

    def __call__(self) -> datetime:
        self.now += self.step
        return self.now


# -- small contract pairs for the compatibility oracle -----------------------

PAIR_NAMES = ("a", "b", "c", "d", "e", "f")
PAIR_TYPES = (LogicalType.INTEGER, LogicalType.STRING, LogicalType.BOOLEAN, LogicalType.DATE)
PAIR_PII = (None, PiiClass.NONE, PiiClass.QUASI_IDENTIFIER, PiiClass.DIRECT_IDENTIFIER, PiiClass.FINANCIAL)


@st.composite
def small_rules(draw, ltype: LogicalType) -> tuple[QualityRule, ...]:
    sev = st.sampled_from(Severity)
    out = []
    if draw(st.booleans()):
        out.append(QualityRule(RuleKind.NOT_NULL, draw(sev)))
    if ltype is not LogicalType.BOOLEAN and draw(st.booleans()):
        out.append(QualityRule(RuleKind.UNIQUE, draw(sev)))
    if ltype is LogicalType.INTEGER:
        if draw(st.booleans()):
            lo, hi = sorted(draw(st.tuples(st.integers(0, 9), st.integers(0, 9))))
            shape = draw(st.sampled_from(["both", "min", "max"]))
            out.append(
                QualityRule(RuleKind.RANGE, draw(sev), min=None if shape == "max" else lo, max=None if shape == "min" else hi)
            )
        if draw(st.booleans()):
            vals = draw(st.lists(st.integers(0, 9), min_size=1, max_size=4, unique=True))
            out.append(QualityRule(RuleKind.ENUM_VALUES, draw(sev), values=tuple(vals)))
    elif ltype is LogicalType.STRING:
        if draw(st.booleans()):
            out.append(QualityRule(RuleKind.REGEX, draw(sev), pattern=draw(st.sampled_from(["x", "y+", "[xy]"]))))
        if draw(st.booleans()):
            vals = draw(st.lists(st.sampled_from(["x", "y", "z"]), min_size=1, max_size=3, unique=True))
            out.append(QualityRule(RuleKind.ENUM_VALUES, draw(sev), values=tuple(vals)))
    elif ltype is LogicalType.BOOLEAN and draw(st.booleans()):
        out.append(QualityRule(RuleKind.ENUM_VALUES, draw(sev), values=tuple(draw(st.sampled_from([[True], [False], [True, False]])))))
    return tuple(draw(st.permutations(out)))


@st.composite
def small_field(draw, name: str, ltype: LogicalType | None = None) -> FieldSpec:
    ltype = ltype or draw(st.sampled_from(PAIR_TYPES))
    return FieldSpec(
        name,
        ltype,
        draw(st.booleans()),
        draw(st.sampled_from(["", "id", "amount"])),
        draw(small_rules(ltype)),
        draw(st.sampled_from(PAIR_PII)),
    )


def _small_contract(schema, sla, comp, owner) -> DataContract:
    return DataContract(
        "sales.orders",
        Version(1, 0, 0),
        tuple(schema),
        sla,
        comp,
        owner,
        LifecycleState.APPROVED,
        ProvenanceStamp(DrafterKind.DETERMINISTIC, "0" * 64, datetime(2026, 1, 1, tzinfo=timezone.utc)),
    )


SMALL_SLA = st.builds(SlaSpec, st.sampled_from([60, 3600, 86400]), st.sampled_from([0.9, 0.95, 1.0]))
SMALL_OWNER = st.builds(OwnerSpec, st.sampled_from(["sales", "ops"]), st.just("t@example.com"))


@st.composite
def small_compliance(draw, names) -> ComplianceSpec:
    pii = draw(st.lists(st.sampled_from(names), unique=True)) if names else []
    return ComplianceSpec(tuple(pii), draw(st.booleans()), draw(st.sampled_from([None, 30, 365])))


@st.composite
def contract_pairs(draw) -> tuple[DataContract, DataContract]:
    """(old, new) with at most 6 fields each; new is usually a light edit of old."""
    old_names = draw(st.lists(st.sampled_from(PAIR_NAMES), unique=True, max_size=6))
    old_schema = [draw(small_field(n)) for n in old_names]
    new_schema = []
    for f in old_schema:
        action = draw(st.sampled_from(["keep", "keep", "keep", "drop", "edit", "retype", "flip_null", "rules"]))
        if action == "keep":
            new_schema.append(f)
        elif action == "edit":
            new_schema.append(draw(small_field(f.name, f.logical_type)))
        elif action == "retype":
            new_schema.append(draw(small_field(f.name)))
        elif action == "flip_null":
            new_schema.append(FieldSpec(f.name, f.logical_type, not f.nullable, f.description, f.rules, f.pii_class))
        elif action == "rules":
            new_schema.append(FieldSpec(f.name, f.logical_type, f.nullable, f.description, draw(small_rules(f.logical_type)), f.pii_class))
    spare = [n for n in PAIR_NAMES if n not in old_names]
    for n in draw(st.lists(st.sampled_from(spare), unique=True, max_size=2)) if spare else []:
        new_schema.append(draw(small_field(n)))
    new_schema = draw(st.permutations(new_schema)) if draw(st.booleans()) else new_schema

    old_sla, old_owner = draw(SMALL_SLA), draw(SMALL_OWNER)
    old_comp = draw(small_compliance(old_names))
    new_names = [f.name for f in new_schema]
    keep_meta = draw(st.booleans())
    new_sla = old_sla if keep_meta else draw(SMALL_SLA)
    new_owner = old_owner if keep_meta else draw(SMALL_OWNER)
    if keep_meta and set(old_comp.pii_fields) <= set(new_names):
        new_comp = old_comp
    else:
        new_comp = draw(small_compliance(new_names))
    return (
        _small_contract(old_schema, old_sla, old_comp, old_owner),
        _small_contract(new_schema, new_sla, new_comp, new_owner),
    )
