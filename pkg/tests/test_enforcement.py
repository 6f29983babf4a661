from __future__ import annotations

import json
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshgate.contract_model import (
    ComplianceSpec,
    FieldSpec,
    LifecycleState,
    LogicalType,
    OwnerSpec,
    PiiClass,
    QualityRule,
    RuleKind,
    Severity,
    SlaSpec,
)
from meshgate.enforcement import (
    EXCERPT_CHARS,
    DatasetSample,
    PiiFinding,
    PiiFindings,
    apply_classification,
    check_freshness,
    conforms,
    find_credit_cards,
    load_sample,
    luhn_valid,
    profile_pii,
    scan_text,
    validate_dataset,
)
from meshgate.errors import ClockSkewError, DatasetMismatchError, FixtureError
from oracles import luhn_reference
from strategies import _small_contract

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
NOW = datetime(2026, 3, 2, 12, tzinfo=timezone.utc)


def orders_contract(limit: int = 86400, min_rate: float = 0.95, amount_rules=None, **kw):
    rules = (QualityRule(RuleKind.RANGE, min=0),) if amount_rules is None else amount_rules
    schema = (
        FieldSpec("order_id", LogicalType.INTEGER, False, "id", (QualityRule(RuleKind.UNIQUE),), PiiClass.NONE),
        FieldSpec("amount", LogicalType.DECIMAL, False, "total", rules, PiiClass.NONE),
        FieldSpec("contact", LogicalType.STRING, True, "", (), None),
    )
    c = _small_contract(schema, SlaSpec(limit, min_rate), ComplianceSpec(), OwnerSpec("sales", "s@example.com"))
    return replace(c, **kw)


def rows(n: int = 10, **override):
    out = [{"order_id": i, "amount": 10 + i, "contact": None} for i in range(n)]
    for idx, values in override.items():
        out[int(idx.lstrip("r"))].update(values)
    return out


def sample(rs, last_updated=NOW - timedelta(hours=1), name="sales.orders"):
    return DatasetSample(name, tuple(rs), last_updated)


# -- validate_dataset ----------------------------------------------------------


def test_conforming_sample_passes():
    rep = validate_dataset(orders_contract(), sample(rows()), NOW)
    assert rep.verdict == "pass"
    assert rep.pass_rate == 1.0
    assert rep.schema_findings == () and rep.rule_findings == ()
    assert rep.freshness.age_seconds == 3600 and rep.freshness.passed


def test_missing_column_fails():
    rs = [{k: v for k, v in r.items() if k != "amount"} for r in rows()]
    rep = validate_dataset(orders_contract(), sample(rs), NOW)
    assert ("amount", "missing") in [(f.column, f.issue) for f in rep.schema_findings]
    assert rep.verdict == "fail"


def test_one_negative_of_ten():
    rep = validate_dataset(orders_contract(), sample(rows(r4={"amount": -5})), NOW)
    assert len(rep.rule_findings) == 1
    finding = rep.rule_findings[0]
    assert (finding.field, finding.kind, finding.rows, finding.severity) == ("amount", RuleKind.RANGE, (4,), Severity.ERROR)
    assert rep.pass_rate == pytest.approx(9 / 10, abs=1e-12)
    assert rep.verdict == "fail"


def test_one_negative_passes_lower_threshold():
    rep = validate_dataset(orders_contract(min_rate=0.9), sample(rows(r4={"amount": -5})), NOW)
    assert rep.verdict == "pass"


def test_fixture_samples():
    ok = load_sample(FIXTURES / "samples" / "orders_ok.jsonl")
    assert ok.dataset_name == "sales.orders" and len(ok.rows) == 10
    bad = load_sample(FIXTURES / "samples" / "orders_one_negative.jsonl")
    assert bad.last_updated == ok.last_updated


def test_extra_type_and_null_findings():
    rs = rows(r1={"order_id": "x"}, r2={"amount": None})
    for r in rs:
        r["note"] = "hi"
    rep = validate_dataset(orders_contract(), sample(rs), NOW)
    issues = {(f.column, f.issue, f.rows) for f in rep.schema_findings}
    assert issues == {("order_id", "type_mismatch", (1,)), ("amount", "null_violation", (2,)), ("note", "extra", ())}


def test_unique_rule_flags_repeats_only():
    rep = validate_dataset(orders_contract(), sample(rows(r3={"order_id": 1}, r5={"order_id": 1})), NOW)
    uniq = [f for f in rep.rule_findings if f.kind is RuleKind.UNIQUE]
    assert uniq[0].rows == (3, 5)
    assert rep.pass_rate == pytest.approx(0.8)


def test_warn_rules_never_affect_pass_rate():
    c = orders_contract(amount_rules=(QualityRule(RuleKind.RANGE, Severity.WARN, min=0),))
    rep = validate_dataset(c, sample(rows(r0={"amount": -1}, r1={"amount": -2})), NOW)
    assert rep.rule_findings[0].severity is Severity.WARN
    assert rep.pass_rate == 1.0 and rep.verdict == "pass"


def test_row_failing_two_rules_counted_once():
    c = orders_contract(amount_rules=(QualityRule(RuleKind.RANGE, min=0), QualityRule(RuleKind.ENUM_VALUES, values=(11, 12, 13))))
    rep = validate_dataset(c, sample(rows(3)), NOW)
    assert rep.pass_rate == pytest.approx(2 / 3)
    # row 0 now violates both rules and still counts once
    rep = validate_dataset(c, sample(rows(3, r0={"amount": -1})), NOW)
    assert rep.pass_rate == pytest.approx(2 / 3)


def test_dataset_mismatch():
    with pytest.raises(DatasetMismatchError):
        validate_dataset(orders_contract(), sample(rows(), name="other.table"), NOW)


def test_zero_row_sample():
    fresh = validate_dataset(orders_contract(), sample([]), NOW)
    assert fresh.pass_rate == 1.0 and fresh.schema_findings == () and fresh.verdict == "pass"
    stale = validate_dataset(orders_contract(limit=60), sample([]), NOW)
    assert stale.pass_rate == 1.0 and stale.verdict == "fail"


def test_validation_is_deterministic():
    s = sample(rows(r4={"amount": -5}))
    assert validate_dataset(orders_contract(), s, NOW) == validate_dataset(orders_contract(), s, NOW)


@pytest.mark.parametrize(
    "ltype,value,ok",
    [
        (LogicalType.INTEGER, 3, True),
        (LogicalType.INTEGER, 3.0, True),
        (LogicalType.INTEGER, 3.5, False),
        (LogicalType.INTEGER, True, False),
        (LogicalType.DECIMAL, "12.50", True),
        (LogicalType.DECIMAL, 7, True),
        (LogicalType.DECIMAL, "abc", False),
        (LogicalType.TIMESTAMP, "2026-01-01T00:00:00Z", True),
        (LogicalType.TIMESTAMP, "yesterday", False),
        (LogicalType.DATE, "2026-02-30", False),
        (LogicalType.BOOLEAN, 1, False),
        (LogicalType.STRING, 1, False),
    ],
)
def test_conformance_table(ltype, value, ok):
    assert conforms(ltype, value) is ok


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.integers(-20, 100), min_size=0, max_size=15),
    st.integers(-100, -1),
)
def test_adding_violating_row_never_raises_pass_rate(amounts, bad):
    c = orders_contract()
    base = [{"order_id": i, "amount": a, "contact": None} for i, a in enumerate(amounts)]
    before = validate_dataset(c, sample(base), NOW).pass_rate
    after = validate_dataset(c, sample(base + [{"order_id": len(base), "amount": bad, "contact": None}]), NOW).pass_rate
    assert 0 <= after <= before <= 1
    assert validate_dataset(c, sample(base), NOW).passed == (before >= 0.95)


# -- freshness -----------------------------------------------------------------


def test_freshness_bounds():
    c = orders_contract(limit=86400)
    t = NOW - timedelta(seconds=3600)
    assert check_freshness(c, t, NOW) == (3600, True)
    assert check_freshness(c, NOW - timedelta(seconds=86400), NOW) == (86400, True)
    assert check_freshness(c, NOW - timedelta(seconds=86401), NOW) == (86401, False)


def test_clock_skew():
    with pytest.raises(ClockSkewError):
        check_freshness(orders_contract(), NOW + timedelta(seconds=1), NOW)


# -- PII detectors -------------------------------------------------------------


def single_cell(column: str, value) -> DatasetSample:
    return sample([{column: value}], name="support.tickets")


def test_email_detected():
    res = profile_pii(single_cell("contact", "alice@example.com"))
    assert [(f.column, f.row, f.label) for f in res.findings] == [("contact", 0, "email")]
    assert res.classifications == {"contact": PiiClass.DIRECT_IDENTIFIER}


def test_valid_card_detected():
    assert luhn_reference("4111111111111111")
    res = profile_pii(single_cell("pan", "4111 1111 1111 1111"))
    assert [f.label for f in res.findings] == ["credit_card"]


def test_invalid_card_not_detected():
    assert not luhn_reference("4111111111111112")
    res = profile_pii(single_cell("pan", "4111 1111 1111 1112"))
    assert "credit_card" not in [f.label for f in res.findings]


@pytest.mark.parametrize(
    "text,label",
    [
        ("call +44 20 7946 0958 now", "phone"),
        ("(555) 123-4567", "phone"),
        ("ssn 123-45-6789", "national_id_like"),
        ("ship to 221 Baker Street please", "address_like"),
        ("ask Alice Smith", "name_like"),
    ],
)
def test_other_detectors(text, label):
    assert label in [lbl for lbl, _ in scan_text(text)]


@pytest.mark.parametrize("text", ["order 1234567890123", "2026-03-01T10:00:00Z", "hello world", "ref 20260301"])
def test_detectors_quiet_on_plain_text(text):
    labels = [lbl for lbl, _ in scan_text(text)]
    assert "phone" not in labels and "credit_card" not in labels


def test_non_string_cells_skipped():
    assert profile_pii(single_cell("n", 4111111111111111)).findings == ()


def test_highest_class_wins_per_column():
    s = sample([{"c": "Alice Smith"}, {"c": "4111111111111111"}], name="t")
    assert profile_pii(s).classifications == {"c": PiiClass.FINANCIAL}


digit_strings = st.text(alphabet="0123456789", min_size=16, max_size=16)


@settings(max_examples=500, deadline=None)
@given(digit_strings)
def test_luhn_equivalence(digits):
    assert luhn_valid(digits) == luhn_reference(digits)
    assert bool(find_credit_cards(digits)) == luhn_reference(digits)


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=0, max_size=40))
def test_excerpts_redacted(cell):
    res = profile_pii(single_cell("c", cell))
    for f in res.findings:
        assert len(f.excerpt) <= EXCERPT_CHARS
        assert f.excerpt in cell
    assert set(res.classifications) <= {f.column for f in res.findings}


def test_proposals_need_findings():
    res = profile_pii(sample([{"a": "nothing here", "b": "bob@example.org"}], name="t"))
    assert set(res.classifications) == {"b"}


# -- apply_classification --------------------------------------------------------


def pan_contract(pan_class=None, pii_fields=()):
    schema = (
        FieldSpec("ticket_id", LogicalType.INTEGER, False, "", (), PiiClass.NONE),
        FieldSpec("pan", LogicalType.STRING, True, "", (), pan_class),
    )
    return _small_contract(
        schema, SlaSpec(3600, 0.95), ComplianceSpec(pii_fields=pii_fields, gdpr=True, retention_days=30), OwnerSpec("support", "s@example.com")
    )


def card_findings() -> PiiFindings:
    return PiiFindings(
        (PiiFinding("pan", 0, "credit_card", "4111"),),
        (("pan", PiiClass.FINANCIAL),),
        ("apply_classification", "recommend_masking", "notify_security"),
    )


def test_no_findings_is_identity():
    c = pan_contract()
    assert apply_classification(c, PiiFindings()) == (c, ())


def test_card_on_pan():
    c = pan_contract()
    draft, routing = apply_classification(c, card_findings())
    assert draft.status is LifecycleState.DRAFT
    assert "pan" in draft.compliance.pii_fields
    assert draft.field("pan").pii_class is PiiClass.FINANCIAL
    assert "recommend_masking" in routing and "notify_security" in routing
    assert c.status is LifecycleState.APPROVED and c.field("pan").pii_class is None


def test_already_classified_is_idempotent():
    c = pan_contract(PiiClass.FINANCIAL, ("pan",))
    draft, routing = apply_classification(c, card_findings())
    assert draft == c
    assert "notify_security" in routing


def test_email_findings_route_masking():
    res = profile_pii(sample([{"ticket_id": 1, "pan": "reach me at x@example.com"}], name="sales.orders"))
    draft, routing = apply_classification(pan_contract(), res)
    assert draft.field("pan").pii_class is PiiClass.DIRECT_IDENTIFIER
    assert routing == ("apply_classification", "recommend_masking", "notify_security")


def test_quasi_identifier_routing_omits_masking():
    res = profile_pii(sample([{"ticket_id": 1, "pan": "ask Alice Smith"}], name="sales.orders"))
    _, routing = apply_classification(pan_contract(), res)
    assert routing == ("apply_classification", "notify_security")


def test_unknown_column_not_added():
    f = PiiFindings((PiiFinding("ghost", 0, "email", "a@b."),), (("ghost", PiiClass.DIRECT_IDENTIFIER),), ("apply_classification", "recommend_masking", "notify_security"))
    c = pan_contract()
    draft, routing = apply_classification(c, f)
    assert draft == c and routing


cells = st.sampled_from(["", "4111 1111 1111 1111", "bob@example.org", "Alice Smith", "plain", "+1 555 123 4567"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(cells, cells), min_size=0, max_size=5), st.sampled_from([None, PiiClass.NONE, PiiClass.QUASI_IDENTIFIER, PiiClass.FINANCIAL]))
def test_classification_touches_only_pii_markers(pairs, start):
    c = pan_contract(start, ("pan",) if start not in (None, PiiClass.NONE) else ())
    s = sample([{"ticket_id": "x " + a, "pan": b} for a, b in pairs], name="sales.orders")
    draft, routing = apply_classification(c, profile_pii(s))
    strip = lambda k: replace(k, status=c.status, schema=tuple(replace(f, pii_class=None) for f in k.schema), compliance=replace(k.compliance, pii_fields=()))
    assert strip(draft) == strip(c)
    assert draft.compliance.gdpr == c.compliance.gdpr and draft.compliance.retention_days == 30
    if profile_pii(s).findings:
        assert "notify_security" in routing
    else:
        assert routing == () and draft == c
    assert set(c.compliance.pii_fields) <= set(draft.compliance.pii_fields)


# -- sample loading ------------------------------------------------------------


def write_jsonl(tmp_path: Path, lines) -> Path:
    p = tmp_path / "s.jsonl"
    p.write_text("\n".join(x if isinstance(x, str) else json.dumps(x) for x in lines) + "\n", encoding="utf-8")
    return p


def test_load_sample_precedence(tmp_path):
    p = write_jsonl(tmp_path, [{"a": 1}, {"_meta": {"dataset": "m.d", "last_updated": "2026-01-01T00:00:00Z"}}])
    s = load_sample(p)
    assert s.dataset_name == "m.d" and s.last_updated == datetime(2026, 1, 1, tzinfo=timezone.utc)
    assert load_sample(p, dataset_name="x.y").dataset_name == "x.y"
    assert load_sample(p, last_updated=NOW).last_updated == NOW
    assert load_sample(p, default_dataset="z").dataset_name == "m.d"


def test_load_sample_defaults(tmp_path):
    p = write_jsonl(tmp_path, [{"a": 1}])
    s = load_sample(p, default_dataset="d", default_last_updated=NOW)
    assert (s.dataset_name, s.last_updated) == ("d", NOW)


@pytest.mark.parametrize(
    "lines,line_no",
    [
        (['{"_meta": {"dataset": "d", "last_updated": "2026-01-01T00:00:00Z"}}', "{not json"], 2),
        (['{"_meta": {"dataset": "d", "last_updated": "2026-01-01T00:00:00Z"}}', "[1, 2]"], 2),
        (['{"_meta": {"dataset": "d", "last_updated": "2026-01-01T00:00:00Z"}}', '{"a": [1]}'], 2),
        (['{"_meta": {"dataset": "d"}, "x": 1}'], 1),
    ],
)
def test_load_sample_errors_positioned(tmp_path, lines, line_no):
    with pytest.raises(FixtureError) as ei:
        load_sample(write_jsonl(tmp_path, lines))
    assert ei.value.line == line_no


def test_load_sample_missing_meta(tmp_path):
    with pytest.raises(FixtureError):
        load_sample(write_jsonl(tmp_path, [{"a": 1}]))
    with pytest.raises(FixtureError):
        load_sample(write_jsonl(tmp_path, [{"a": 1}]), dataset_name="d")


def test_rows_must_share_columns():
    with pytest.raises(FixtureError):
        DatasetSample("d", ({"a": 1}, {"b": 2}), NOW)
