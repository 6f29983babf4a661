"""meshgate command line.

stdout carries machine-readable, tab-separated output; progress and warnings
go to stderr. Exit codes are a CI contract:

    0  success / pass
    1  domain failure (validation fail, blocking breaking diff, rejection)
    2  usage or configuration error
    3  model provider / transport failure
    4  store integrity error
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Sequence

from meshgate import __version__
from meshgate.context import assemble_context, collect_annotations, fetch_metadata, load_compliance
from meshgate.contract_model import DataContract, OwnerSpec, parse, serialize
from meshgate.drafting import ProviderConfig, draft_contract, transport_for
from meshgate.enforcement import apply_classification, load_sample, profile_pii, validate_dataset
from meshgate.errors import (
    ClockSkewError,
    ConfigError,
    ContractValidationError,
    DatasetMismatchError,
    DatasetNotFoundError,
    DuplicateSubmissionError,
    FixtureError,
    IllegalTransitionError,
    IntegrityError,
    InvalidReviewerError,
    MeshgateError,
    NotFoundError,
    ProviderError,
    RecordStateError,
    SchemaEnforcementError,
    StoreBusyError,
    UndefinedMetricError,
    UnknownRecordError,
    UnmappableTypeError,
)
from meshgate.metrics import (
    ValueScoreInput,
    compute_F,
    compute_I,
    compute_U,
    load_baselines,
    load_events,
    round_half_up,
    value_score,
)
from meshgate.registry import Classification, diff, load, next_version, review, submit_draft
from meshgate.stages import STAGE_ORDER, Enforcement, Gate, Stage, gate_decision, render_profile
from meshgate.timeutil import parse_utc, utcnow

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3
EXIT_INTEGRITY = 4

CONFIG_FILE = "meshgate.conf"
CLOCK_ENV = "MESHGATE_FIXED_CLOCK"
DEFAULT_STORE = "contracts"

log = logging.getLogger("meshgate")

_EXIT_FOR: tuple[tuple[type[BaseException], int], ...] = (
    (DuplicateSubmissionError, EXIT_FAIL),
    (UndefinedMetricError, EXIT_FAIL),
    (ProviderError, EXIT_PROVIDER),
    (SchemaEnforcementError, EXIT_PROVIDER),
    (IntegrityError, EXIT_INTEGRITY),
    (StoreBusyError, EXIT_INTEGRITY),
    (
        (
            ConfigError,
            FixtureError,
            DatasetNotFoundError,
            ContractValidationError,
            UnknownRecordError,
            RecordStateError,
            InvalidReviewerError,
            IllegalTransitionError,
            DatasetMismatchError,
            NotFoundError,
            UnmappableTypeError,
            ClockSkewError,
        ),
        EXIT_USAGE,
    ),
)


def exit_code_for(exc: BaseException) -> int:
    for types, code in _EXIT_FOR:
        if isinstance(exc, types):
            return code
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, ValueError)):
        return EXIT_USAGE
    return EXIT_FAIL


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key: value`` lines; missing file means empty config."""
    p = Path(path)
    if not p.exists():
        return {}
    out: dict[str, str] = {}
    for no, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ConfigError(f"{p}:{no}: expected 'key: value'")
        key = key.strip()
        if key not in ("store", "stage"):
            raise ConfigError(f"{p}:{no}: unknown key: {key}")
        out[key] = value.strip()
    return out


def _clock(args: argparse.Namespace) -> Callable[[], datetime]:
    fixed = args.as_of or os.environ.get(CLOCK_ENV)
    if not fixed:
        return utcnow
    try:
        when = parse_utc(fixed)
    except ValueError as exc:
        raise ConfigError(f"bad clock value: {exc}") from None
    return lambda: when


def _store(args: argparse.Namespace) -> Path:
    return Path(args.store or args.config_values.get("store") or DEFAULT_STORE)


def _stage(args: argparse.Namespace) -> Stage:
    raw = args.stage or args.config_values.get("stage") or Stage.FOUNDATION.value
    try:
        return Stage(raw)
    except ValueError:
        raise ConfigError(f"unknown stage: {raw!r}") from None


def _read_contract(ref: str, args: argparse.Namespace) -> DataContract:
    """A contract file path, or ``<dataset>@<version|latest>`` from the store."""
    path = Path(ref)
    if path.is_file():
        return parse(path.read_text(encoding="utf-8"))
    if "@" in ref and not path.exists():
        dataset, _, version = ref.partition("@")
        return load(dataset, version or "latest", _store(args))
    raise FileNotFoundError(f"contract not found: {ref}")


# ---------------------------------------------------------------------------
# commands


def cmd_draft(args: argparse.Namespace) -> int:
    catalog = Path(args.catalog)
    if not catalog.is_dir():
        raise FileNotFoundError(f"catalog directory not found: {catalog}")
    metadata = fetch_metadata(catalog, args.dataset)
    rulepack = load_compliance(args.rulepack)
    notes = Path(args.notes).read_text(encoding="utf-8") if args.notes else ""
    bundle = assemble_context(metadata, rulepack, collect_annotations(notes))
    clock = _clock(args)
    transport = config = None
    if args.provider_config and not args.offline:
        config = ProviderConfig.from_file(args.provider_config)
        transport = transport_for(config, base_dir=Path(args.provider_config).parent)
    result = draft_contract(bundle, config, transport, now=clock())
    sys.stdout.write(serialize(result.contract))
    for note in result.notes:
        log.info("note: %s", note)
    if not args.no_submit:
        rec = submit_draft(result, _store(args), clock=clock)
        _err(f"record_id: {rec.record_id}")
    return EXIT_OK


def cmd_review(args: argparse.Namespace) -> int:
    decision = "approve" if args.approve else "reject"
    reviewer = OwnerSpec(args.reviewer_team, args.reviewer_email)
    rec = review(args.id, decision, reviewer, args.note, _store(args), clock=_clock(args))
    if decision == "approve":
        print(f"approved {rec.contract.dataset_name} {rec.approved_version}")
        return EXIT_OK
    print(f"rejected {rec.contract.dataset_name} {rec.record_id}")
    return EXIT_FAIL


def _num(value: float) -> str:
    value = round(value, 6)
    return str(int(value)) if float(value).is_integer() else repr(value)


def cmd_validate(args: argparse.Namespace) -> int:
    contract = _read_contract(args.contract, args)
    last_updated = parse_utc(args.last_updated) if args.last_updated else None
    sample = load_sample(args.data, last_updated=last_updated, default_dataset=contract.dataset_name)
    now = _clock(args)()
    report = validate_dataset(contract, sample, now)
    fr = report.freshness
    print(f"verdict\t{report.verdict}")
    print(f"rows\t{report.row_count}")
    print(f"pass_rate\t{_num(report.pass_rate)}")
    print(f"min_pass_rate\t{_num(report.min_pass_rate)}")
    print(f"freshness\t{_num(fr.age_seconds)}\t{fr.limit_seconds}\t{'pass' if fr.passed else 'fail'}")
    for sf in report.schema_findings:
        print(f"schema\t{sf.column}\t{sf.issue}\t{','.join(map(str, sf.rows))}")
    for rf in report.rule_findings:
        print(f"rule\t{rf.field}\t{rf.kind.value}\t{rf.severity.value}\t{','.join(map(str, rf.rows))}")
    if report.passed:
        return EXIT_OK
    stage = _stage(args)
    failed_gates = []
    if report.schema_findings:
        failed_gates.append(Gate.CONTRACT_APPROVAL)
    if not report.quality_passed or not fr.passed:
        failed_gates.append(Gate.QUALITY_THRESHOLDS)
    code = EXIT_OK
    for gate in failed_gates:
        if gate_decision(stage, gate, args.override) is Enforcement.BLOCK_ON_FAIL:
            _err(f"error: {gate.value} gate blocks at stage {stage.value}")
            code = EXIT_FAIL
        else:
            _err(f"warning: {gate.value} failed (warn_on_fail at stage {stage.value})")
    return code


def cmd_diff(args: argparse.Namespace) -> int:
    old = _read_contract(args.old, args)
    new = _read_contract(args.new, args)
    report = diff(old, new)
    for ch in report.changes:
        print(f"change\t{ch.path}\t{ch.kind}\t{ch.classification.value}\t{ch.detail}")
    print(f"{report.verdict.value}, {len(report.changes)} changes")
    print(f"next_version\t{next_version(old.version, report)}")
    if report.verdict is Classification.BREAKING:
        stage = _stage(args)
        if gate_decision(stage, Gate.SCHEMA_DIFF_BLOCKING, args.override) is Enforcement.BLOCK_ON_FAIL:
            _err(f"error: breaking change blocked at stage {stage.value}")
            return EXIT_FAIL
        _err(f"warning: breaking change (advisory at stage {stage.value})")
    elif report.verdict is Classification.RISKY:
        _err("warning: risky changes loosen consumer guarantees")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    log_ = load_events(args.events)
    base = load_baselines(args.baselines)
    if args.window_start or args.window_end:
        if not (args.window_start and args.window_end):
            raise ConfigError("give both --window-start and --window-end")
        start, end = parse_utc(args.window_start), parse_utc(args.window_end)
        if not start < end:
            raise ConfigError("window start must precede window end")
        u = compute_U(log_.access, start, end)
    elif log_.access:
        stamps = [e.timestamp for e in log_.access]
        u = compute_U(log_.access, min(stamps), max(stamps) + timedelta(seconds=1))
    else:
        u = 0
    f = compute_F(log_.discovery)
    i = compute_I(log_.insight)
    v = value_score(ValueScoreInput(u, f, i, **base))
    print(f"U\t{u}")
    print(f"F\t{_num(f)}")
    print(f"I\t{_num(i)}")
    print(f"V\t{round_half_up(v)}")
    return EXIT_OK


def cmd_pii_scan(args: argparse.Namespace) -> int:
    contract = _read_contract(args.contract, args) if args.contract else None
    sample = load_sample(
        args.data,
        default_dataset=contract.dataset_name if contract else "unknown",
        default_last_updated=datetime(1970, 1, 1).astimezone(),
    )
    found = profile_pii(sample)
    if not found.findings:
        print("no findings")
    for f in found.findings:
        print(f"finding\t{f.column}\t{f.row}\t{f.label}\t{f.excerpt}")
    for column, cls in found.proposed_classifications:
        print(f"classify\t{column}\t{cls.value}")
    for action in found.routing:
        print(f"route\t{action}")
    if contract is not None and found.findings:
        amended, _ = apply_classification(contract, found)
        if amended is contract:
            _err("contract already carries these classifications")
        else:
            if args.draft_out:
                Path(args.draft_out).write_text(serialize(amended), encoding="utf-8")
            rec = submit_draft(amended, _store(args), clock=_clock(args))
            _err(f"record_id: {rec.record_id}")
    if args.strict and found.findings:
        return EXIT_FAIL
    return EXIT_OK


def cmd_stage(args: argparse.Namespace) -> int:
    stages = [Stage(args.name)] if args.name else list(STAGE_ORDER)
    sys.stdout.write("\n".join(render_profile(s) for s in stages))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", help=f"contract store directory (default: {DEFAULT_STORE})")
    common.add_argument("--config", default=CONFIG_FILE, help="config file (default: ./meshgate.conf)")
    common.add_argument("--as-of", help=f"fixed evaluation/clock time, ISO-8601 UTC (or ${CLOCK_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="meshgate", description="Data-contract control plane.")
    parser.add_argument("--version", action="version", version=f"meshgate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("draft", parents=[common], help="draft a contract and queue it for review")
    p.add_argument("--dataset", required=True)
    p.add_argument("--catalog", required=True, help="catalog fixture directory")
    p.add_argument("--rulepack", required=True)
    p.add_argument("--notes", help="annotation file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--offline", action="store_true", help="use the deterministic drafter")
    mode.add_argument("--provider-config", help="model provider config file")
    p.add_argument("--no-submit", action="store_true", help="print the draft without queueing it")
    p.set_defaults(func=cmd_draft)

    p = sub.add_parser("review", parents=[common], help="approve or reject a pending draft")
    p.add_argument("--id", required=True)
    decision = p.add_mutually_exclusive_group(required=True)
    decision.add_argument("--approve", action="store_true")
    decision.add_argument("--reject", action="store_true")
    p.add_argument("--reviewer-team", required=True)
    p.add_argument("--reviewer-email", required=True)
    p.add_argument("--note")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("validate", parents=[common], help="validate a dataset sample against a contract")
    p.add_argument("--contract", required=True, help="contract file or <dataset>@<version|latest>")
    p.add_argument("--data", required=True, help="JSONL sample")
    p.add_argument("--last-updated", help="override the sample's last_updated")
    p.add_argument("--stage", help="maturity stage (default: config or foundation)")
    p.add_argument("--override", action="store_true", help="a spoke-local override is in place")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("diff", parents=[common], help="classify changes between two contract versions")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("--stage")
    p.add_argument("--override", action="store_true")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("score", parents=[common], help="compute U, F, I and the platform value score")
    p.add_argument("--events", required=True)
    p.add_argument("--baselines", required=True)
    p.add_argument("--window-start")
    p.add_argument("--window-end")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pii-scan", parents=[common], help="profile a sample for PII")
    p.add_argument("--data", required=True)
    p.add_argument("--contract", help="contract to amend with the findings")
    p.add_argument("--draft-out", help="also write the amended draft here")
    p.add_argument("--strict", action="store_true", help="exit 1 on any finding")
    p.set_defaults(func=cmd_pii_scan)

    p = sub.add_parser("stage", parents=[common], help="print stage shares and gate levels")
    p.add_argument("name", nargs="?", choices=[s.value for s in Stage])
    p.set_defaults(func=cmd_stage)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.config_values = read_config(args.config)
        return args.func(args)
    except (MeshgateError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        _err(f"error: {exc}")
        return code


if __name__ == "__main__":
    raise SystemExit(main())
