"""Approval gate, versioned contract store and compatibility diffing.

Store layout under ``store_root``::

    pending/<record_id>.review     review records (header + contract document)
    <dataset>/<version>.contract   approved contracts, written once
    <dataset>/index                one "<version> <sha256>" line per approval
    .lock                          writer lock

Supersession is derived from the index: every approved version except the
highest is superseded, so contract files never need rewriting.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator

from filelock import FileLock, Timeout

from meshgate.contract_model import (
    DataContract,
    LifecycleState,
    LogicalType,
    OwnerSpec,
    PiiClass,
    RuleKind,
    Severity,
    Version,
    bound_key,
    check_transition,
    content_digest,
    parse,
    serialize,
    valid_email,
)
from meshgate.drafting import DraftResult
from meshgate.errors import (
    ClockSkewError,
    DatasetMismatchError,
    DuplicateSubmissionError,
    IntegrityError,
    InvalidReviewerError,
    NotFoundError,
    RecordStateError,
    StoreBusyError,
    UnknownRecordError,
)
from meshgate.timeutil import format_utc, parse_utc, utcnow

Clock = Callable[[], datetime]
FIRST_VERSION = Version(1, 0, 0)
LOCK_TIMEOUT_SECONDS = 10.0


# ---------------------------------------------------------------------------
# compatibility


class Classification(str, Enum):
    COMPATIBLE = "compatible"
    RISKY = "risky"
    BREAKING = "breaking"

    @property
    def rank(self) -> int:
        return _CLASS_RANK[self]


_CLASS_RANK = {Classification.COMPATIBLE: 0, Classification.RISKY: 1, Classification.BREAKING: 2}

# Changes that alter no consumer-facing guarantee; they only earn a patch bump.
METADATA_KINDS = frozenset({"description_changed", "owner_changed", "fields_reordered"})


@dataclass(frozen=True)
class Change:
    path: str
    kind: str
    classification: Classification
    detail: str = ""


@dataclass(frozen=True)
class CompatibilityReport:
    changes: tuple[Change, ...] = ()

    @property
    def verdict(self) -> Classification:
        worst = Classification.COMPATIBLE
        for ch in self.changes:
            if ch.classification.rank > worst.rank:
                worst = ch.classification
        return worst

    @property
    def metadata_only(self) -> bool:
        return all(ch.kind in METADATA_KINDS for ch in self.changes)


def _accepted_relation(rule_old, rule_new, ltype) -> str:
    """Compare the value sets two same-kind rules accept: same, tighter or looser."""
    if rule_old.kind is RuleKind.RANGE:
        def lo(r):
            return None if r.min is None else bound_key(ltype, r.min)

        def hi(r):
            return None if r.max is None else bound_key(ltype, r.max)

        o_lo, o_hi, n_lo, n_hi = lo(rule_old), hi(rule_old), lo(rule_new), hi(rule_new)
        lo_ok = o_lo is None or (n_lo is not None and n_lo >= o_lo)
        hi_ok = o_hi is None or (n_hi is not None and n_hi <= o_hi)
        if not (lo_ok and hi_ok):
            return "looser"
        return "same" if (o_lo, o_hi) == (n_lo, n_hi) else "tighter"
    if rule_old.kind is RuleKind.ENUM_VALUES:
        old = {bound_key(ltype, v) for v in rule_old.values}
        new = {bound_key(ltype, v) for v in rule_new.values}
        if not new <= old:
            return "looser"
        return "same" if new == old else "tighter"
    if rule_old.kind is RuleKind.REGEX:
        # Regex containment is undecidable in general; any edit counts as loosening.
        return "same" if rule_old.pattern == rule_new.pattern else "looser"
    return "same"


def _vacuous(rule, ltype) -> bool:
    """True when the rule is absent or accepts every value of its type."""
    if rule is None:
        return True
    return rule.kind is RuleKind.ENUM_VALUES and ltype is LogicalType.BOOLEAN and {True, False} <= set(rule.values)


def _classed(pii: PiiClass | None) -> bool:
    return pii is not None and pii is not PiiClass.NONE


def diff(old: DataContract, new: DataContract) -> CompatibilityReport:
    """Classify every change from ``old`` to ``new`` (direction matters)."""
    if old.dataset_name != new.dataset_name:
        raise DatasetMismatchError(f"cannot diff {old.dataset_name} against {new.dataset_name}")
    B, R, C = Classification.BREAKING, Classification.RISKY, Classification.COMPATIBLE
    out: list[Change] = []
    new_fields = {f.name: f for f in new.schema}
    old_names = {f.name for f in old.schema}

    for of in old.schema:
        p = f"schema.{of.name}"
        nf = new_fields.get(of.name)
        if nf is None:
            out.append(Change(p, "field_removed", B))
            continue
        if nf.logical_type != of.logical_type:
            out.append(Change(p, "type_changed", B, f"{of.logical_type.value} -> {nf.logical_type.value}"))
            continue
        if of.nullable != nf.nullable:
            if nf.nullable:
                out.append(Change(p, "nullability_loosened", B, "nullable false -> true"))
            else:
                out.append(Change(p, "nullability_tightened", C, "nullable true -> false"))
        if of.description != nf.description:
            out.append(Change(p, "description_changed", C))
        if of.pii_class != nf.pii_class:
            detail = f"{of.pii_class.value if of.pii_class else 'null'} -> {nf.pii_class.value if nf.pii_class else 'null'}"
            if _classed(of.pii_class) and not _classed(nf.pii_class):
                out.append(Change(p, "pii_class_removed", R, detail))
            else:
                out.append(Change(p, "pii_class_changed", C, detail))
        for kind in RuleKind:
            ro, rn = of.rule(kind), nf.rule(kind)
            rp = f"{p}.rules.{kind.value}"
            if ro is None and rn is None:
                continue
            if _vacuous(ro, of.logical_type) and _vacuous(rn, of.logical_type):
                if ro != rn:
                    out.append(Change(rp, "rule_changed", C, "accepts every value before and after"))
                continue
            ro = None if _vacuous(ro, of.logical_type) else ro
            rn = None if _vacuous(rn, of.logical_type) else rn
            if rn is None:
                out.append(Change(rp, "rule_removed", R))
            elif ro is None:
                out.append(Change(rp, "rule_added", C))
            else:
                rel = _accepted_relation(ro, rn, of.logical_type)
                if ro.severity is Severity.ERROR and rn.severity is Severity.WARN:
                    sev = "looser"
                elif ro.severity is Severity.WARN and rn.severity is Severity.ERROR:
                    sev = "tighter"
                else:
                    sev = "same"
                if "looser" in (rel, sev):
                    out.append(Change(rp, "rule_loosened", R))
                elif "tighter" in (rel, sev):
                    out.append(Change(rp, "rule_tightened", C))

    for nf in new.schema:
        if nf.name not in old_names:
            out.append(Change(f"schema.{nf.name}", "field_added", C, "nullable" if nf.nullable else "non-nullable"))

    common_old = [f.name for f in old.schema if f.name in new_fields]
    common_new = [f.name for f in new.schema if f.name in old_names]
    if common_old != common_new:
        out.append(Change("schema", "fields_reordered", C))

    fo, fn = old.sla.freshness_max_age_seconds, new.sla.freshness_max_age_seconds
    if fn > fo:
        out.append(Change("sla.freshness_max_age_seconds", "freshness_loosened", R, f"{fo} -> {fn}"))
    elif fn < fo:
        out.append(Change("sla.freshness_max_age_seconds", "freshness_tightened", C, f"{fo} -> {fn}"))
    qo, qn = old.sla.quality_min_pass_rate, new.sla.quality_min_pass_rate
    if qn < qo:
        out.append(Change("sla.quality_min_pass_rate", "pass_rate_loosened", R, f"{qo} -> {qn}"))
    elif qn > qo:
        out.append(Change("sla.quality_min_pass_rate", "pass_rate_tightened", C, f"{qo} -> {qn}"))

    co, cn = old.compliance, new.compliance
    for name in co.pii_fields:
        if name not in cn.pii_fields:
            out.append(Change(f"compliance.pii_fields.{name}", "pii_field_removed", R))
    for name in cn.pii_fields:
        if name not in co.pii_fields:
            out.append(Change(f"compliance.pii_fields.{name}", "pii_field_added", C))
    if co.gdpr != cn.gdpr:
        out.append(Change("compliance.gdpr", "gdpr_removed" if co.gdpr else "gdpr_added", R if co.gdpr else C))
    ro_, rn_ = co.retention_days, cn.retention_days
    if ro_ != rn_:
        # A retention limit bounds how much history consumers can rely on.
        shorter = rn_ is not None and (ro_ is None or rn_ < ro_)
        out.append(Change("compliance.retention_days", "retention_shortened" if shorter else "retention_extended", R if shorter else C, f"{ro_} -> {rn_}"))

    if old.owner != new.owner:
        out.append(Change("owner", "owner_changed", C))
    return CompatibilityReport(tuple(out))


def next_version(old_version: Version | None, report: CompatibilityReport | None) -> Version:
    if old_version is None:
        return FIRST_VERSION
    if report is None:
        return old_version.bump_patch()
    if report.verdict is Classification.BREAKING:
        return old_version.bump_major()
    if not report.metadata_only:
        return old_version.bump_minor()
    return old_version.bump_patch()


# ---------------------------------------------------------------------------
# review records


@dataclass(frozen=True)
class ReviewRecord:
    record_id: str
    contract: DataContract
    state: LifecycleState
    submitted_at: datetime
    digest: str
    reviewer: OwnerSpec | None = None
    decision_note: str | None = None
    decided_at: datetime | None = None
    approved_version: Version | None = None
    notes: tuple[str, ...] = ()


def record_id_for(digest: str, submitted_at: datetime) -> str:
    return hashlib.sha256(f"{digest}|{format_utc(submitted_at)}".encode()).hexdigest()[:16]


def _dump_record(rec: ReviewRecord) -> str:
    head = {
        "record_id": rec.record_id,
        "state": rec.state.value,
        "digest": rec.digest,
        "submitted_at": format_utc(rec.submitted_at),
        "decided_at": format_utc(rec.decided_at) if rec.decided_at else None,
        "reviewer_team": rec.reviewer.team if rec.reviewer else None,
        "reviewer_email": rec.reviewer.email if rec.reviewer else None,
        "decision_note": rec.decision_note,
        "approved_version": str(rec.approved_version) if rec.approved_version else None,
        "notes": list(rec.notes),
    }
    lines = [f"{k}: {json.dumps(v, ensure_ascii=False)}" for k, v in head.items()]
    return "\n".join(lines) + "\n---\n" + serialize(rec.contract)


def _load_record(path: Path) -> ReviewRecord:
    text = path.read_text(encoding="utf-8")
    head_text, sep, body = text.partition("\n---\n")
    if not sep:
        raise IntegrityError(f"{path}: malformed review record")
    head: dict[str, Any] = {}
    for line in head_text.splitlines():
        key, _, value = line.partition(": ")
        head[key] = json.loads(value)
    reviewer = None
    if head["reviewer_team"] is not None:
        reviewer = OwnerSpec(head["reviewer_team"], head["reviewer_email"])
    return ReviewRecord(
        record_id=head["record_id"],
        contract=parse(body),
        state=LifecycleState(head["state"]),
        submitted_at=parse_utc(head["submitted_at"]),
        digest=head["digest"],
        reviewer=reviewer,
        decision_note=head["decision_note"],
        decided_at=parse_utc(head["decided_at"]) if head["decided_at"] else None,
        approved_version=Version.parse(head["approved_version"]) if head["approved_version"] else None,
        notes=tuple(head.get("notes", ())),
    )


# ---------------------------------------------------------------------------
# store primitives


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@contextmanager
def store_lock(store_root: str | Path, timeout: float = LOCK_TIMEOUT_SECONDS) -> Iterator[None]:
    root = Path(store_root)
    root.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(root / ".lock"), timeout=timeout)
    try:
        lock.acquire()
    except Timeout:
        raise StoreBusyError(f"store {root} is locked by another writer; retry") from None
    try:
        yield
    finally:
        lock.release()


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def read_index(store_root: str | Path, dataset: str) -> list[tuple[Version, str]]:
    path = Path(store_root) / dataset / "index"
    if not path.exists():
        return []
    entries = []
    for no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise IntegrityError(f"{path}:{no}: malformed index line")
        try:
            entries.append((Version.parse(parts[0]), parts[1]))
        except ValueError as exc:
            raise IntegrityError(f"{path}:{no}: {exc}") from None
    return entries


def _write_index(store_root: Path, dataset: str, entries: list[tuple[Version, str]]) -> None:
    entries = sorted(entries)
    _atomic_write(store_root / dataset / "index", "".join(f"{v} {d}\n" for v, d in entries))


def contract_path(store_root: str | Path, dataset: str, version: Version) -> Path:
    return Path(store_root) / dataset / f"{version}.contract"


def _persist_unlocked(contract: DataContract, root: Path) -> Path:
    if contract.status is not LifecycleState.APPROVED:
        raise RecordStateError(f"only approved contracts are persisted (status is {contract.status.value})")
    text = serialize(contract)
    digest = _sha256_bytes(text.encode("utf-8"))
    path = contract_path(root, contract.dataset_name, contract.version)
    entries = read_index(root, contract.dataset_name)
    if (contract.version, digest) not in entries and any(v >= contract.version for v, _ in entries):
        raise IntegrityError(f"{contract.dataset_name} {contract.version} is not newer than the latest approved version")
    if path.exists():
        if _sha256_bytes(path.read_bytes()) != digest:
            raise IntegrityError(f"{path} already holds a different contract")
    else:
        _atomic_write(path, text)
    for v, d in entries:
        if v == contract.version:
            if d != digest:
                raise IntegrityError(f"index entry for {contract.dataset_name} {v} has a different digest")
            return path
    entries.append((contract.version, digest))
    _write_index(root, contract.dataset_name, entries)
    return path


def persist(contract: DataContract, store_root: str | Path) -> Path:
    """Write an approved contract to ``<dataset>/<version>.contract``; idempotent."""
    root = Path(store_root)
    with store_lock(root):
        return _persist_unlocked(contract, root)


def load(dataset: str, version: str | Version, store_root: str | Path) -> DataContract:
    """Load an approved contract; ``version="latest"`` picks the highest indexed one."""
    root = Path(store_root)
    entries = read_index(root, dataset)
    if not entries:
        raise NotFoundError(f"no approved versions of {dataset}")
    if version == "latest":
        wanted, digest = max(entries)
    else:
        wanted = version if isinstance(version, Version) else Version.parse(str(version))
        matches = [d for v, d in entries if v == wanted]
        if not matches:
            raise NotFoundError(f"{dataset} {wanted} not found")
        digest = matches[0]
    path = contract_path(root, dataset, wanted)
    if not path.exists():
        raise IntegrityError(f"{path} is indexed but missing")
    data = path.read_bytes()
    if _sha256_bytes(data) != digest:
        raise IntegrityError(f"{path} does not match its index digest")
    return parse(data.decode("utf-8"))


def version_states(dataset: str, store_root: str | Path) -> list[tuple[Version, LifecycleState]]:
    entries = sorted(read_index(store_root, dataset))
    if not entries:
        return []
    latest = entries[-1][0]
    return [(v, LifecycleState.APPROVED if v == latest else LifecycleState.SUPERSEDED) for v, _ in entries]


def _pending_dir(root: Path) -> Path:
    return root / "pending"


def list_records(store_root: str | Path) -> list[ReviewRecord]:
    pending = _pending_dir(Path(store_root))
    if not pending.exists():
        return []
    return sorted((_load_record(p) for p in pending.glob("*.review")), key=lambda r: (r.submitted_at, r.record_id))


def get_record(record_id: str, store_root: str | Path) -> ReviewRecord:
    path = _pending_dir(Path(store_root)) / f"{record_id}.review"
    if not path.is_file():
        raise UnknownRecordError(f"unknown review record: {record_id}")
    return _load_record(path)


# ---------------------------------------------------------------------------
# workflow


def submit_draft(
    draft: DraftResult | DataContract,
    store_root: str | Path,
    *,
    clock: Clock = utcnow,
) -> ReviewRecord:
    """Queue a draft for review under ``pending/``."""
    result = draft if isinstance(draft, DraftResult) else DraftResult(draft)
    contract = result.contract
    state = check_transition(contract.status, LifecycleState.PENDING_REVIEW)
    digest = content_digest(contract)
    root = Path(store_root)
    with store_lock(root):
        for rec in list_records(root):
            if rec.state is LifecycleState.PENDING_REVIEW and rec.digest == digest:
                raise DuplicateSubmissionError(f"draft already pending as {rec.record_id}")
        submitted_at = clock()
        rec = ReviewRecord(
            record_id=record_id_for(digest, submitted_at),
            contract=contract.with_status(state),
            state=state,
            submitted_at=submitted_at,
            digest=digest,
            notes=tuple(result.notes),
        )
        path = _pending_dir(root) / f"{rec.record_id}.review"
        if path.exists():
            raise DuplicateSubmissionError(f"record {rec.record_id} already exists")
        _atomic_write(path, _dump_record(rec))
    return rec


def latest_approved(dataset: str, store_root: str | Path) -> DataContract | None:
    if not read_index(store_root, dataset):
        return None
    return load(dataset, "latest", store_root)


def review(
    record_id: str,
    decision: str,
    reviewer: OwnerSpec,
    note: str | None,
    store_root: str | Path,
    *,
    clock: Clock = utcnow,
) -> ReviewRecord:
    """Approve or reject a pending record.

    Approval assigns the next version relative to the latest approved
    contract for the dataset and persists it; rejection stores nothing.
    """
    if decision not in ("approve", "reject"):
        raise ValueError(f"decision must be approve or reject, got {decision!r}")
    if not isinstance(reviewer.team, str) or not reviewer.team.strip() or not valid_email(reviewer.email):
        raise InvalidReviewerError(f"invalid reviewer: {reviewer.team!r} <{reviewer.email}>")
    root = Path(store_root)
    with store_lock(root):
        rec = get_record(record_id, root)
        if rec.state is not LifecycleState.PENDING_REVIEW:
            raise RecordStateError(f"record {record_id} is {rec.state.value}, not pending_review")
        decided_at = clock()
        if decided_at < rec.submitted_at:
            raise ClockSkewError("decision time precedes submission time")
        if decision == "reject":
            state = check_transition(rec.state, LifecycleState.REJECTED)
            updated = replace(
                rec,
                state=state,
                contract=rec.contract.with_status(state),
                reviewer=reviewer,
                decision_note=note,
                decided_at=decided_at,
            )
        else:
            state = check_transition(rec.state, LifecycleState.APPROVED)
            prior = latest_approved(rec.contract.dataset_name, root)
            report = diff(prior, rec.contract) if prior is not None else None
            version = next_version(prior.version if prior else None, report)
            approved = replace(rec.contract, version=version, status=state)
            _persist_unlocked(approved, root)
            updated = replace(
                rec,
                state=state,
                contract=approved,
                reviewer=reviewer,
                decision_note=note,
                decided_at=decided_at,
                approved_version=version,
            )
        _atomic_write(_pending_dir(root) / f"{record_id}.review", _dump_record(updated))
    return updated
