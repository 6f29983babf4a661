"""Contract drafting: prompt building, model calls, schema enforcement.

Two drafters produce the same ``DraftResult`` shape. The model path is
``build_prompt -> call_model -> enforce_schema`` over any ``ModelTransport``;
the offline path, ``deterministic_draft``, applies fixed rules to the bundle.

Physical to logical type mapping (closed; anything else is an error):

    ==================================  =========
    physical                            logical
    ==================================  =========
    varchar, text, char                 string
    int, bigint, smallint               integer
    double, real                        float
    bool                                boolean
    date                                date
    timestamp                           timestamp
    numeric, decimal                    decimal
    ==================================  =========

Length/precision suffixes such as ``varchar(64)`` or ``decimal(12,2)`` are
ignored.

Annotation grammar used by the offline drafter:

* ``[sla_hint] fresh within <N><unit>`` with unit s, m, h, d or w
* ``[owner_hint] team <team> email <email>``
* ``[business_rule] <column> >= <v>``, ``<column> <= <v>``,
  ``<column> between <a> and <b>``, ``<column> in {a, b}``,
  ``<column> unique``, ``<column> matches <regex>``
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Protocol, Sequence

from meshgate.context import ContextBundle, NoteTag
from meshgate.contract_model import (
    CONTRACT_KEYS,
    DETECTOR_CLASSES,
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
    SlaSpec,
    Version,
    ensure_valid,
    parse,
    validate_rule,
)
from meshgate.errors import (
    ConfigError,
    ContractValidationError,
    MeshgateError,
    ProviderError,
    SchemaEnforcementError,
    UnmappableTypeError,
)
from meshgate.timeutil import utcnow

log = logging.getLogger(__name__)

DRAFT_VERSION = Version(0, 1, 0)
MAX_REPAIRS = 2
DEFAULT_OWNER = OwnerSpec("unassigned", "owner@example.invalid")
DEFAULT_FRESHNESS_SECONDS = 86400
DEFAULT_MIN_PASS_RATE = 0.95

PHYSICAL_TYPES: dict[str, LogicalType] = {
    "varchar": LogicalType.STRING,
    "text": LogicalType.STRING,
    "char": LogicalType.STRING,
    "int": LogicalType.INTEGER,
    "bigint": LogicalType.INTEGER,
    "smallint": LogicalType.INTEGER,
    "double": LogicalType.FLOAT,
    "real": LogicalType.FLOAT,
    "bool": LogicalType.BOOLEAN,
    "date": LogicalType.DATE,
    "timestamp": LogicalType.TIMESTAMP,
    "numeric": LogicalType.DECIMAL,
    "decimal": LogicalType.DECIMAL,
}


@dataclass(frozen=True)
class PromptDocument:
    system_text: str
    context_text: str
    output_schema_descriptor: str

    def render(self) -> str:
        return (
            f"{self.system_text}\n\nCONTEXT:\n{self.context_text}\n\n"
            f"OUTPUT SCHEMA:\n{self.output_schema_descriptor}\n"
        )

    def repair(self, errors: Sequence[str]) -> str:
        return self.render() + "ERRORS:\n" + "".join(f"{e}\n" for e in errors)


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    max_retries: int = 3
    timeout_seconds: float = 30.0
    backoff_base_seconds: float = 0.5

    def __post_init__(self) -> None:
        if not isinstance(self.max_retries, int) or not 0 <= self.max_retries <= 10:
            raise ConfigError("max_retries must be an integer in [0, 10]")
        if not self.timeout_seconds > 0:
            raise ConfigError("timeout_seconds must be positive")
        if not self.backoff_base_seconds > 0:
            raise ConfigError("backoff_base_seconds must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "ProviderConfig":
        """Read ``key: value`` lines (endpoint, max_retries, timeout_seconds, backoff_base_seconds)."""
        values: dict[str, str] = {}
        for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise ConfigError(f"{path}:{no}: expected 'key: value'")
            values[key.strip()] = value.strip()
        unknown = set(values) - {"endpoint", "max_retries", "timeout_seconds", "backoff_base_seconds"}
        if unknown:
            raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(unknown))}")
        if "endpoint" not in values:
            raise ConfigError(f"{path}: missing key: endpoint")
        try:
            return cls(
                endpoint=values["endpoint"],
                max_retries=int(values.get("max_retries", 3)),
                timeout_seconds=float(values.get("timeout_seconds", 30.0)),
                backoff_base_seconds=float(values.get("backoff_base_seconds", 0.5)),
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class DraftResult:
    contract: DataContract
    repair_attempts: int = 0
    notes: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# transports


class TransientTransportError(MeshgateError):
    """A failure worth retrying (network blip, rate limit, 5xx)."""


class ModelTransport(Protocol):
    def complete(self, prompt: str, *, timeout: float) -> str: ...


FAIL = object()


class ScriptedTransport:
    """In-process transport replaying a fixed script of responses.

    Each step is a response string, ``FAIL`` (transient error) or an
    exception instance to raise. Once the script runs out the last step
    repeats. Safe to share between threads.
    """

    def __init__(self, steps: Sequence[object]):
        if not steps:
            raise ValueError("script needs at least one step")
        self.steps = list(steps)
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str, *, timeout: float) -> str:
        with self._lock:
            step = self.steps[min(len(self.calls), len(self.steps) - 1)]
            self.calls.append(prompt)
        if step is FAIL:
            raise TransientTransportError("scripted failure")
        if isinstance(step, BaseException):
            raise step
        return str(step)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedTransport":
        """Load a JSON list; ``{"fail": true}`` entries become transient failures."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ConfigError(f"{path}: script must be a JSON list")
        steps: list[object] = []
        for item in data:
            if isinstance(item, dict) and item.get("fail"):
                steps.append(FAIL)
            elif isinstance(item, str):
                steps.append(item)
            else:
                raise ConfigError(f"{path}: script entries are strings or {{\"fail\": true}}")
        return cls(steps)


class HttpTransport:
    """POSTs ``{"prompt": ...}`` as JSON; accepts ``{"text": ...}`` or a plain body."""

    def __init__(self, endpoint: str):
        self.endpoint = endpoint

    def complete(self, prompt: str, *, timeout: float) -> str:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                payload = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise TransientTransportError(f"HTTP {exc.code}") from exc
            raise ProviderError(f"provider rejected request: HTTP {exc.code}", attempts=1) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransientTransportError(str(exc)) from exc
        try:
            decoded = json.loads(payload)
        except ValueError:
            return payload
        if isinstance(decoded, dict) and isinstance(decoded.get("text"), str):
            return decoded["text"]
        return payload


def transport_for(config: ProviderConfig, base_dir: str | Path | None = None) -> ModelTransport:
    """Build a transport from ``config.endpoint`` (``http(s)://`` or ``script:<path>``)."""
    endpoint = config.endpoint
    if endpoint.startswith(("http://", "https://")):
        return HttpTransport(endpoint)
    if endpoint.startswith("script:"):
        path = Path(endpoint[len("script:") :])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return ScriptedTransport.from_file(path)
    raise ConfigError(f"unsupported endpoint: {endpoint!r}")


# ---------------------------------------------------------------------------
# model path

SYSTEM_TEXT = (
    "You draft data contracts for a governed data platform.\n"
    "Reply with exactly one contract document and nothing else.\n"
    "Use only the keys listed under OUTPUT SCHEMA, in that order, two-space indentation.\n"
    "Write identifiers, enum members and versions bare; quote free text as JSON strings; "
    "write lists as JSON arrays.\n"
    "Ground every field in the CONTEXT: one schema entry per catalog column, no invented columns.\n"
    "Propose quality rules (not_null, range, regex, enum_values, unique) that reflect the business rules.\n"
    "List columns matching the compliance PII labels under compliance.pii_fields."
)


def render_context(bundle: ContextBundle) -> str:
    meta, pack = bundle.metadata, bundle.rulepack
    lines = [f"dataset: {meta.dataset_name}"]
    if meta.catalog_description:
        lines.append(f"description: {meta.catalog_description}")
    lines.append("upstream: " + (", ".join(meta.lineage_upstream) if meta.lineage_upstream else "(none)"))
    lines.append("columns (name | physical_type | nullable | description):")
    for c in meta.columns:
        lines.append(f"  {c.name} | {c.physical_type} | {'true' if c.nullable else 'false'} | {c.description or ''}")
    lines.append(f"compliance pack: {pack.pack_id}")
    lines.append(f"gdpr applies: {'true' if pack.gdpr_applies else 'false'}")
    lines.append(f"default retention days: {pack.default_retention_days if pack.default_retention_days else '(none)'}")
    lines.append("pii labels (label | detector):")
    for p in pack.pii_patterns:
        lines.append(f"  {p.label} | {p.detector}")
    lines.append("annotations:")
    for n in bundle.annotations.notes:
        lines.append(f"  [{n.tag.value}] {n.text}")
    return "\n".join(lines)


def build_prompt(bundle: ContextBundle) -> PromptDocument:
    descriptor = json.dumps(CONTRACT_KEYS, indent=2)
    return PromptDocument(SYSTEM_TEXT, render_context(bundle), descriptor)


def call_model(
    prompt: PromptDocument | str,
    config: ProviderConfig,
    transport: ModelTransport,
    *,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Return the first successful completion.

    Transient failures (``TransientTransportError``, ``TimeoutError``) are
    retried up to ``config.max_retries`` times, sleeping
    ``backoff_base_seconds * 2**attempt`` between tries.
    """
    text = prompt.render() if isinstance(prompt, PromptDocument) else prompt
    attempts = 1 + config.max_retries
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return transport.complete(text, timeout=config.timeout_seconds)
        except (TransientTransportError, TimeoutError) as exc:
            last = exc
            log.warning("model call attempt %d/%d failed: %s", attempt + 1, attempts, exc)
            if attempt + 1 < attempts:
                sleep(config.backoff_base_seconds * 2**attempt)
    raise ProviderError(f"model transport failed: {last}", attempts=attempts)


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\n(.*?)\n?```\s*$", re.S)


def _strip_fences(raw: str) -> str:
    m = _FENCE_RE.match(raw)
    text = m.group(1) if m else raw
    return text if text.endswith("\n") else text + "\n"


def enforce_schema(
    raw: str,
    bundle: ContextBundle,
    *,
    transport: ModelTransport | None = None,
    prompt: PromptDocument | None = None,
    config: ProviderConfig | None = None,
    max_repairs: int = MAX_REPAIRS,
    now: datetime | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> DraftResult:
    """Turn raw model output into a validated draft, re-prompting on errors."""
    if transport is not None:
        prompt = prompt or build_prompt(bundle)
        config = config or ProviderConfig(endpoint="in-process")
    stamp = ProvenanceStamp(DrafterKind.MODEL, bundle.digest, now or utcnow())
    accumulated: list[str] = []
    repairs = 0
    while True:
        try:
            parsed = parse(_strip_fences(raw), require_provenance=False)
            errors = []
            if parsed.dataset_name != bundle.metadata.dataset_name:
                errors.append(
                    f"dataset_name: expected {bundle.metadata.dataset_name}, got {parsed.dataset_name}"
                )
        except ContractValidationError as exc:
            errors = [str(i) for i in exc.issues]
        if not errors:
            contract = replace(parsed, status=LifecycleState.DRAFT, version=DRAFT_VERSION, provenance=stamp)
            ensure_valid(contract)
            notes = (f"drafted by model; {repairs} repair round(s)",)
            return DraftResult(contract, repairs, notes)
        accumulated.extend(errors)
        if transport is None or repairs >= max_repairs:
            raise SchemaEnforcementError(accumulated, repairs)
        repairs += 1
        log.info("schema enforcement failed, repair %d/%d", repairs, max_repairs)
        raw = call_model(prompt.repair(errors), config, transport, sleep=sleep)


# ---------------------------------------------------------------------------
# offline path


def map_physical_type(column: str, physical_type: str) -> LogicalType:
    base = physical_type.strip().lower().split("(", 1)[0].strip()
    try:
        return PHYSICAL_TYPES[base]
    except KeyError:
        raise UnmappableTypeError(column, physical_type) from None


def _label_matches(label: str, column: str) -> bool:
    want = label.lower().split("_")
    have = column.lower().split("_")
    n = len(want)
    return any(have[i : i + n] == want for i in range(len(have) - n + 1))


_FRESH_RE = re.compile(
    r"fresh within\s+(\d+)\s*(s|secs?|seconds?|m|mins?|minutes?|h|hrs?|hours?|d|days?|w|weeks?)\b", re.I
)
_UNIT_SECONDS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}
_OWNER_RE = re.compile(r"team\s+(\S+)\s+email\s+(\S+)", re.I)


def parse_freshness(text: str) -> int | None:
    m = _FRESH_RE.search(text)
    if not m:
        return None
    return int(m.group(1)) * _UNIT_SECONDS[m.group(2)[0].lower()]


_BR_RANGE_RE = re.compile(r"(\w+)\s*(>=|<=)\s*(\S+)")
_BR_BETWEEN_RE = re.compile(r"(\w+)\s+between\s+(\S+)\s+and\s+(\S+)", re.I)
_BR_IN_RE = re.compile(r"(\w+)\s+in\s+[\[{](.*)[\]}]", re.I)
_BR_UNIQUE_RE = re.compile(r"(\w+)\s+(?:is\s+)?unique", re.I)
_BR_MATCHES_RE = re.compile(r"(\w+)\s+matches\s+(.+)", re.I)


def _literal(token: str, ltype: LogicalType) -> object:
    token = token.strip().strip("'\"")
    if ltype is LogicalType.INTEGER:
        return int(token)
    if ltype in (LogicalType.FLOAT, LogicalType.DECIMAL):
        value = float(token)
        return int(value) if value.is_integer() and "." not in token else value
    if ltype is LogicalType.BOOLEAN:
        if token.lower() not in ("true", "false"):
            raise ValueError(token)
        return token.lower() == "true"
    return token


def _business_rule(text: str, types: dict[str, LogicalType]) -> tuple[str, QualityRule] | None:
    """Parse one business-rule annotation into (column, rule); None if unrecognised."""
    m = _BR_BETWEEN_RE.fullmatch(text)
    if m and m.group(1) in types:
        t = types[m.group(1)]
        return m.group(1), QualityRule(RuleKind.RANGE, min=_literal(m.group(2), t), max=_literal(m.group(3), t))
    m = _BR_IN_RE.fullmatch(text)
    if m and m.group(1) in types:
        t = types[m.group(1)]
        values = tuple(_literal(v, t) for v in m.group(2).split(",") if v.strip())
        return m.group(1), QualityRule(RuleKind.ENUM_VALUES, values=values)
    m = _BR_UNIQUE_RE.fullmatch(text)
    if m and m.group(1) in types:
        return m.group(1), QualityRule(RuleKind.UNIQUE)
    m = _BR_MATCHES_RE.fullmatch(text)
    if m and m.group(1) in types:
        return m.group(1), QualityRule(RuleKind.REGEX, pattern=m.group(2).strip())
    m = _BR_RANGE_RE.fullmatch(text)
    if m and m.group(1) in types:
        t = types[m.group(1)]
        value = _literal(m.group(3), t)
        if m.group(2) == ">=":
            return m.group(1), QualityRule(RuleKind.RANGE, min=value)
        return m.group(1), QualityRule(RuleKind.RANGE, max=value)
    return None


def _merge(existing: QualityRule | None, new: QualityRule) -> QualityRule:
    if existing is None or new.kind is not RuleKind.RANGE:
        return new
    return replace(
        existing,
        min=new.min if new.min is not None else existing.min,
        max=new.max if new.max is not None else existing.max,
    )


def deterministic_draft(
    bundle: ContextBundle,
    *,
    now: datetime | None = None,
    placeholder_owner: OwnerSpec = DEFAULT_OWNER,
) -> DraftResult:
    """Draft a contract from the bundle by fixed rules, without a model.

    The output depends only on ``bundle`` and ``now``.
    """
    meta, pack, notes_in = bundle.metadata, bundle.rulepack, bundle.annotations
    notes: list[str] = []

    types = {c.name: map_physical_type(c.name, c.physical_type) for c in meta.columns}
    rules: dict[str, dict[RuleKind, QualityRule]] = {c.name: {} for c in meta.columns}
    for c in meta.columns:
        if not c.nullable:
            rules[c.name][RuleKind.NOT_NULL] = QualityRule(RuleKind.NOT_NULL)

    for text in notes_in.tagged(NoteTag.BUSINESS_RULE):
        try:
            parsed = _business_rule(text, types)
        except ValueError:
            parsed = None
        if parsed is None:
            notes.append(f"business rule not applied: {text}")
            continue
        column, rule = parsed
        candidate = _merge(rules[column].get(rule.kind), rule)
        problems: list = []
        validate_rule(candidate, types[column], column, problems)
        if problems:
            notes.append(f"business rule not applied: {text} ({problems[0]})")
            continue
        rules[column][rule.kind] = candidate
        notes.append(f"{column}: {rule.kind.value} rule from business rule '{text}'")

    pii_fields: list[str] = []
    classes: dict[str, PiiClass] = {}
    for c in meta.columns:
        for p in pack.pii_patterns:
            if _label_matches(p.label, c.name):
                cls = DETECTOR_CLASSES[p.detector]
                classes[c.name] = cls
                pii_fields.append(c.name)
                notes.append(f"{c.name}: PII via rule pack label '{p.label}' ({cls.value})")
                break

    fields = []
    kind_order = list(RuleKind)
    for c in meta.columns:
        ordered = tuple(sorted(rules[c.name].values(), key=lambda r: kind_order.index(r.kind)))
        fields.append(
            FieldSpec(
                name=c.name,
                logical_type=types[c.name],
                nullable=c.nullable,
                description=c.description or "",
                rules=ordered,
                pii_class=classes.get(c.name, PiiClass.NONE),
            )
        )

    freshness = DEFAULT_FRESHNESS_SECONDS
    for text in notes_in.tagged(NoteTag.SLA_HINT):
        seconds = parse_freshness(text)
        if seconds:
            freshness = seconds
            notes.append(f"freshness {seconds}s from sla hint '{text}'")

    owner = placeholder_owner
    for text in notes_in.tagged(NoteTag.OWNER_HINT):
        m = _OWNER_RE.search(text)
        if m:
            owner = OwnerSpec(m.group(1), m.group(2))
            notes.append(f"owner {owner.team} from owner hint")
    if owner == placeholder_owner:
        notes.append("owner is a placeholder; set it during review")

    contract = DataContract(
        dataset_name=meta.dataset_name,
        version=DRAFT_VERSION,
        schema=tuple(fields),
        sla=SlaSpec(freshness, DEFAULT_MIN_PASS_RATE),
        compliance=ComplianceSpec(tuple(pii_fields), pack.gdpr_applies, pack.default_retention_days),
        owner=owner,
        status=LifecycleState.DRAFT,
        provenance=ProvenanceStamp(DrafterKind.DETERMINISTIC, bundle.digest, now or utcnow()),
    )
    ensure_valid(contract)
    return DraftResult(contract, 0, tuple(notes))


def draft_contract(
    bundle: ContextBundle,
    config: ProviderConfig | None = None,
    transport: ModelTransport | None = None,
    *,
    now: datetime | None = None,
    max_repairs: int = MAX_REPAIRS,
    sleep: Callable[[float], None] = time.sleep,
) -> DraftResult:
    if transport is None:
        return deterministic_draft(bundle, now=now)
    config = config or ProviderConfig(endpoint="in-process")
    prompt = build_prompt(bundle)
    raw = call_model(prompt, config, transport, sleep=sleep)
    return enforce_schema(
        raw, bundle, transport=transport, prompt=prompt, config=config, max_repairs=max_repairs, now=now, sleep=sleep
    )

