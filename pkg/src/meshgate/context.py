"""Context assembly: catalog metadata, compliance rule packs and annotations.

The catalog is a directory of ``<dataset>.catalog`` fixture files::

    dataset: sales.orders
    description: Orders placed through the web store
    upstream: raw.orders
    columns:
      order_id|bigint|false|Order identifier
      customer_email|varchar|false|

Rule packs use the same line-oriented style::

    pack_id: eu-default
    gdpr: true
    retention_days: 365
    pii:
      email|email
      card_number|credit_card

Each ``pii`` row is ``label|detector``; a bare ``label`` uses the detector of
the same name.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from meshgate.contract_model import DATASET_RE, DETECTOR_CLASSES
from meshgate.errors import DatasetNotFoundError, FixtureError


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    physical_type: str
    nullable: bool
    description: str | None = None


@dataclass(frozen=True)
class TableMetadata:
    dataset_name: str
    columns: tuple[ColumnMeta, ...]
    lineage_upstream: tuple[str, ...] = ()
    catalog_description: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "lineage_upstream", tuple(self.lineage_upstream))
        if not DATASET_RE.fullmatch(self.dataset_name):
            raise FixtureError(f"invalid dataset name: {self.dataset_name!r}")
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise FixtureError(f"duplicate column: {col.name}")
            seen.add(col.name)


@dataclass(frozen=True)
class PiiPattern:
    label: str
    detector: str


@dataclass(frozen=True)
class RulePack:
    pack_id: str
    pii_patterns: tuple[PiiPattern, ...] = ()
    gdpr_applies: bool = False
    default_retention_days: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "pii_patterns", tuple(self.pii_patterns))
        labels = [p.label for p in self.pii_patterns]
        if len(labels) != len(set(labels)):
            dupes = sorted({x for x in labels if labels.count(x) > 1})
            raise FixtureError(f"duplicate pii labels: {', '.join(dupes)}")
        if self.default_retention_days is not None and self.default_retention_days <= 0:
            raise FixtureError("retention_days must be positive")


class NoteTag(str, Enum):
    BUSINESS_RULE = "business_rule"
    SLA_HINT = "sla_hint"
    OWNER_HINT = "owner_hint"
    FREEFORM = "freeform"


@dataclass(frozen=True)
class Note:
    tag: NoteTag
    text: str


@dataclass(frozen=True)
class AnnotationSet:
    notes: tuple[Note, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "notes", tuple(self.notes))

    def tagged(self, tag: NoteTag) -> list[str]:
        return [n.text for n in self.notes if n.tag is tag]


@dataclass(frozen=True)
class ContextBundle:
    metadata: TableMetadata
    rulepack: RulePack
    annotations: AnnotationSet
    digest: str

    def verify(self) -> bool:
        return self.digest == bundle_digest(self.metadata, self.rulepack, self.annotations)


# ---------------------------------------------------------------------------
# fixture parsing

_KV_RE = re.compile(r"([a-z_]+):\s*(.*)")


def _rows(text: str, source: str):
    """Yield (line_no, indented, key, value) for each meaningful line."""
    for no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if raw[0] in " \t":
            yield no, True, None, raw.strip()
            continue
        m = _KV_RE.fullmatch(raw.rstrip())
        if not m:
            raise FixtureError(f"expected 'key: value', got {raw.strip()[:40]!r}", source=source, line=no)
        yield no, False, m.group(1), m.group(2).strip()


def _parse_bool(value: str, source: str, line: int) -> bool:
    low = value.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    raise FixtureError(f"expected true or false, got {value!r}", source=source, line=line)


def parse_catalog(text: str, source: str = "<catalog>") -> TableMetadata:
    dataset = None
    description = None
    upstream: list[str] = []
    columns: list[ColumnMeta] = []
    block = None
    for no, indented, key, value in _rows(text, source):
        if indented:
            if block != "columns":
                raise FixtureError("indented row outside a columns block", source=source, line=no)
            parts = value.split("|", 3)
            if len(parts) < 3:
                raise FixtureError("column row needs name|physical_type|nullable[|description]", source=source, line=no)
            name, ptype, nullable = (p.strip() for p in parts[:3])
            desc = parts[3].strip() if len(parts) == 4 and parts[3].strip() else None
            if not name or not ptype:
                raise FixtureError("column name and physical type are required", source=source, line=no)
            if any(c.name == name for c in columns):
                raise FixtureError(f"duplicate column: {name}", source=source, line=no)
            columns.append(ColumnMeta(name, ptype, _parse_bool(nullable, source, no), desc))
            continue
        block = None
        if key == "dataset":
            if not DATASET_RE.fullmatch(value):
                raise FixtureError(f"invalid dataset name: {value!r}", source=source, line=no)
            dataset = value
        elif key == "description":
            description = value or None
        elif key == "upstream":
            if not DATASET_RE.fullmatch(value):
                raise FixtureError(f"invalid upstream dataset: {value!r}", source=source, line=no)
            upstream.append(value)
        elif key == "columns":
            if value:
                raise FixtureError("columns: takes an indented block", source=source, line=no)
            block = "columns"
        else:
            raise FixtureError(f"unknown key: {key}", source=source, line=no)
    if dataset is None:
        raise FixtureError("missing key: dataset", source=source)
    return TableMetadata(dataset, tuple(columns), tuple(upstream), description)


def fetch_metadata(catalog_root: str | Path, dataset: str) -> TableMetadata:
    """Read ``<catalog_root>/<dataset>.catalog``; columns keep file order."""
    path = Path(catalog_root) / f"{dataset}.catalog"
    if not path.is_file():
        raise DatasetNotFoundError(f"dataset {dataset!r} not found in catalog {catalog_root}")
    meta = parse_catalog(path.read_text(encoding="utf-8"), source=str(path))
    if meta.dataset_name != dataset:
        raise FixtureError(f"catalog declares dataset {meta.dataset_name!r}, expected {dataset!r}", source=str(path))
    return meta


def parse_rulepack(text: str, source: str = "<rulepack>") -> RulePack:
    pack_id = None
    gdpr = False
    retention = None
    patterns: list[PiiPattern] = []
    block = None
    for no, indented, key, value in _rows(text, source):
        if indented:
            if block != "pii":
                raise FixtureError("indented row outside a pii block", source=source, line=no)
            parts = [p.strip() for p in value.split("|")]
            if len(parts) > 2 or not parts[0]:
                raise FixtureError("pii row must be label or label|detector", source=source, line=no)
            label = parts[0]
            detector = parts[1] if len(parts) == 2 else label
            if detector not in DETECTOR_CLASSES:
                raise FixtureError(f"unknown detector: {detector}", source=source, line=no)
            if any(p.label == label for p in patterns):
                raise FixtureError(f"duplicate pii label: {label}", source=source, line=no)
            patterns.append(PiiPattern(label, detector))
            continue
        block = None
        if key == "pack_id":
            pack_id = value
        elif key == "gdpr":
            gdpr = _parse_bool(value, source, no)
        elif key == "retention_days":
            try:
                retention = int(value)
            except ValueError:
                raise FixtureError(f"retention_days must be an integer, got {value!r}", source=source, line=no) from None
            if retention <= 0:
                raise FixtureError("retention_days must be positive", source=source, line=no)
        elif key == "pii":
            block = "pii"
        else:
            raise FixtureError(f"unknown key: {key}", source=source, line=no)
    if not pack_id:
        raise FixtureError("missing key: pack_id", source=source)
    return RulePack(pack_id, tuple(patterns), gdpr, retention)


def load_compliance(rulepack_path: str | Path) -> RulePack:
    path = Path(rulepack_path)
    return parse_rulepack(path.read_text(encoding="utf-8"), source=str(path))


_TAG_RE = re.compile(r"\[([^\]]*)\]\s*(.*)")


def collect_annotations(notes_source: str) -> AnnotationSet:
    """Turn each non-blank line into a note; ``[tag] text`` sets the tag."""
    notes = []
    for no, raw in enumerate(notes_source.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _TAG_RE.fullmatch(line)
        if m:
            try:
                tag = NoteTag(m.group(1).strip())
            except ValueError:
                raise FixtureError(f"unknown tag: [{m.group(1)}]", source="<notes>", line=no) from None
            text = m.group(2).strip()
        else:
            tag, text = NoteTag.FREEFORM, line
        if not text:
            raise FixtureError("annotation text is empty", source="<notes>", line=no)
        notes.append(Note(tag, text))
    return AnnotationSet(tuple(notes))


# ---------------------------------------------------------------------------
# bundle


def _canonical(metadata: TableMetadata, rulepack: RulePack, annotations: AnnotationSet) -> str:
    doc = {
        "metadata": {
            "dataset_name": metadata.dataset_name,
            "catalog_description": metadata.catalog_description,
            "lineage_upstream": list(metadata.lineage_upstream),
            "columns": [[c.name, c.physical_type, c.nullable, c.description] for c in metadata.columns],
        },
        "rulepack": {
            "pack_id": rulepack.pack_id,
            "gdpr_applies": rulepack.gdpr_applies,
            "default_retention_days": rulepack.default_retention_days,
            "pii_patterns": [[p.label, p.detector] for p in rulepack.pii_patterns],
        },
        "annotations": [[n.tag.value, n.text] for n in annotations.notes],
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def bundle_digest(metadata: TableMetadata, rulepack: RulePack, annotations: AnnotationSet) -> str:
    return hashlib.sha256(_canonical(metadata, rulepack, annotations).encode("utf-8")).hexdigest()


def assemble_context(metadata: TableMetadata, rulepack: RulePack, annotations: AnnotationSet) -> ContextBundle:
    return ContextBundle(metadata, rulepack, annotations, bundle_digest(metadata, rulepack, annotations))
