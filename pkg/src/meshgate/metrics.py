"""Platform value metrics: adoption, time-to-find, time-to-insight and V.

    V = w_u * U/U0 + w_f * (1 - F/F0) + w_i * (1 - I/I0)

U counts distinct consumers across the whole portfolio in a half-open
window, F is the median discovery time in minutes and I the median
request-to-sign-off time in days. No term is clamped.

Event logs are JSON Lines with a ``type`` discriminator::

    {"type": "access", "ts": "...", "consumer": "team-a", "product": "sales.orders"}
    {"type": "discovery", "session": "s1", "search_ts": "...", "select_ts": "..."}
    {"type": "insight", "ticket": "T-1", "opened_ts": "...", "signoff_ts": "..."}
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from meshgate.errors import ConfigError, FixtureError, UndefinedMetricError
from meshgate.timeutil import parse_utc

WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AccessEvent:
    timestamp: datetime
    consumer_id: str
    product_id: str

    def __post_init__(self) -> None:
        if not self.consumer_id or not self.product_id:
            raise ValueError("consumer_id and product_id must be non-empty")


@dataclass(frozen=True)
class DiscoverySession:
    session_id: str
    search_start: datetime
    asset_selected: datetime

    def __post_init__(self) -> None:
        if self.asset_selected < self.search_start:
            raise ValueError(f"session {self.session_id}: selection precedes search")


@dataclass(frozen=True)
class InsightTicket:
    ticket_id: str
    opened: datetime
    signed_off: datetime

    def __post_init__(self) -> None:
        if self.signed_off < self.opened:
            raise ValueError(f"ticket {self.ticket_id}: sign-off precedes opening")


@dataclass(frozen=True)
class ValueScoreInput:
    U: float
    F: float
    I: float
    U0: float
    F0: float
    I0: float
    w_u: float = 1 / 3
    w_f: float = 1 / 3
    w_i: float = 1 / 3

    def __post_init__(self) -> None:
        for name in ("U", "F", "I", "U0", "F0", "I0", "w_u", "w_f", "w_i"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number")
        if min(self.U0, self.F0, self.I0) <= 0:
            raise ConfigError("baselines U0, F0, I0 must be positive")
        if min(self.w_u, self.w_f, self.w_i) < 0:
            raise ConfigError("weights must be non-negative")
        if abs(self.w_u + self.w_f + self.w_i - 1) > WEIGHT_TOLERANCE:
            raise ConfigError(f"weights must sum to 1, got {self.w_u + self.w_f + self.w_i!r}")
        if min(self.U, self.F, self.I) < 0:
            raise ConfigError("U, F and I must be non-negative")


def _seconds(a: datetime, b: datetime) -> int:
    # Second precision: drop sub-second parts before subtracting.
    return int((b.replace(microsecond=0) - a.replace(microsecond=0)).total_seconds())


def compute_U(events: Iterable[AccessEvent], start: datetime, end: datetime) -> int:
    """Distinct consumers with at least one access in ``[start, end)``."""
    if not start < end:
        raise ValueError("window start must precede end")
    return len({e.consumer_id for e in events if start <= e.timestamp < end})


def _median(values: Sequence[float], what: str) -> float:
    if not values:
        raise UndefinedMetricError(f"{what} is undefined without observations")
    return statistics.median(values)


def compute_F(sessions: Sequence[DiscoverySession]) -> float:
    """Median time-to-find in minutes."""
    return _median([_seconds(s.search_start, s.asset_selected) / 60 for s in sessions], "time-to-find")


def compute_I(tickets: Sequence[InsightTicket]) -> float:
    """Median time-to-insight in days."""
    return _median([_seconds(t.opened, t.signed_off) / 86400 for t in tickets], "time-to-insight")


def value_score(inp: ValueScoreInput) -> float:
    return (
        inp.w_u * (inp.U / inp.U0)
        + inp.w_f * (1 - inp.F / inp.F0)
        + inp.w_i * (1 - inp.I / inp.I0)
    )


def round_half_up(value: float, places: int = 2) -> Decimal:
    # repr gives the shortest decimal that round-trips, so 0.125 stays 0.125.
    return Decimal(repr(value)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def _fmt(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return f"{value:g}"


TABLE_HEADER = ("regime", "U", "F_min", "I_days", "V")


def regime_table(rows: Sequence[tuple[str, ValueScoreInput]]) -> str:
    """Tab-separated table of label, U, F, I and V (2 decimals, half-up)."""
    lines = ["\t".join(TABLE_HEADER)]
    for label, inp in rows:
        v = round_half_up(value_score(inp))
        lines.append("\t".join([label, _fmt(inp.U), _fmt(inp.F), _fmt(inp.I), f"{v}"]))
    return "\n".join(lines) + "\n"


# Reference regimes: baselines 200 consumers / 45 min / 5 days, equal weights.
REFERENCE_BASELINES = {"U0": 200, "F0": 45, "I0": 5}
REFERENCE_REGIMES: tuple[tuple[str, float, float, float], ...] = (
    ("Centralized platform", 220, 40, 4.5),
    ("Pure data mesh", 260, 35, 3.0),
    ("AI hub-and-spoke", 350, 15, 1.5),
)


def reference_inputs() -> list[tuple[str, ValueScoreInput]]:
    return [(label, ValueScoreInput(U, F, I, **REFERENCE_BASELINES)) for label, U, F, I in REFERENCE_REGIMES]


# ---------------------------------------------------------------------------
# files


@dataclass(frozen=True)
class EventLog:
    access: tuple[AccessEvent, ...] = ()
    discovery: tuple[DiscoverySession, ...] = ()
    insight: tuple[InsightTicket, ...] = ()


_EVENT_KEYS = {
    "access": {"type", "ts", "consumer", "product"},
    "discovery": {"type", "session", "search_ts", "select_ts"},
    "insight": {"type", "ticket", "opened_ts", "signoff_ts"},
}


def parse_events(text: str, source: str = "<events>") -> EventLog:
    access, discovery, insight = [], [], []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except ValueError as exc:
            raise FixtureError(f"invalid JSON: {exc}", source=source, line=no) from None
        kind = rec.get("type") if isinstance(rec, dict) else None
        if kind not in _EVENT_KEYS:
            raise FixtureError(f"unknown event type: {kind!r}", source=source, line=no)
        if set(rec) != _EVENT_KEYS[kind]:
            raise FixtureError(f"{kind} event needs keys {sorted(_EVENT_KEYS[kind])}", source=source, line=no)
        try:
            if kind == "access":
                access.append(AccessEvent(parse_utc(rec["ts"]), str(rec["consumer"]), str(rec["product"])))
            elif kind == "discovery":
                discovery.append(
                    DiscoverySession(str(rec["session"]), parse_utc(rec["search_ts"]), parse_utc(rec["select_ts"]))
                )
            else:
                insight.append(
                    InsightTicket(str(rec["ticket"]), parse_utc(rec["opened_ts"]), parse_utc(rec["signoff_ts"]))
                )
        except ValueError as exc:
            raise FixtureError(str(exc), source=source, line=no) from None
    return EventLog(tuple(access), tuple(discovery), tuple(insight))


def load_events(path: str | Path) -> EventLog:
    return parse_events(Path(path).read_text(encoding="utf-8"), source=str(path))


BASELINE_KEYS = ("U0", "F0", "I0", "w_u", "w_f", "w_i")


def load_baselines(path: str | Path) -> dict[str, float]:
    """Read ``key: value`` lines for U0, F0, I0 and optional weights (default 1/3 each)."""
    values: dict[str, float] = {}
    for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep or key not in BASELINE_KEYS:
            raise ConfigError(f"{path}:{no}: expected one of {', '.join(BASELINE_KEYS)} as 'key: value'")
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"{path}:{no}: {key} must be a number") from None
    missing = [k for k in ("U0", "F0", "I0") if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing {', '.join(missing)}")
    weights = [k for k in ("w_u", "w_f", "w_i") if k in values]
    if weights and len(weights) != 3:
        raise ConfigError(f"{path}: give all three weights or none")
    if not weights:
        values.update(w_u=1 / 3, w_f=1 / 3, w_i=1 / 3)
    return values
