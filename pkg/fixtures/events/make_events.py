"""Regenerate the hub-and-spoke event fixture.

Aggregates are fixed by construction: 350 distinct consumers inside the
window, median discovery 15 minutes, median sign-off 1.5 days.

    python3 fixtures/events/make_events.py > fixtures/events/hub_spoke.jsonl
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timedelta, timezone

START = datetime(2026, 1, 1, tzinfo=timezone.utc)
PRODUCTS = ["sales.orders", "sales.refunds", "crm.accounts", "ops.shipments"]


def ts(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def main() -> None:
    out = []
    for n in range(350):
        for k in range(1 + n % 3):
            when = START + timedelta(hours=n, minutes=11 * k)
            out.append({"type": "access", "ts": ts(when), "consumer": f"consumer-{n:03d}", "product": PRODUCTS[(n + k) % 4]})
    # outside the 2026-01 window; only counted without an explicit window
    out.append({"type": "access", "ts": "2026-02-03T00:00:00Z", "consumer": "consumer-late", "product": "sales.orders"})
    for i, minutes in enumerate([4, 9, 12, 15, 15, 21, 38]):
        start = START + timedelta(days=i, hours=10)
        out.append({"type": "discovery", "session": f"s{i}", "search_ts": ts(start), "select_ts": ts(start + timedelta(minutes=minutes))})
    for i, hours in enumerate([20, 30, 36, 40, 72]):
        opened = START + timedelta(days=2 * i, hours=9)
        out.append({"type": "insight", "ticket": f"T-{i}", "opened_ts": ts(opened), "signoff_ts": ts(opened + timedelta(hours=hours))})
    sys.stdout.write("".join(json.dumps(r) + "\n" for r in out))


if __name__ == "__main__":
    main()
