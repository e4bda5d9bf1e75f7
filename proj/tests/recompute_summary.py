"""Recompute summary.json from outcomes.jsonl without the simulator's code.

usage: recompute_summary.py <apcsim> <config> <scratch-dir>
"""

import json
import math
import subprocess
import sys
from pathlib import Path

EXCLUDED = 3


def nearest_rank(sorted_vals, pct):
    rank = max(1, math.ceil(pct * len(sorted_vals) / 100))
    return sorted_vals[rank - 1]


def group(rows):
    reused = sum(r["reused_blocks"] for r in rows)
    total = sum(r["total_blocks"] for r in rows)
    mean = 0.0
    for r in rows:
        mean += r["ttft_ms"]
    ttfts = sorted(r["ttft_ms"] for r in rows)
    return {
        "requests": len(rows),
        "reused_blocks": reused,
        "total_blocks": total,
        "hit_rate": reused / total if total else 0.0,
        "ttft_mean_ms": mean / len(rows),
        "ttft_p50_ms": nearest_rank(ttfts, 50),
        "ttft_p99_ms": nearest_rank(ttfts, 99),
    }


def check(label, want, got):
    bad = [k for k, v in want.items() if got.get(k) != v]
    for k in bad:
        print(f"{label}.{k}: recomputed {want[k]!r}, summary {got.get(k)!r}")
    return not bad


def main():
    binary, config, scratch = sys.argv[1:4]
    out = Path(scratch)
    subprocess.run(
        [binary, "run", config, "--output-dir", str(out), "--exclude-user", str(EXCLUDED)],
        check=True,
        stdout=subprocess.DEVNULL,
    )
    rows = [json.loads(line) for line in (out / "outcomes.jsonl").read_text().splitlines()]
    rows.sort(key=lambda r: r["id"])
    summary = json.loads((out / "summary.json").read_text())

    ok = check("all", group(rows), summary)
    kept = [r for r in rows if r["user"] != EXCLUDED]
    ok &= summary["excluded_users"] == [EXCLUDED]
    ok &= check("excluding_users", group(kept), summary["excluding_users"] or {})
    users = sorted({r["user"] for r in rows})
    ok &= [u["user"] for u in summary["per_user"]] == users
    for entry in summary["per_user"]:
        mine = [r for r in rows if r["user"] == entry["user"]]
        ok &= check(f"user{entry['user']}", group(mine), entry)
    print(f"rows={len(rows)} users={len(users)} match={ok}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
