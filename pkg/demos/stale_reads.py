"""Freshness window against an edge serving an old snapshot.

The edge answers gets from a snapshot of its index that is ``age_ms`` old.
Below the freshness window the answers are still acceptable; beyond it the
reader retries and finally reports the get as stale, never trusting it.
"""
from collections import Counter

from wedgechain.adversary import Behavior, FaultSpec
from wedgechain.model import client
from wedgechain.scenario import ScenarioConfig, simulate

WINDOW_MS = 200.0


def main():
    for age in (WINDOW_MS / 2, 2 * WINDOW_MS):
        sc = simulate(ScenarioConfig(
            mode="kv", writers=1, readers=1, batch_size=1, writes_per_writer=20, site_cloud="V",
            thresholds=(2, 2, 4), page_size=4, key_range=8, window_ms=WINDOW_MS,
            noop_interval_ms=10.0, noop_until_ms=3000.0, read_start_ms=1000.0, reads_per_reader=10,
            read_interval_ms=150.0, faults={0: FaultSpec(Behavior.STALE_SNAPSHOT, age_ms=age)},
        ))
        reader = sc.clients[client(1)]
        outcomes = Counter(op.outcome for op in reader.ops if op.kind == "get")
        print(f"snapshot age {age:5.0f} ms (window {WINDOW_MS:.0f} ms): {dict(outcomes)}, "
              f"{len(reader.accepted_gets)} accepted, {len(sc.cloud.verdicts)} verdicts")


if __name__ == "__main__":
    main()
