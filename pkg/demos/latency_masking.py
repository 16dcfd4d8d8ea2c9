"""Phase I latency stays flat as the cloud moves further away.

Runs the same workload with the cloud at each preset site and prints the
median add latency for both commit phases next to the cloud-only baseline.
"""
import statistics

from wedgechain.scenario import ScenarioConfig, run_scenario
from wedgechain.simnet import PRESET_RTT_FROM_C


def main():
    print(f"{'cloud':>5} {'rtt':>5} {'phase1':>7} {'phase2':>7} {'cloud-only':>10}")
    for site in ("O", "V", "I", "M"):
        base = dict(writers=4, window=5, batch_size=10, writes_per_writer=100, site_cloud=site, lsm_enabled=False)
        wc = run_scenario(ScenarioConfig(**base))
        co = run_scenario(ScenarioConfig(baseline="cloud_only", **base))
        print(
            f"{site:>5} {PRESET_RTT_FROM_C[site]:>5.0f} {statistics.median(wc.latencies(1)):>7.1f} "
            f"{statistics.median(wc.latencies(2)):>7.1f} {statistics.median(co.latencies(1)):>10.1f}"
        )


if __name__ == "__main__":
    main()
