"""An edge that lies gets caught.

Each faulty behavior runs against the same small workload. The clients
accept the edge's Phase I answers, then notice the contradiction once the
cloud's proof or gossip arrives, and the cloud turns their dispute into a
verdict against the edge.
"""
from wedgechain.adversary import Behavior, FaultSpec
from wedgechain.model import edge
from wedgechain.scenario import ScenarioConfig, simulate


def main():
    for behavior in (Behavior.EQUIVOCATE, Behavior.DROP_ENTRY, Behavior.WRONG_DIGEST, Behavior.OMIT_BLOCK):
        sc = simulate(ScenarioConfig(
            seed=7, writers=2, readers=1, batch_size=2, writes_per_writer=4, site_cloud="V",
            gossip_interval_ms=20.0, faults={0: FaultSpec(behavior, bid=1)},
        ))
        disputes = sum(len(c.disputes) for c in sc.clients.values())
        print(f"{behavior.value:>13}: {sc.edges[edge(0)].tampered} tampered messages, {disputes} disputes")
        for v in sc.cloud.verdicts:
            who = f" (raised by {v.disputant})" if v.disputant else ""
            print(f"{'':>15}{v.time:8.1f} ms  {v.edge} -> {v.reason.name.lower()}{who}")


if __name__ == "__main__":
    main()
