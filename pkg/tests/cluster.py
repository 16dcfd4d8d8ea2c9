"""In-process cluster: edge, cloud and clients wired by direct calls."""
from wedgechain.client import Client, FreshnessConfig
from wedgechain.cloud import CloudNode
from wedgechain.crypto import KeyDirectory
from wedgechain.edge import EdgeNode
from wedgechain.model import client, cloud, edge

C0, C1, C2, E0, CL = client(0), client(1), client(2), edge(0), cloud()


class Cluster:
    """Edge, cloud and clients wired by direct calls, no network delays."""

    def __init__(self, batch_size=2, thresholds=(2, 2, 4), page_size=2, n_clients=3, window_ms=float("inf"), **edge_kw):
        self.clients_ids = [client(i) for i in range(n_clients)]
        self.directory = KeyDirectory([E0, CL, *self.clients_ids])
        self.cloud = CloudNode(CL, self.directory, thresholds=thresholds, page_size=page_size, record_merges=True)
        roots, groot = self.cloud.bootstrap(E0)
        self.edge = EdgeNode(
            E0, CL, self.directory, batch_size=batch_size, thresholds=thresholds,
            level_roots=roots, global_root=groot, **edge_kw,
        )
        fresh = FreshnessConfig(window_ms=window_ms, dispute_timeout_ms=100.0)
        self.clients = {c: Client(c, E0, CL, self.directory, fresh) for c in self.clients_ids}
        self.nodes = {E0: self.edge, CL: self.cloud, **self.clients}
        self.log = []  # every (src, dst, msg) delivered
        self.now = 0.0

    def deliver(self, src, out, hold=()):
        """Deliver outputs breadth-first; messages whose type is in ``hold`` are returned instead."""
        queue = [(src, dst, msg) for dst, msg in out]
        held = []
        while queue:
            s, d, m = queue.pop(0)
            if isinstance(m, hold):
                held.append((s, d, m))
                continue
            self.log.append((s, d, m))
            queue.extend((d, d2, m2) for d2, m2 in self.nodes[d].on_message(s, m, self.now))
        return held

    def put(self, c, key, value, **kw):
        return self.deliver(c, [(E0, self.clients[c].put(key, value, self.now))], **kw)

    def append(self, c, payload=b"x", **kw):
        return self.deliver(c, [(E0, self.clients[c].log_data(payload, self.now))], **kw)

    def cloud_public(self):
        return self.directory.public(CL)
