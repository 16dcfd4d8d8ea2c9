import csv
import io
import statistics

import pytest

from wedgechain.adversary import Behavior
from wedgechain.model import edge
from wedgechain.scenario import (
    MESSAGES_HEADER,
    OPS_HEADER,
    ScenarioConfig,
    csv_files,
    emit_csv,
    parse_config,
    run_scenario,
)
from wedgechain.simnet import ConfigError


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_parse_flat_keys():
    cfg = parse_config(
        """
        # comment lines and trailing comments are ignored
        seed = 9
        clients = 4            # alias for writers
        sites.cloud = M
        rtt.C.M = 200
        batch_size = 10
        workload.window = 5
        workload.ops_total = 100
        lsm.thresholds = 2, 2, 4
        freshness.window_ms = 500
        fault.edge0.behavior = omit_block
        fault.edge0.bid = 2
        """
    )
    assert (cfg.seed, cfg.writers, cfg.site_cloud, cfg.batch_size) == (9, 4, "M", 10)
    assert cfg.rtt == {("C", "M"): 200.0}
    assert cfg.writes_per_writer == 25
    assert cfg.thresholds == (2, 2, 4)
    assert cfg.window_ms == 500.0
    assert cfg.faults[0].behavior == Behavior.OMIT_BLOCK and cfg.faults[0].bid == 2


def test_read_write_ratio_sets_reads():
    cfg = parse_config("writers = 2\nreaders = 4\nbatch_size = 2\nworkload.writes_per_writer = 10\nworkload.read_write_ratio = 2")
    assert cfg.reads_per_reader == 10


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("colour = blue", "unknown key"),
        ("batch_size = many", "cannot parse"),
        ("just words", "key = value"),
        ("batch_size = 1\nsites.edge = O\nsites.cloud = V", "no RTT"),
        ("batch_size = 100\nworkload.window = 1", "never fill a block"),
        ("baseline = cloud_only\nworkload.mode = kv\nreaders = 1\nbatch_size = 1", "no authenticated index"),
        ("baseline = edge_baseline\nbatch_size = 1\nfault.edge0.behavior = equivocate", "faults only apply"),
        ("batch_size = 1\nfault.edge0.behavior = gossip_harder", "unknown fault behavior"),
        ("batch_size = 1\nfault.client0.behavior = equivocate", "edges only"),
        ("batch_size = 1\nfault.edge3.behavior = equivocate", "does not exist"),
        ("batch_size = 1\nlsm.thresholds = 4", "at least two"),
        ("batch_size = 1\nfreshness.window_ms = 0", "positive"),
        ("batch_size = 1\nlsm.enabled = maybe", "cannot parse"),
        ("baseline = hybrid", "baseline must be"),
    ],
)
def test_bad_configs_are_rejected(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_empty_run_writes_headers_only(tmp_path):
    m = run_scenario(ScenarioConfig(writers=0, batch_size=1))
    paths = emit_csv(m, tmp_path / "out")
    assert sorted(p.name for p in paths) == ["messages.csv", "ops.csv", "summary.csv", "timeline.csv", "verdicts.csv"]
    for p in paths:
        if p.name != "summary.csv":
            assert len(rows(p.read_text())) == 1
    assert rows((tmp_path / "out" / "ops.csv").read_text())[0] == list(OPS_HEADER)
    assert rows((tmp_path / "out" / "messages.csv").read_text())[0] == list(MESSAGES_HEADER)


def test_emit_to_unwritable_path_fails(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit_csv(run_scenario(ScenarioConfig(writers=0, batch_size=1)), blocker / "sub")


@pytest.fixture(scope="module")
def busy():
    cfg = ScenarioConfig(writers=4, window=5, batch_size=10, writes_per_writer=100, jitter_pct=20.0, seed=3,
                         thresholds=(2, 2, 4), page_size=8, mode="kv", key_range=64)
    return run_scenario(cfg)


def test_timeline_is_monotone_and_p1_leads(busy):
    prev = (-1.0, 0, 0)
    for t, p1, p2 in busy.timeline:
        assert t > prev[0] and p1 >= prev[1] and p2 >= prev[2]
        assert p1 >= p2
        prev = (t, p1, p2)
    assert busy.final_counts() == (40, 40)
    assert busy.summary["verdicts"] == 0 and not busy.truncated


def test_op_rows_are_ordered_by_phase(busy):
    for r in busy.ops:
        issued, p1, p2 = r[4], r[5], r[6]
        assert r[7] == "committed"
        assert issued <= p1 <= p2


def test_wedgechain_masks_cloud_latency():
    m = run_scenario(ScenarioConfig(writers=4, window=50, batch_size=100, writes_per_writer=5000, lsm_enabled=False,
                                    trace=False))
    assert m.final_counts() == (200, 200)
    assert statistics.median(m.latencies(1)) < 10
    assert statistics.median(m.latencies(2)) >= 61


def test_baselines_pay_the_cloud_round_trip():
    base = dict(writers=2, window=5, batch_size=10, writes_per_writer=50, site_cloud="V")
    cloud_only = run_scenario(ScenarioConfig(baseline="cloud_only", **base))
    edge_base = run_scenario(ScenarioConfig(baseline="edge_baseline", **base))
    co = statistics.median(cloud_only.latencies(1))
    eb = statistics.median(edge_base.latencies(1))
    assert co == pytest.approx(61.0, rel=0.2)
    assert eb > co
    # single-phase: the acknowledgement already carries the proof
    assert cloud_only.latencies(1) == cloud_only.latencies(2)
    assert edge_base.latencies(1) == edge_base.latencies(2)
    assert cloud_only.final_counts() == (10, 10)


def test_cloud_processing_delays_phase_two_only():
    base = dict(writers=1, window=10, batch_size=10, writes_per_writer=100)
    fast = run_scenario(ScenarioConfig(**base))
    slow = run_scenario(ScenarioConfig(processing_cloud=40.0, **base))
    assert fast.latencies(1) == slow.latencies(1)
    assert statistics.median(slow.latencies(2)) > statistics.median(fast.latencies(2)) + 39


def test_faulty_edge_is_named_in_verdicts():
    cfg = parse_config("batch_size = 1\nwriters = 2\nworkload.writes_per_writer = 3\nfault.edge0.behavior = equivocate")
    m = run_scenario(cfg)
    assert m.verdicts and all(v[1] == str(edge(0)) for v in m.verdicts)


def test_same_seed_same_csv_bytes():
    cfg = dict(writers=3, readers=2, window=2, batch_size=3, writes_per_writer=12, jitter_pct=25.0, seed=5, mode="kv",
               key_range=16, reads_per_reader=6, thresholds=(2, 2, 4), page_size=4)
    a = csv_files(run_scenario(ScenarioConfig(**cfg)))
    b = csv_files(run_scenario(ScenarioConfig(**cfg)))
    assert a == b
    c = csv_files(run_scenario(ScenarioConfig(**{**cfg, "seed": 6})))
    assert a["messages.csv"] != c["messages.csv"]


def test_limit_flags_truncation():
    m = run_scenario(ScenarioConfig(writers=1, batch_size=1, writes_per_writer=50, limit_ms=100.0))
    assert m.truncated and m.summary["truncated"] == 1
    assert m.final_counts()[1] < 50
