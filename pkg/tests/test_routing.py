import math

import numpy as np
import pytest

from mpclab import ConfigInvalid, GraphMissing
from mpclab.adversary import AdversarySpec, Strategy
from mpclab.netsim import Network, RunConfig, Streams, randbits, run_protocol
from mpclab.routing import degree_target, gossip, rumor_bits, sparse_network


def test_degree_arithmetic():
    assert degree_target(RunConfig(n=256, h=64, alpha=2)) == pytest.approx(64)


def test_degree_cap_in_non_aborted_runs():
    for seed in range(10):
        cfg = RunConfig(n=256, h=64, alpha=2, seed=seed)
        result, _ = run_protocol(cfg, "sparse_network", [""] * 256)
        graph = result.details["graph"]
        for i in range(256):
            if not result[i].aborted:
                assert graph.degree(i) <= 192
                assert graph.incoming[i].size <= 128


def test_honest_abort_rate():
    aborted = 0
    for seed in range(200):
        cfg = RunConfig(n=256, h=256, alpha=4, seed=seed)
        result, _ = run_protocol(cfg, "sparse_network", [""] * 256)
        aborted += bool(result.aborted())
    assert aborted / 200 <= 0.01


def test_needs_more_honest_than_log_n():
    with pytest.raises(ConfigInvalid):
        run_protocol(RunConfig(n=256, h=8), "sparse_network", [""] * 256)


def test_gossip_needs_graph():
    with pytest.raises(GraphMissing):
        gossip(Network(4, Streams(0)), None, ["1", None, None, None])


def test_single_origin_reaches_everyone():
    n = 64
    cfg = RunConfig(n=n, h=32, alpha=2, seed=3)
    inputs = ["1011"] + [""] * (n - 1)
    result, metrics = run_protocol(cfg, "gossip", inputs)
    views = result.details["views"]
    assert all(v == {0: "1011"} for v in views)
    assert result.details["gossip_rounds"] <= n


def test_forwarding_budget_and_termination():
    n = 96
    cfg = RunConfig(n=n, h=48, alpha=2, seed=1)
    rng = Streams(1).derived(0)
    inputs = [randbits(rng, 8) if i % 3 == 0 else "" for i in range(n)]
    k = sum(1 for x in inputs if x)
    net = Network(n, Streams(1))
    graph = sparse_network(net, cfg)
    res = gossip(net, graph, [x or None for x in inputs])
    assert res.rounds <= n
    for i in range(n):
        assert res.messages_sent[i] <= (k + 1) * graph.degree(i)
    assert all(len(v) == k for v in res.views)
    # every forwarded rumor is origin index + length field + value
    assert net.metrics.total_bits >= k * n * rumor_bits(n, "0" * 8) // 2


class ForgeOrigin5(Strategy):
    """Every corrupted party tells its neighbours a wrong value for origin 5 in the first round."""

    def gossip_inject(self, engine):
        if engine.round_index != 0:
            return []
        fake = "1" * len(engine.inputs[5])
        out = []
        for c in sorted(self.corrupted):
            for r in engine.graph.neighbors[c].tolist():
                out.append((c, r, 5, fake))
        return out


def test_conflicting_origin_never_splits_honest_outputs():
    from mpclab import adversary

    adversary.CATALOG["_forge5"] = type("Forge5", (ForgeOrigin5,), {"name": "_forge5"})
    try:
        n = 64
        for seed in range(40):
            corrupted = set(AdversarySpec.random(n, 40, seed=seed, keep_honest=(5,)).corrupted)
            adv = AdversarySpec(corrupted, "_forge5")
            cfg = RunConfig(n=n, h=40, alpha=2, seed=seed, adversary=adv)
            inputs = ["0000"] * n
            result, _ = run_protocol(cfg, "gossip", inputs, twin=False)
            views = result.details["views"]
            held = {views[i].get(5) for i in range(n)
                    if i not in corrupted and not result[i].aborted and views[i] is not None}
            assert len(held) <= 1
            assert held <= {"0000"}
    finally:
        del adversary.CATALOG["_forge5"]


def test_honest_subgraph_connected():
    connected = 0
    for seed in range(20):
        adv = AdversarySpec.random(512, 128, "honest_but_silent", seed=seed)
        cfg = RunConfig(n=512, h=128, alpha=4, seed=seed, adversary=adv)
        result, _ = run_protocol(cfg, "sparse_network", [""] * 512, twin=False)
        honest = [i for i in range(512) if i not in adv.corrupted]
        connected += result.details["graph"].honest_connected(honest)
    assert connected == 20


def test_gossip_scaling_slope():
    ns = [128, 256, 512]
    totals = []
    for n in ns:
        rng = Streams(n).derived(0)
        inputs = [randbits(rng, 8) for _ in range(n)]
        _, metrics = run_protocol(RunConfig(n=n, h=n // 2, alpha=2, seed=n), "gossip", inputs)
        totals.append(metrics.total_bits)
    slope = np.polyfit(np.log(ns), np.log(totals), 1)[0]
    assert 1.7 <= slope <= 2.3
