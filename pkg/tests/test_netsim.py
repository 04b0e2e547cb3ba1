import random

import pytest

from mpclab import ConfigInvalid, InvariantViolation, UnknownProtocol
from mpclab.adversary import AdversarySpec
from mpclab.netsim import (
    Budget,
    CommMetrics,
    Message,
    Network,
    Outcome,
    ProtocolOutcome,
    RunConfig,
    Streams,
    enforce_budget,
    execute,
    register,
    run_protocol,
)


def test_all_to_all_small_vector():
    cfg = RunConfig(n=4, h=4)
    result, metrics = run_protocol(cfg, "all_to_all", ["00", "01", "10", "11"])
    assert [o.value for o in result] == ["00011011"] * 4
    assert not result.aborted()
    assert metrics.total_bits > 0


def test_determinism_same_seed():
    cfg = RunConfig(n=12, h=6, seed=7)
    inputs = ["0101"] * 12
    r1, m1 = run_protocol(cfg, "committee", inputs)
    r2, m2 = run_protocol(cfg, "committee", inputs)
    assert m1.bits_sent() == m2.bits_sent()
    assert [o.value for o in r1] == [o.value for o in r2]


def test_streams_independent_of_party_count():
    a = Streams(99)
    b = Streams(99)
    assert a.party(3).random() == b.party(3).random()
    assert Streams(99).party(3).random() != Streams(100).party(3).random()
    assert Streams(5).derived(3).random() != Streams(5).derived(4).random()


def test_budget_accepts_scheduled_and_garbage():
    budget = Budget()
    budget.allow("x", 4)
    assert enforce_budget(1, Message(0, 1, 0, "x", "1111"), budget) == "accept"
    budget.reset()
    budget.allow("x", 4)
    assert enforce_budget(1, Message(0, 1, 0, "x", "0101"), budget) == "accept"


def test_budget_rejects_tenfold_and_unscheduled():
    budget = Budget()
    budget.allow("x", 4)
    assert enforce_budget(1, Message(0, 1, 0, "x", "1" * 40), budget) == "abort"
    assert enforce_budget(1, Message(0, 1, 0, "y", "1"), budget) == "abort"
    with pytest.raises(ValueError):
        enforce_budget(2, Message(0, 1, 0, "x", "1"), budget)


def test_synchrony_and_flood_abort():
    net = Network(3, Streams(0))
    net.send(0, 1, "x", "11")
    assert net.received(1, "x") == []
    net.expect("x", 2)
    net.step()
    assert [m.payload for m in net.received(1, "x")] == ["11"]
    net.send(0, 2, "x", "1" * 20)
    net.expect("x", 2)
    net.step()
    assert not net.active(2)
    assert net.abort_reason[2] == "flood"


def test_aborted_party_is_silent():
    net = Network(3, Streams(0))
    net.abort(0, "test")
    net.send(0, 1, "x", "1")
    net.multicast(0, [1, 2], "x", "1")
    net.expect("x", 1)
    net.step()
    assert net.received(1, "x") == []
    assert net.metrics.total_bits == 0


def test_self_message_rejected():
    net = Network(2, Streams(0))
    with pytest.raises(InvariantViolation):
        net.send(1, 1, "x", "1")


def test_metrics_totals_and_locality():
    m = CommMetrics(4, corrupted={3})
    m.record(0, 1, 0, 5)
    m.record(1, 0, 0, 2)
    m.record(3, 2, 1, 7)
    m.record_many([0, 0], [2, 3], 1, [1, 0])
    assert m.total_bits == 8
    assert m.adversary_bits == 7
    assert m.observed_bits == 15
    assert m.rounds == 2
    assert m.localities().tolist() == [2, 1, 2, 1]
    assert m.bits_sent()[(0, 1, 0)] == 5
    assert (0, 3, 1) not in m.bits_sent()


def test_metric_soundness_against_message_log():
    cfg = RunConfig(n=6, h=6)
    result, net = execute(cfg, "broadcast", ["101"] * 6)
    assert net.metrics.total_bits == sum(int(v) for v in net.metrics.bits_sent().values())
    # 5 sends of 3 bits, then 20 echoes of 3 bits
    assert net.metrics.total_bits == 5 * 3 + 20 * 3
    assert net.metrics.max_locality <= cfg.n - 1


def test_twin_reports_honest_traffic():
    adv = AdversarySpec({0}, "flooder", {"factor": 4})
    cfg = RunConfig(n=5, h=4, adversary=adv)
    result, metrics = run_protocol(cfg, "broadcast", ["101"] * 5)
    assert metrics.total_bits == 48
    assert metrics.observed is not None
    # the flooded receivers abort before echoing; only the sender's 4x traffic is observed
    assert metrics.observed.adversary_bits == 4 * 12
    assert metrics.observed.total_bits == 0
    assert {result[i].reason for i in range(1, 5)} == {"flood"}


def test_run_config_validation():
    with pytest.raises(ConfigInvalid):
        RunConfig(n=4, h=5)
    with pytest.raises(ConfigInvalid):
        RunConfig(n=4, h=2, alpha=0.5)
    with pytest.raises(ConfigInvalid):
        RunConfig(n=4, h=2, lam=0)
    with pytest.raises(ConfigInvalid):
        RunConfig(n=4, h=3, adversary=AdversarySpec({0, 1}))
    with pytest.raises(ConfigInvalid):
        run_protocol(RunConfig(n=4, h=2), "broadcast", ["1"] * 3)


def test_unknown_protocol():
    with pytest.raises(UnknownProtocol):
        run_protocol(RunConfig(n=2, h=2), "no_such_protocol", ["1", "1"])


@register("test_overrun", max_rounds=lambda c: 1)
def _overrun(net, config, inputs, **options):
    net.skip(2)
    return ProtocolOutcome([Outcome.output("") for _ in range(config.n)])


@register("test_unfinished", max_rounds=lambda c: 1)
def _unfinished(net, config, inputs, **options):
    net.step()
    return ProtocolOutcome([Outcome.output("1")] + [None] * (config.n - 1))


def test_round_bound_enforced():
    with pytest.raises(InvariantViolation):
        execute(RunConfig(n=2, h=2), "test_overrun", ["", ""])


def test_unfinished_parties_time_out():
    result, _ = execute(RunConfig(n=3, h=3), "test_unfinished", ["", "", ""])
    assert result[0].value == "1"
    assert [result[i].reason for i in (1, 2)] == ["timeout", "timeout"]


def test_equivocating_sender_causes_aborts():
    hits = 0
    for seed in range(200):
        rng = random.Random(seed)
        corrupted = {0} | set(rng.sample(range(1, 8), 3))
        cfg = RunConfig(n=8, h=4, seed=seed, adversary=AdversarySpec(corrupted, "equivocator"))
        result, _ = run_protocol(cfg, "broadcast", ["1011"] * 8, twin=False)
        hits += any(result[i].aborted for i in range(8) if i not in corrupted)
    assert hits / 200 >= 0.99
