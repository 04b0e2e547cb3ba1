import pytest

from mpclab import ConfigInvalid, StrategyProtocolMismatch
from mpclab.adversary import CATALOG, AdversarySpec, flip, strategy_catalog
from mpclab.adversary.strawman import isolation_attack, isolation_setup
from mpclab.netsim import RunConfig, run_protocol
from mpclab.primitives import wilson_interval


def test_catalog_names():
    assert strategy_catalog() == sorted([
        "honest_but_silent", "equivocator", "flooder", "committee_stuffer", "pk_forker", "output_forker",
        "input_substituter", "isolation_attacker"])
    assert set(CATALOG) == set(strategy_catalog())


def test_flip():
    assert flip("0110") == "1001"
    assert flip("0110", 0) == "1110"
    assert flip("0110", 5) == "0010"
    assert flip("") == ""


def test_unknown_strategy_rejected():
    with pytest.raises(ConfigInvalid):
        AdversarySpec({1}, "no_such_strategy")


@pytest.mark.parametrize("strategy,protocol", [
    ("committee_stuffer", "broadcast"),
    ("pk_forker", "committee"),
    ("output_forker", "all_to_all"),
])
def test_strategy_protocol_mismatch(strategy, protocol):
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({1, 2, 3, 4}, strategy))
    with pytest.raises(StrategyProtocolMismatch):
        run_protocol(cfg, protocol, ["0101"] * 8)


def test_equivocator_needs_a_known_step():
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({1}, "equivocator", {"target_step": "nope"}))
    with pytest.raises(StrategyProtocolMismatch):
        run_protocol(cfg, "broadcast", ["0101"] * 8)


def test_flooder_factor_validated():
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({1}, "flooder", {"factor": 1}))
    with pytest.raises(ConfigInvalid):
        run_protocol(cfg, "broadcast", ["0101"] * 8)


def test_withheld_echoes_cause_abort_not_disagreement():
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({4, 5, 6, 7}, "honest_but_silent"))
    result, _ = run_protocol(cfg, "broadcast", ["1011"] * 8)
    assert result[0].value == "1011"
    assert all(result[i].reason == "missing" for i in (1, 2, 3))


def test_silent_sender_makes_everyone_abort():
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({0, 5, 6, 7}, "honest_but_silent"))
    result, _ = run_protocol(cfg, "broadcast", ["1011"] * 8)
    assert all(result[i].aborted for i in (1, 2, 3, 4))


def test_input_substituter_changes_corrupted_inputs_only():
    cfg = RunConfig(n=8, h=4, seed=3, adversary=AdversarySpec({1, 3, 5, 7}, "input_substituter"))
    xs = ["0" * 16] * 8
    result, _ = run_protocol(cfg, "all_to_all", xs)
    out = result[0].value
    chunks = [out[16 * i:16 * (i + 1)] for i in range(8)]
    assert all(chunks[i] == "0" * 16 for i in (0, 2, 4, 6))
    assert any(chunks[i] != "0" * 16 for i in (1, 3, 5, 7))
    assert len({result[i].value for i in (0, 2, 4, 6)}) == 1


def test_isolation_setup_keeps_victim_and_sender_honest():
    for seed in range(50):
        victim, corrupted = isolation_setup(64, 8, seed)
        assert victim != 0
        assert victim not in corrupted and 0 not in corrupted
        assert len(corrupted) == 64 - 8


def test_isolation_victim_must_be_honest():
    cfg = RunConfig(n=8, h=4, adversary=AdversarySpec({1, 2, 3, 4}, "isolation_attacker", {"victim": 2}))
    with pytest.raises(ConfigInvalid):
        run_protocol(cfg, "broadcast", ["01"] * 8)


def test_isolation_always_succeeds_with_no_out_edges():
    for seed in range(50):
        cfg = RunConfig(n=64, h=8, alpha=1, seed=seed)
        assert isolation_attack("strawman", cfg, d_target=0).success


def test_strawman_success_does_not_grow_with_degree():
    seeds = 60
    rates = []
    for d in (1, 2, 4, 8, 16):
        wins = sum(isolation_attack("strawman", RunConfig(n=64, h=8, alpha=1, seed=s), d_target=d).success
                   for s in range(seeds))
        rates.append(wilson_interval(wins, seeds))
    for (lo_k, hi_k), (lo_next, _) in zip(rates, rates[1:]):
        assert lo_next <= hi_k


def test_responsible_gossip_resists_isolation():
    wins = sum(isolation_attack("gossip", RunConfig(n=64, h=16, alpha=4, seed=s)).success for s in range(20))
    assert wins == 0
