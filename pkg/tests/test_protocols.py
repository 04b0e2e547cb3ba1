import math

import numpy as np
import pytest

from mpclab import ConfigInvalid
from mpclab.adversary import AdversarySpec
from mpclab.committee import local_election_probability
from mpclab.idealfunc import make_function
from mpclab.netsim import Network, Outcome, ProtocolOutcome, RunConfig, Streams, randbits
from mpclab.protocols import check_consistency, run_mpc, sample_subsets, subset_size


def random_inputs(n, width, seed):
    rng = Streams(seed).derived(99)
    return [randbits(rng, width) for _ in range(n)]


def test_committee_xor_of_ones_is_zero():
    cfg = RunConfig(n=64, h=32, alpha=2, seed=0)
    report = run_mpc("mpc_committee", cfg, ["1"] * 64)
    assert report.consistency_ok
    assert report.aborted_honest() == 0
    assert {o.value for o in report.outcomes} == {"0"}


def test_committee_matches_evaluator_on_random_inputs():
    for seed in range(5):
        cfg = RunConfig(n=32, h=16, alpha=2, seed=seed)
        inputs = random_inputs(32, 8, seed)
        report = run_mpc("mpc_committee", cfg, inputs, fname="sum")
        want = make_function("sum", 32, 8)(inputs)
        assert all(o.value == want for o in report.outcomes)


@pytest.mark.parametrize("fname", ["identity", "rotate"])
def test_multi_output_matches_evaluator(fname):
    cfg = RunConfig(n=16, h=8, alpha=4, seed=3)
    inputs = random_inputs(16, 8, 3)
    report = run_mpc("mpc_multi_output", cfg, inputs, fname=fname)
    want = make_function(fname, 16, 8)(inputs)
    assert [o.value for o in report.outcomes] == want
    assert report.consistency_ok


def test_multi_output_rejects_single_output_function():
    with pytest.raises(ConfigInvalid):
        run_mpc("mpc_multi_output", RunConfig(n=8, h=4, alpha=4), ["0"] * 8, fname="xor")


def test_multi_output_tampered_forward_aborts_target():
    cfg = RunConfig(n=16, h=8, alpha=4, seed=1,
                    adversary=AdversarySpec({0, 1, 2, 4, 5, 6, 7, 8}, "output_forker", {"target": 3, "bit": 5}))
    inputs = random_inputs(16, 8, 1)
    report = run_mpc("mpc_multi_output", cfg, inputs, fname="rotate")
    assert report.details["designated"] == 0
    assert report.outcomes[3].aborted and report.outcomes[3].reason == "sig-fail"
    want = make_function("rotate", 16, 8)(inputs)
    for i in (9, 10, 11, 12, 13, 14, 15):
        assert report.outcomes[i].value == want[i]
    assert report.consistency_ok


def test_gossip_mpc_locality_bound():
    cfg = RunConfig(n=256, h=64, alpha=2, seed=0)
    report = run_mpc("mpc_gossip", cfg, random_inputs(256, 4, 0), fname="xor")
    d = 2 * 256 * math.log2(256) / 64
    assert report.max_locality <= 3 * d
    assert report.consistency_ok


def test_gossip_mpc_all_honest_never_aborts():
    for seed in range(200):
        cfg = RunConfig(n=64, h=32, alpha=4, seed=seed)
        report = run_mpc("mpc_gossip", cfg, random_inputs(64, 4, seed), twin=False)
        assert report.aborted_honest() == 0, (seed, report.abort_reasons)
        assert report.consistency_ok


def test_subset_size_arithmetic():
    assert subset_size(RunConfig(n=4096, h=1024, alpha=1)) == 128
    assert subset_size(RunConfig(n=16, h=4, alpha=1)) == 8
    assert subset_size(RunConfig(n=9, h=1, alpha=1)) == 8


def test_subsets_cover_every_party():
    # p clips to one at these sizes, so the committee is everybody
    n, h = 1024, 256
    cfg = RunConfig(n=n, h=h, alpha=4)
    assert local_election_probability(cfg) == 1.0
    size = subset_size(cfg)
    for seed in range(200):
        honest = set(Streams(seed).derived(3).sample(range(n), h))
        net = Network(n, Streams(seed))
        subsets = sample_subsets(net, sorted(honest), size)
        assert all(len(s) == size and c not in s for c, s in subsets.items())
        covered = np.zeros(n, dtype=bool)
        for s in subsets.values():
            covered[s] = True
        covered[list(honest)] = True
        assert covered.all(), seed


def test_tradeoff_end_to_end():
    cfg = RunConfig(n=128, h=64, alpha=1, seed=2,
                    adversary=AdversarySpec.random(128, 64, "honest_but_silent", seed=2))
    inputs = random_inputs(128, 4, 2)
    report = run_mpc("mpc_local_tradeoff", cfg, inputs, fname="xor")
    assert report.consistency_ok
    served = report.details["served_by"]
    corrupted = cfg.corrupted
    for i, o in enumerate(report.outcomes):
        if i in corrupted or o.aborted:
            continue
        assert served[i] or i in report.details["committee"]


def test_tradeoff_rejects_small_h():
    with pytest.raises(ConfigInvalid):
        run_mpc("mpc_local_tradeoff", RunConfig(n=64, h=4, alpha=1), ["0"] * 64)


def test_run_mpc_rejects_non_mpc_protocol():
    with pytest.raises(ConfigInvalid):
        run_mpc("broadcast", RunConfig(n=4, h=2), ["0"] * 4)


def test_consistency_checker_flags_disagreement():
    cfg = RunConfig(n=16, h=8, alpha=2, seed=0)
    inputs = random_inputs(16, 4, 0)
    report = run_mpc("mpc_committee", cfg, inputs)
    result = ProtocolOutcome(list(report.outcomes), report.details)
    assert check_consistency(result, inputs) == []
    result.outcomes[5] = Outcome.output("1" * 4 if report.outcomes[5].value != "1" * 4 else "0" * 4)
    problems = check_consistency(result, inputs)
    assert any("disagreement" in p for p in problems)
    assert any("party 5" in p for p in problems)


def test_input_substitution_keeps_honest_inputs():
    for seed in range(10):
        cfg = RunConfig(n=32, h=16, alpha=2, seed=seed,
                        adversary=AdversarySpec.random(32, 16, "input_substituter", seed=seed))
        inputs = random_inputs(32, 6, seed)
        report = run_mpc("mpc_committee", cfg, inputs, fname="xor")
        assert report.consistency_ok, report.violations
        for b in report.details["boundary"].values():
            for i in range(32):
                if i not in cfg.corrupted:
                    assert b[i] == inputs[i]


def test_forged_public_key_never_yields_wrong_output():
    aborted_runs = 0
    for seed in range(200):
        adv = AdversarySpec.random(32, 16, "pk_forker", seed=seed)
        cfg = RunConfig(n=32, h=16, alpha=2, seed=seed, adversary=adv)
        inputs = random_inputs(32, 4, seed)
        report = run_mpc("mpc_committee", cfg, inputs, twin=False)
        assert report.consistency_ok, (seed, report.violations)
        aborted_runs += report.aborted_honest(adv.corrupted) > 0
    assert aborted_runs > 0


@pytest.mark.parametrize("protocol", ["mpc_committee", "mpc_multi_output", "mpc_gossip", "mpc_local_tradeoff"])
def test_all_honest_runs_rarely_abort_at_alpha_4(protocol):
    runs = aborted = 0
    for n in (64, 128):
        for seed in range(25):
            report = run_mpc(protocol, RunConfig(n=n, h=n // 2, alpha=4, seed=seed), random_inputs(n, 4, seed),
                             twin=False)
            assert report.consistency_ok
            runs += 1
            aborted += report.aborted_honest() > 0
    assert aborted / runs <= 0.01
