import math

import numpy as np
import pytest

from mpclab import GraphMissing
from mpclab.adversary import AdversarySpec
from mpclab.committee import _coins, election_probability, local_committee_elect, local_election_probability
from mpclab.netsim import Network, RunConfig, Streams, run_protocol


def committee_views(result):
    return result.details["views"]


def test_full_election_when_bias_clips():
    cfg = RunConfig(n=4, h=2, alpha=1)
    assert election_probability(cfg) == 1.0
    result, _ = run_protocol(cfg, "committee", ["0"] * 4)
    assert not result.aborted()
    assert all(v.members == (0, 1, 2, 3) for v in committee_views(result))


def test_bias_and_threshold_arithmetic():
    cfg = RunConfig(n=256, h=128, alpha=2)
    p = election_probability(cfg)
    assert p == pytest.approx(0.125)
    assert p * 256 == pytest.approx(32)
    assert 2 * p * 256 == pytest.approx(64)


def test_local_bias_clipping_examples():
    assert local_election_probability(RunConfig(n=256, h=64, alpha=2)) == 1.0
    assert local_election_probability(RunConfig(n=1024, h=256, alpha=2)) == 1.0
    assert local_election_probability(RunConfig(n=4096, h=64, alpha=1)) == 1.0
    assert local_election_probability(RunConfig(n=4096, h=1024, alpha=1)) == pytest.approx(0.375)


def test_local_expected_committee_size():
    cfg = RunConfig(n=4096, h=1024, alpha=1)
    p = local_election_probability(cfg)
    sizes = [sum(_coins(Network(4096, Streams(seed)), p)) for seed in range(200)]
    assert abs(np.mean(sizes) / 1536 - 1) < 0.05
    assert max(sizes) < 2 * p * 4096


def test_honest_views_agree_and_respect_bound():
    for seed in range(30):
        cfg = RunConfig(n=128, h=64, alpha=2, seed=seed)
        result, _ = run_protocol(cfg, "committee", ["0"] * 128)
        p = election_probability(cfg)
        views = committee_views(result)
        if result.aborted():
            continue
        electees = [v for v in views if v.elected]
        assert len({v.members for v in electees}) == 1
        assert all(len(v.members) < 2 * p * 128 for v in views)
        assert len(electees[0].members) <= 2 * 2 * 128 * math.log2(128) / 64


def test_committee_stuffing_hits_threshold():
    # alpha = 2 gives p = 0.25 and threshold 2pn = 128 < 192 corrupted announcements
    for seed in range(5):
        adv = AdversarySpec.random(256, 64, "committee_stuffer", seed=seed)
        cfg = RunConfig(n=256, h=64, alpha=2, seed=seed, adversary=adv)
        result, _ = run_protocol(cfg, "committee", ["0"] * 256, twin=False)
        honest = [i for i in range(256) if i not in adv.corrupted]
        assert all(result[i].reason == "threshold" for i in honest)


def test_local_committee_requires_graph():
    cfg = RunConfig(n=16, h=12)
    with pytest.raises(GraphMissing):
        local_committee_elect(Network(16, Streams(0)), cfg, None)


def test_local_committee_agreement():
    for seed in range(5):
        cfg = RunConfig(n=256, h=128, alpha=1, seed=seed)
        result, _ = run_protocol(cfg, "local_committee", ["0"] * 256)
        views = committee_views(result)
        members = {v.members for v in views if v is not None and v.elected}
        assert len(members) <= 1
        if not result.aborted():
            honest_electees = len(next(iter(members)))
            assert honest_electees >= 0.5 * 1 * math.sqrt(128) * math.log2(256)
