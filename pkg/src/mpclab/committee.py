"""Committee self-election, on the clique and over the gossip network.

Each party flips a biased coin; winners announce themselves.  A party that
hears of too many winners (at least ``2pn``, not counting itself) aborts,
which caps what a stuffing adversary can achieve.  Electees that know about
each other then fingerprint-compare their member lists.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .broadcast import pairwise_equality
from .errors import GraphMissing
from .netsim import Outcome, ProtocolOutcome, RunConfig, register
from .routing import gossip, serialize_members, sparse_network

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommitteeView:
    owner: int
    members: tuple[int, ...]
    elected: bool

    def serialize(self, n: int) -> str:
        return serialize_members(n, self.members)


def election_probability(config: RunConfig) -> float:
    return min(1.0, config.alpha * config.log_n / config.h)


def local_election_probability(config: RunConfig) -> float:
    return min(1.0, config.alpha * config.log_n / math.sqrt(config.h))


def _coins(net, p: float) -> list[bool]:
    coins = []
    for i in range(net.n):
        b = net.rng(i).random() < p
        if net.is_corrupted(i) and net.strategy is not None:
            b = bool(net.strategy.coin(i, b))
        coins.append(b)
    return coins


def _finish(net, config: RunConfig, p: float, coins, heard: dict[int, set[int]]) -> list[CommitteeView | None]:
    """Threshold check, then equality tests among mutually recognised electees."""
    n = net.n
    views: list[CommitteeView | None] = [None] * n
    for i in range(n):
        if not net.active(i) and not net.is_corrupted(i):
            continue
        others = heard.get(i, set())
        if not net.is_corrupted(i) and len(others) >= 2 * p * n:
            net.abort(i, "threshold")
            continue
        members = set(others)
        if coins[i]:
            members.add(i)
        views[i] = CommitteeView(i, tuple(sorted(members)), coins[i])
    electees = [i for i in range(n) if coins[i] and views[i] is not None]
    pairs = [(a, b) for k, a in enumerate(electees) for b in electees[k + 1 :]
             if b in heard.get(a, ()) and a in heard.get(b, ())]
    strings = {i: views[i].serialize(n) for i in electees}
    failed = pairwise_equality(net, config.lam, pairs, strings)
    for i in failed:
        net.abort(i, "equality-fail")
        views[i] = None
    return views


def committee_elect(net, config: RunConfig) -> list[CommitteeView | None]:
    """Clique election: coin, 1-bit announcement to everyone, threshold, equality (3 rounds)."""
    p = election_probability(config)
    coins = _coins(net, p)
    for i in range(net.n):
        if coins[i]:
            net.multicast(i, range(net.n), "elect", "1")
    net.expect("elect", 1)
    net.step()
    heard = {i: {m.sender for m in net.received(i, "elect") if m.payload == "1"} for i in range(net.n)}
    return _finish(net, config, p, coins, heard)


def local_committee_elect(net, config: RunConfig, graph) -> list[CommitteeView | None]:
    """Election whose announcements travel by responsible gossip over ``graph``."""
    if graph is None:
        raise GraphMissing("local committee election needs the routing graph")
    p = local_election_probability(config)
    if p >= 1.0:
        logger.warning("local election bias clipped to 1 at n=%d, h=%d: everyone is elected", config.n, config.h)
    coins = _coins(net, p)
    res = gossip(net, graph, ["1" if b else None for b in coins], warn=config.warn, max_value_bits=1)
    heard = {}
    for i, view in enumerate(res.views):
        if view is not None:
            heard[i] = {o for o, v in view.items() if o != i and v == "1"}
    return _finish(net, config, p, coins, heard)


def _outcomes(net, views) -> list[Outcome]:
    outs = []
    for i, v in enumerate(views):
        if net.is_corrupted(i):
            outs.append(Outcome.abort("corrupted"))
        elif v is None or not net.active(i):
            outs.append(Outcome.abort(net.abort_reason.get(i, "abort")))
        else:
            outs.append(Outcome.output(v.serialize(net.n)))
    return outs


@register("committee", max_rounds=lambda c: 3, tags=("elect",))
def run_committee(net, config: RunConfig, inputs, **options):
    """Clique committee election; parties output their member list."""
    views = committee_elect(net, config)
    return ProtocolOutcome(_outcomes(net, views), {"views": views, "p": election_probability(config)})


@register("local_committee", max_rounds=lambda c: 3 + c.n, tags=("hop", "rumor"))
def run_local_committee(net, config: RunConfig, inputs, **options):
    """Sparse network, then committee election announced by gossip."""
    graph = sparse_network(net, config)
    views = local_committee_elect(net, config, graph)
    return ProtocolOutcome(_outcomes(net, views), {"views": views, "graph": graph,
                                                  "p": local_election_probability(config)})


__all__ = ["CommitteeView", "committee_elect", "local_committee_elect", "election_probability",
           "local_election_probability"]
