"""The strawman sparse broadcast and the isolation attack against it.

The strawman floods the sender's value over a random graph whose parties
each pick ``d_target`` next hops, with no conflict detection: the first
value heard wins and nobody aborts.  A party that hears nothing outputs
all zeros.  It is the canonical victim for demonstrating that too small a
neighbourhood lets a coalition impersonate the whole network to one party.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from ..netsim import Outcome, ProtocolOutcome, RunConfig, Streams, execute, randbits, register
from ..routing import gossip, sparse_network
from . import AdversarySpec


@register("strawman", max_rounds=lambda c: 1 + c.n, tags=("hop", "rumor"))
def run_strawman(net, config: RunConfig, inputs, d_target: int = 3, sender: int = 0, **options):
    """Flood the sender's input over a ``d_target``-out random graph, first value heard wins."""
    graph = sparse_network(net, config, d_override=d_target, check_h=False, threshold=False)
    x = inputs[sender]
    res = gossip(net, graph, [x if i == sender else None for i in range(config.n)], responsible=False)
    default = "0" * len(x)
    outs = []
    for i, view in enumerate(res.views):
        if net.is_corrupted(i):
            outs.append(Outcome.abort("corrupted"))
        else:
            outs.append(Outcome.output(view.get(sender, default) if view is not None else default))
    return ProtocolOutcome(outs, {"graph": graph, "views": res.views, "sender": sender})


@dataclass(frozen=True)
class AttackResult:
    success: bool
    isolated: bool
    victim: int
    wrong: tuple[int, ...]


def isolation_setup(n: int, h: int, seed: int, sender: int = 0) -> tuple[int, frozenset[int]]:
    """Pick the victim and the corruption set: everyone except the victim, the sender and h-2 others."""
    rng = Streams(seed).derived(4)
    victim = rng.choice([i for i in range(n) if i != sender])
    rest = [i for i in range(n) if i not in (sender, victim)]
    keep = set(rng.sample(rest, max(0, h - 2))) | {sender, victim}
    return victim, frozenset(i for i in range(n) if i not in keep)


def isolation_attack(protocol: str, config: RunConfig, d_target: int | None = None, sender: int = 0,
                     width: int = 8) -> AttackResult:
    """One attack run; success means some honest party ends with a wrong value and no abort.

    ``protocol`` is ``"strawman"`` (uses ``d_target``) or ``"gossip"``
    (responsible gossip with the degree set by ``config.alpha``).
    """
    victim, corrupted = isolation_setup(config.n, config.h, config.seed, sender)
    spec = AdversarySpec(corrupted, "isolation_attacker", {"victim": victim, "sender": sender})
    cfg = replace(config, adversary=spec)
    x = "1" + randbits(Streams(config.seed).derived(5), width - 1)
    inputs = [x if i == sender else "" for i in range(config.n)]
    options = {"d_target": d_target, "sender": sender} if protocol == "strawman" else {}
    result, net = execute(cfg, protocol, inputs, **options)
    honest = [i for i in range(config.n) if i not in corrupted]
    wrong = []
    views = result.details.get("views")
    for i in honest:
        if result[i].aborted:
            continue
        if protocol == "strawman":
            got = result[i].value
        else:
            got = (views[i] or {}).get(sender) if views is not None else None
        if got != x:
            wrong.append(i)
    graph = result.details.get("graph")
    isolated = graph is not None and not (set(graph.neighbors[victim].tolist()) & set(honest))
    return AttackResult(bool(wrong), isolated, victim, tuple(wrong))
