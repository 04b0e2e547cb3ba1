"""Broadcast with abort over the complete graph.

Two baselines: single-source broadcast (send, echo, compare) and all-to-all
broadcast whose consistency check is one fingerprint test per pair of
parties on the concatenation of everything a party received.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import primitives
from .netsim import Outcome, ProtocolOutcome, RunConfig, register

logger = logging.getLogger(__name__)

LEN_PREFIX = 16


@dataclass
class BroadcastView:
    """What one receiver saw: the sender's value and the echoes of it."""

    owner: int
    heard: str | None = None
    echoes: dict[int, str | None] = field(default_factory=dict)

    def consistent(self) -> bool:
        return self.heard is not None and all(e == self.heard for e in self.echoes.values())


def length_prefixed(values) -> str:
    """Canonical serialization: each value behind a 16-bit length, in the given order."""
    out = []
    for v in values:
        v = v or ""
        out.append(format(len(v), f"0{LEN_PREFIX}b"))
        out.append(v)
    return "".join(out)


def corrupt_input(net, i: int, x: str) -> str:
    if net.is_corrupted(i) and net.strategy is not None:
        return net.strategy.substitute_input(i, x)
    return x


# ---------------------------------------------------------------------------
# pairwise fingerprint tests


def pairwise_equality(net, lam: int, pairs, strings: dict[int, str]) -> dict[int, list[int]]:
    """Run one equality test per pair (two rounds, all pairs in parallel).

    In each pair ``(a, b)`` with ``a < b`` party ``a`` samples the prime and
    sends prime and residue; ``b`` answers with the 1-bit verdict.  Returns,
    for every honest party that saw a failed test, the peers it failed with.
    Corrupted endpoints may misreport through ``strategy.equality_flag``.
    """
    strategy = net.strategy
    live = [(min(a, b), max(a, b)) for a, b in pairs
            if (net.active(a) or net.is_corrupted(a)) and (net.active(b) or net.is_corrupted(b))]
    verdicts: dict[tuple[int, int], tuple[int, int]] = {}
    src1, dst1, bits1 = [], [], []
    # group identical strings once instead of comparing every pair
    group: dict[str, int] = {}
    gid = {i: group.setdefault(s, len(group)) for i, s in strings.items()}
    width_bits: dict[int, int] = {}
    for a, b in live:
        # a leading 1 keeps leading zeros (and length) significant in the integer encoding
        nn = max(2, len(strings.get(a, "")) + 1)
        if gid.get(a, -1) == gid.get(b, -2) or (a not in gid and b not in gid):
            # equal strings always pass; the prime does not affect the verdict
            if nn not in width_bits:
                width_bits[nn] = primitives.equality_bits(nn, lam)
            flag, bits = 1, width_bits[nn]
        else:
            flag, bits = primitives.equality_test("1" + strings.get(a, ""), "1" + strings.get(b, ""), nn, lam,
                                                  net.rng(a))
        seen_b = flag
        if strategy is not None and net.is_corrupted(a):
            seen_b = strategy.equality_flag(a, b, flag)
        src1.append(a)
        dst1.append(b)
        bits1.append(bits - 1)
        verdicts[(a, b)] = (seen_b, flag)
    net.charge_many(src1, dst1, bits1)
    net.step()
    net.charge_many(dst1, src1, [1] * len(src1))
    net.step()
    failed: dict[int, list[int]] = {}
    for (a, b), (seen_b, flag) in verdicts.items():
        seen_a = seen_b
        if strategy is not None and net.is_corrupted(b):
            seen_a = strategy.equality_flag(b, a, seen_b)
        if not net.is_corrupted(b) and seen_b == 0:
            failed.setdefault(b, []).append(a)
        if not net.is_corrupted(a) and seen_a == 0:
            failed.setdefault(a, []).append(b)
    return failed


def abort_flag_round(net, failed, everyone) -> None:
    """Parties that saw a failure send a 1-bit flag to everybody, then all recipients abort."""
    senders = [i for i in sorted(failed) if net.active(i)]
    everyone = list(everyone)
    for i in senders:
        peers = [j for j in everyone if j != i]
        net.charge_many([i] * len(peers), peers, [1] * len(peers))
    net.step()
    for i in senders:
        net.abort(i, "equality-fail")
    if senders:
        for j in everyone:
            if not net.is_corrupted(j):
                net.abort(j, "abort-flag")


# ---------------------------------------------------------------------------
# single source


def single_source_broadcast(net, sender: int, m: str, parties=None) -> tuple[list[Outcome | None], list[BroadcastView]]:
    """Send, echo among receivers, output iff every echo matches."""
    parties = list(range(net.n)) if parties is None else sorted(parties)
    width = len(m)
    receivers = [j for j in parties if j != sender]
    net.multicast(sender, receivers, "bc", m)
    net.expect("bc", width, senders=lambda r, s: s == sender)
    net.step()
    views = {j: BroadcastView(j) for j in receivers}
    for j in receivers:
        got = net.received(j, "bc")
        if len(got) == 1 and len(got[0].payload) == width:
            views[j].heard = got[0].payload
        elif not net.is_corrupted(j):
            net.abort(j, "missing")
    for j in receivers:
        if views[j].heard is not None:
            net.multicast(j, [k for k in receivers if k != j], "echo", views[j].heard)
    net.expect("echo", width, senders=lambda r, s: s != sender)
    net.step()
    outcomes: list[Outcome | None] = [None] * net.n
    for j in receivers:
        view = views[j]
        view.echoes = {k: None for k in receivers if k != j}
        for msg in net.received(j, "echo"):
            view.echoes[msg.sender] = msg.payload
        if net.is_corrupted(j):
            continue
        if not net.active(j):
            outcomes[j] = Outcome.abort(net.abort_reason[j])
        elif view.consistent():
            outcomes[j] = Outcome.output(view.heard)
        else:
            reason = "missing" if None in view.echoes.values() else "equivocation"
            net.abort(j, reason)
            outcomes[j] = Outcome.abort(reason)
    if not net.is_corrupted(sender):
        outcomes[sender] = Outcome.output(m) if net.active(sender) else Outcome.abort(net.abort_reason[sender])
    return outcomes, [views.get(j, BroadcastView(j, m if j == sender else None)) for j in range(net.n)]


def single_source_bits(n: int, width: int) -> int:
    return (n - 1) * width + (n - 1) * (n - 2) * width


@register("broadcast", max_rounds=lambda c: 2, tags=("bc", "echo"))
def run_single_source(net, config: RunConfig, inputs, sender: int = 0, **options):
    """Single-source broadcast with abort; the sender's input is the message."""
    m = corrupt_input(net, sender, inputs[sender])
    outcomes, views = single_source_broadcast(net, sender, m)
    outcomes = [o if o is not None else Outcome.abort("corrupted") for o in outcomes]
    return ProtocolOutcome(outcomes, {"sender": sender, "views": views, "slots": {i: 0 for i in range(config.n)}})


# ---------------------------------------------------------------------------
# all to all


def all_to_all_broadcast(net, config: RunConfig, inputs, *, succinct: bool = True) -> tuple[list[Outcome | None], dict]:
    n = net.n
    width = len(inputs[0]) if inputs else 0
    xs = [corrupt_input(net, i, x) for i, x in enumerate(inputs)]
    for i in range(n):
        net.multicast(i, range(n), "val", xs[i])
    net.expect("val", width)
    net.step()
    vectors: dict[int, list[str | None]] = {}
    for i in range(n):
        vec: list[str | None] = [None] * n
        vec[i] = xs[i]
        for msg in net.received(i, "val"):
            if len(msg.payload) == width:
                vec[msg.sender] = msg.payload
        vectors[i] = vec
    if succinct:
        strings = {i: length_prefixed(v) for i, v in vectors.items()}
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
        failed = pairwise_equality(net, config.lam, pairs, strings)
    else:
        # the original cubic variant: echo the whole received vector to everyone
        failed = {}
        for i in range(n):
            if net.active(i):
                peers = [j for j in range(n) if j != i]
                net.charge_many([i] * len(peers), peers, [width * n] * len(peers))
        net.step()
        honest = [i for i in range(n) if not net.is_corrupted(i) and net.active(i)]
        for i in honest:
            for j in range(n):
                if j != i and vectors[j] != vectors[i]:
                    failed.setdefault(i, []).append(j)
    if failed:
        if config.abort_flag:
            abort_flag_round(net, failed, range(n))
        else:
            for i in failed:
                net.abort(i, "equality-fail")
    outcomes: list[Outcome | None] = [None] * n
    for i in range(n):
        if net.is_corrupted(i):
            outcomes[i] = Outcome.abort("corrupted")
        elif not net.active(i):
            outcomes[i] = Outcome.abort(net.abort_reason[i])
        else:
            outcomes[i] = Outcome.output("".join(v if v is not None else "0" * width for v in vectors[i]))
    return outcomes, {"vectors": vectors, "failed": failed}


def _a2a_rounds(config: RunConfig) -> int:
    return 4


@register("all_to_all", max_rounds=_a2a_rounds, tags=("val",))
def run_all_to_all(net, config: RunConfig, inputs, succinct: bool = True, **options):
    """All-to-all broadcast with abort, checked by pairwise fingerprints of the received vector."""
    outcomes, details = all_to_all_broadcast(net, config, inputs, succinct=succinct)
    width = len(inputs[0]) if inputs else 0
    details["slots"] = {i: width for i in range(config.n)}
    return ProtocolOutcome(outcomes, details)
