"""Static malicious strategies.

A strategy controls every corrupted party jointly.  The network and the
protocols consult it through a small set of hooks; the defaults of
:class:`Strategy` make corrupted parties behave honestly, so each concrete
strategy overrides only the hooks it needs.  Strategies see every message
queued in the current round (``net.pending``) before emitting their own,
which models a rushing adversary.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigInvalid, StrategyProtocolMismatch
from ..netsim import Message, Streams, randbits


def flip(bits: str, index: int | None = None) -> str:
    """Complement every bit, or only the bit at ``index``."""
    if not bits:
        return bits
    if index is None:
        return bits.translate(str.maketrans("01", "10"))
    index %= len(bits)
    return bits[:index] + ("1" if bits[index] == "0" else "0") + bits[index + 1 :]


class Strategy:
    name = "honest"
    # protocol tags this strategy needs; empty means it fits every protocol
    needs: tuple[str, ...] = ()

    def __init__(self, **params):
        self.params = params
        self.corrupted: frozenset[int] = frozenset()
        self.rng = random.Random(0)
        self.protocol = ""
        self.config = None
        self.net = None

    def setup(self, protocol: str, config, corrupted, rng: random.Random, tags=()) -> "Strategy":
        if self.needs and not set(self.needs) & set(tags):
            raise StrategyProtocolMismatch(f"{self.name} needs one of {self.needs}; {protocol} has {tuple(tags)}")
        self.protocol = protocol
        self.config = config
        self.corrupted = frozenset(corrupted)
        self.rng = rng
        return self

    def bind(self, net) -> None:
        self.net = net

    def honest(self) -> list[int]:
        return [i for i in range(self.config.n) if i not in self.corrupted]

    # -- hooks: point-to-point traffic ----------------------------------------
    def outgoing(self, net, msg: Message) -> list[Message]:
        return [msg]

    def inject(self, net) -> list[Message]:
        return []

    def coin(self, party: int, bit: bool) -> bool:
        return bit

    def substitute_input(self, party: int, x: str) -> str:
        return x

    def equality_flag(self, party: int, peer: int, flag: int) -> int:
        return flag

    # -- hooks: ideal functionalities -----------------------------------------
    def oracle_contribution(self, phase: str, party: int, r):
        return r

    def selective_abort(self, phase: str, honest) -> set[int]:
        return set()

    # -- hooks: routing --------------------------------------------------------
    def hop_targets(self, net, party: int, targets: list[int]) -> tuple[list[int], int]:
        return targets, 1

    def gossip_forwarding(self, engine) -> bool:
        return True

    def gossip_initial(self, engine, party: int, value: str):
        return None

    def gossip_blocked(self, engine):
        return ()

    def gossip_inject(self, engine):
        return ()


class HonestButSilent(Strategy):
    """Corrupted parties never send anything and never contribute."""

    name = "honest_but_silent"

    def outgoing(self, net, msg):
        return []

    def coin(self, party, bit):
        return False

    def equality_flag(self, party, peer, flag):
        return 0

    def oracle_contribution(self, phase, party, r):
        return None

    def hop_targets(self, net, party, targets):
        return [], 1

    def gossip_forwarding(self, engine):
        return False

    def gossip_initial(self, engine, party, value):
        return []


class Equivocator(Strategy):
    """Send a corrupted variant of one protocol step's message to odd-indexed receivers."""

    name = "equivocator"

    def setup(self, protocol, config, corrupted, rng, tags=()):
        super().setup(protocol, config, corrupted, rng, tags)
        step = self.params.get("target_step")
        if step is None:
            step = next((t for t in ("pk", "bc", "val", "elect", "rumor") if t in tags), None)
        if step is None or step not in tags:
            raise StrategyProtocolMismatch(f"{protocol} has no step {step!r}; steps: {tuple(tags)}")
        self.step = step
        return self

    def outgoing(self, net, msg):
        if msg.tag == self.step and msg.receiver % 2 == 1:
            return [Message(msg.sender, msg.receiver, msg.round, msg.tag, flip(msg.payload, 0))]
        return [msg]

    def gossip_initial(self, engine, party, value):
        if engine.tag != self.step:
            return None
        return [(r, value if r % 2 == 0 else flip(value, 0)) for r in engine.graph.neighbors[party].tolist()]


class Flooder(Strategy):
    """Send ``factor`` times the scheduled bits on every message."""

    name = "flooder"

    def setup(self, protocol, config, corrupted, rng, tags=()):
        super().setup(protocol, config, corrupted, rng, tags)
        self.factor = int(self.params.get("factor", 4))
        if self.factor < 2:
            raise ConfigInvalid("flooder factor must be at least 2")
        return self

    def outgoing(self, net, msg):
        return [Message(msg.sender, msg.receiver, msg.round, msg.tag, msg.payload * self.factor)]

    def hop_targets(self, net, party, targets):
        return targets, self.factor

    def gossip_inject(self, engine):
        if engine.round_index != 0:
            return []
        out = []
        for c in sorted(self.corrupted):
            value = engine.inputs[c] if engine.inputs[c] is not None else "1"
            for r in engine.graph.neighbors[c].tolist():
                out.extend([(c, r, c, value)] * self.factor)
        return out


class CommitteeStuffer(Strategy):
    """Every corrupted party claims to be elected."""

    name = "committee_stuffer"
    needs = ("elect", "coin")

    def coin(self, party, bit):
        return True


class PkForker(Strategy):
    """Corrupted committee members forward a forged public key to everyone."""

    name = "pk_forker"
    needs = ("pk",)

    def outgoing(self, net, msg):
        if msg.tag == "pk":
            return [Message(msg.sender, msg.receiver, msg.round, msg.tag, flip(msg.payload))]
        return [msg]


class OutputForker(Strategy):
    """Tamper with forwarded outputs: flip bit ``bit`` for ``target`` (default: odd receivers)."""

    name = "output_forker"
    needs = ("out", "fwd", "share")

    def setup(self, protocol, config, corrupted, rng, tags=()):
        super().setup(protocol, config, corrupted, rng, tags)
        self.target = self.params.get("target")
        self.bit = int(self.params.get("bit", 0))
        return self

    def _hit(self, receiver: int) -> bool:
        return receiver == self.target if self.target is not None else receiver % 2 == 1

    def outgoing(self, net, msg):
        if msg.tag in ("out", "fwd") and self._hit(msg.receiver):
            return [Message(msg.sender, msg.receiver, msg.round, msg.tag, flip(msg.payload, self.bit))]
        return [msg]

    def gossip_initial(self, engine, party, value):
        if engine.tag != "share":
            return None
        return [(r, flip(value, self.bit) if self._hit(r) else value) for r in engine.graph.neighbors[party].tolist()]


class InputSubstituter(Strategy):
    """Corrupted parties replace their inputs with fresh random strings."""

    name = "input_substituter"

    def substitute_input(self, party, x):
        return randbits(self.rng, len(x))


class IsolationAttacker(Strategy):
    """Feed one honest victim forged copies of everything corrupted parties send it.

    On the routing graph corrupted neighbours of the victim never forward
    genuine rumors to it; instead they forward the complement of each value
    in the round they would have forwarded it.  The victim defaults to a
    random honest party other than ``sender``.
    """

    name = "isolation_attacker"

    def setup(self, protocol, config, corrupted, rng, tags=()):
        super().setup(protocol, config, corrupted, rng, tags)
        victim = self.params.get("victim")
        sender = self.params.get("sender", 0)
        if victim is None:
            pool = [i for i in self.honest() if i != sender] or self.honest()
            victim = rng.choice(pool)
        if victim in self.corrupted:
            raise ConfigInvalid("the isolation victim must be honest")
        self.victim = victim
        return self

    def outgoing(self, net, msg):
        if msg.receiver == self.victim:
            return [Message(msg.sender, msg.receiver, msg.round, msg.tag, flip(msg.payload))]
        return [msg]

    def hop_targets(self, net, party, targets):
        return targets, 1

    def gossip_blocked(self, engine):
        q = self.victim
        return [(c, q) for c in sorted(self.corrupted) if engine.graph.adjacency()[c, q]]

    def gossip_inject(self, engine):
        q = self.victim
        out = []
        adj = engine.graph.adjacency()
        for c in sorted(self.corrupted):
            if not adj[c, q] or engine.shadow_dead[c]:
                continue
            for o in np.flatnonzero(engine.newly[c]).tolist():
                v = int(engine.known[c, o])
                if v > 0:
                    out.append((c, q, o, flip(engine.value(o, v))))
        return out


CATALOG: dict[str, type[Strategy]] = {
    cls.name: cls
    for cls in (HonestButSilent, Equivocator, Flooder, CommitteeStuffer, PkForker, OutputForker,
                InputSubstituter, IsolationAttacker)
}


def strategy_catalog() -> list[str]:
    return sorted(CATALOG)


@dataclass
class AdversarySpec:
    """A fixed corruption set and the strategy that drives it."""

    corrupted: frozenset[int]
    strategy: str = "honest_but_silent"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.corrupted = frozenset(int(i) for i in self.corrupted)
        if self.strategy not in CATALOG:
            raise ConfigInvalid(f"unknown strategy {self.strategy!r}; known: {strategy_catalog()}")

    def build(self, protocol: str, config, rng: random.Random) -> Strategy:
        from ..netsim import PROTOCOLS, _load_protocols

        _load_protocols()
        entry = PROTOCOLS.get(protocol)
        tags = entry.tags if entry is not None else ()
        return CATALOG[self.strategy](**self.params).setup(protocol, config, self.corrupted, rng, tags)

    @classmethod
    def random(cls, n: int, h: int, strategy: str = "honest_but_silent", seed: int = 0,
               keep_honest=(), **params) -> "AdversarySpec":
        """Corrupt ``n - h`` parties chosen uniformly, never those in ``keep_honest``."""
        rng = Streams(seed).derived(3)
        pool = [i for i in range(n) if i not in set(keep_honest)]
        if n - h > len(pool):
            raise ConfigInvalid("cannot keep that many parties honest")
        return cls(frozenset(rng.sample(pool, n - h)), strategy, dict(params))


__all__ = ["AdversarySpec", "Strategy", "CATALOG", "strategy_catalog", "flip"] + [c.__name__ for c in CATALOG.values()]
