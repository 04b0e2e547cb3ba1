"""Synchronous point-to-point network with exact bit accounting.

Every protocol in the package runs on a :class:`Network`.  Time advances in
lockstep rounds: messages queued with :meth:`Network.send` during round ``r``
become visible in the receivers' inboxes only after :meth:`Network.step`,
i.e. in round ``r + 1``.  Only payload bits are charged; the sender,
receiver and round fields of a :class:`Message` are transport bookkeeping.

Randomness is derived from a single root seed and a spawn key per stream
(a keyed BLAKE2b hash of the pair), so party ``i``'s stream never depends on
how many other parties exist.
"""
from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigInvalid, InvariantViolation, UnknownProtocol

logger = logging.getLogger(__name__)

PartyId = int

# spawn-key roots for the three families of streams
_PARTY, _ADVERSARY, _ENVIRONMENT = 0, 1, 2


class Message(NamedTuple):
    sender: PartyId
    receiver: PartyId
    round: int
    tag: str
    payload: str  # bit string, '0'/'1' characters

    @property
    def bits(self) -> int:
        return len(self.payload)


@dataclass(frozen=True, slots=True)
class Outcome:
    """Terminal state of one party: an output bit string or an abort."""

    value: str | None = None
    reason: str | None = None

    @classmethod
    def output(cls, value: str) -> "Outcome":
        return cls(value=value)

    @classmethod
    def abort(cls, reason: str = "abort") -> "Outcome":
        return cls(value=None, reason=reason)

    @property
    def aborted(self) -> bool:
        return self.value is None

    def __repr__(self) -> str:
        if self.aborted:
            return f"Abort({self.reason})"
        return f"Output({self.value!r})"


@dataclass
class ProtocolOutcome:
    """Per-party outcomes plus protocol-specific details (committee, graph, ...)."""

    outcomes: list[Outcome]
    details: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, i: int) -> Outcome:
        return self.outcomes[i]

    def __iter__(self):
        return iter(self.outcomes)

    def aborted(self, parties: Iterable[int] | None = None) -> list[int]:
        idx = range(len(self.outcomes)) if parties is None else parties
        return [i for i in idx if self.outcomes[i].aborted]

    def outputs(self, parties: Iterable[int] | None = None) -> dict[int, str]:
        idx = range(len(self.outcomes)) if parties is None else parties
        return {i: self.outcomes[i].value for i in idx if not self.outcomes[i].aborted}


@dataclass
class RunConfig:
    n: int
    h: int
    alpha: float = 2.0
    lam: int = 4
    seed: int = 0
    depth: int = 8
    cost_model: object | None = None  # crypto_model.CostModel; None -> defaults from (lam, depth)
    adversary: object | None = None  # adversary.AdversarySpec
    abort_flag: bool = True  # broadcast: propagate a 1-bit abort flag after failed equality tests
    warn: bool = True  # gossip: send WARN before aborting
    log_base: int = 2

    def __post_init__(self):
        if self.n < 1:
            raise ConfigInvalid(f"n must be positive, got {self.n}")
        if not 1 <= self.h <= self.n:
            raise ConfigInvalid(f"need 1 <= h <= n, got h={self.h}, n={self.n}")
        if self.alpha < 1:
            raise ConfigInvalid(f"alpha must be >= 1, got {self.alpha}")
        if self.lam < 1:
            raise ConfigInvalid(f"lambda must be >= 1, got {self.lam}")
        if self.depth < 1:
            raise ConfigInvalid(f"depth must be >= 1, got {self.depth}")
        if self.log_base != 2:
            raise ConfigInvalid("only base-2 logarithms are supported")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")
        if self.adversary is not None:
            bad = [i for i in self.adversary.corrupted if not 0 <= i < self.n]
            if bad:
                raise ConfigInvalid(f"corrupted parties out of range: {bad}")
            if len(self.adversary.corrupted) > self.n - self.h:
                raise ConfigInvalid(
                    f"{len(self.adversary.corrupted)} corruptions exceed n - h = {self.n - self.h}"
                )

    @property
    def log_n(self) -> float:
        return float(np.log2(self.n)) if self.n > 1 else 0.0

    @property
    def corrupted(self) -> frozenset[int]:
        return frozenset() if self.adversary is None else frozenset(self.adversary.corrupted)

    def costs(self):
        from .crypto_model import CostModel

        if self.cost_model is not None:
            return self.cost_model
        return CostModel.default(self.lam, self.depth)

    def honest_twin(self) -> "RunConfig":
        return replace(self, adversary=None)


# ---------------------------------------------------------------------------
# randomness


def _seed_int(seed: int, *key: int) -> int:
    material = ",".join(str(k) for k in (seed, *key)).encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=16, person=b"mpclab-streams").digest(), "little")


class Streams:
    """Independent per-party, adversary and environment random streams."""

    def __init__(self, seed: int):
        self.seed = seed
        self._party: dict[int, random.Random] = {}
        self.adversary = random.Random(_seed_int(seed, _ADVERSARY))
        self.environment = random.Random(_seed_int(seed, _ENVIRONMENT))

    def party(self, i: int) -> random.Random:
        rng = self._party.get(i)
        if rng is None:
            rng = self._party[i] = random.Random(_seed_int(self.seed, _PARTY, i))
        return rng

    def derived(self, *key: int) -> random.Random:
        """A fresh stream for a named sub-experiment (keys >= 3 are free)."""
        return random.Random(_seed_int(self.seed, *key))


def randbits(rng: random.Random, k: int) -> str:
    if k <= 0:
        return ""
    return format(rng.getrandbits(k), f"0{k}b")


# ---------------------------------------------------------------------------
# metrics


class CommMetrics:
    """Bit counts per (sender, receiver, round).

    ``total_bits`` sums sends by honest parties only; traffic originating at
    corrupted parties is reported as ``adversary_bits``.  When a run had an
    adversary, :func:`run_protocol` returns the metrics of the all-honest twin
    execution and attaches the adversarial run's metrics as ``observed``.
    """

    def __init__(self, n: int, corrupted: Iterable[int] = ()):
        self.n = n
        self.corrupted = frozenset(corrupted)
        self.observed: CommMetrics | None = None
        self._src: list[int] = []
        self._dst: list[int] = []
        self._rnd: list[int] = []
        self._bits: list[int] = []
        self._chunks: list[tuple[np.ndarray, ...]] = []
        self._cache: tuple[np.ndarray, ...] | None = None

    def record(self, sender: int, receiver: int, rnd: int, bits: int) -> None:
        if bits <= 0:
            return
        self._src.append(sender)
        self._dst.append(receiver)
        self._rnd.append(rnd)
        self._bits.append(bits)
        self._cache = None

    def record_round(self, src: list[int], dst: list[int], rnd: int, bits: list[int]) -> None:
        """Append one round's messages (plain lists, zero-bit entries dropped)."""
        if 0 in bits:
            keep = [k for k, b in enumerate(bits) if b > 0]
            src, dst, bits = [src[k] for k in keep], [dst[k] for k in keep], [bits[k] for k in keep]
        if not bits:
            return
        self._src.extend(src)
        self._dst.extend(dst)
        self._rnd.extend([rnd] * len(bits))
        self._bits.extend(bits)
        self._cache = None

    def record_many(self, src, dst, rnd: int, bits) -> None:
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        bits = np.broadcast_to(np.asarray(bits, dtype=np.int64), src.shape)
        keep = bits > 0
        if not keep.any():
            return
        src, dst, bits = src[keep], dst[keep], bits[keep]
        self._chunks.append((src, dst, np.full(src.shape, rnd, dtype=np.int64), bits.copy()))
        self._cache = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self._cache is None:
            parts = [
                (
                    np.asarray(self._src, dtype=np.int64),
                    np.asarray(self._dst, dtype=np.int64),
                    np.asarray(self._rnd, dtype=np.int64),
                    np.asarray(self._bits, dtype=np.int64),
                )
            ] + self._chunks
            self._cache = tuple(np.concatenate([p[k] for p in parts]) for k in range(4))
        return self._cache

    def _honest_mask(self, src: np.ndarray) -> np.ndarray:
        if not self.corrupted:
            return np.ones(src.shape, dtype=bool)
        return ~np.isin(src, np.fromiter(self.corrupted, dtype=np.int64))

    @property
    def total_bits(self) -> int:
        src, _, _, bits = self.arrays()
        return int(bits[self._honest_mask(src)].sum())

    @property
    def adversary_bits(self) -> int:
        src, _, _, bits = self.arrays()
        return int(bits[~self._honest_mask(src)].sum())

    @property
    def observed_bits(self) -> int:
        return int(self.arrays()[3].sum())

    @property
    def rounds(self) -> int:
        rnd = self.arrays()[2]
        return int(rnd.max()) + 1 if rnd.size else 0

    def bits_sent(self) -> dict[tuple[int, int, int], int]:
        src, dst, rnd, bits = self.arrays()
        out: dict[tuple[int, int, int], int] = {}
        for s, d, r, b in zip(src.tolist(), dst.tolist(), rnd.tolist(), bits.tolist()):
            key = (s, d, r)
            out[key] = out.get(key, 0) + b
        return out

    def sent_by(self) -> np.ndarray:
        src, _, _, bits = self.arrays()
        return np.bincount(src, weights=bits, minlength=self.n).astype(np.int64)

    def localities(self) -> np.ndarray:
        """Distinct counterparties per party (either direction, >= 1 bit)."""
        src, dst, _, _ = self.arrays()
        if src.size == 0:
            return np.zeros(self.n, dtype=np.int64)
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        pairs = np.unique(lo * self.n + hi)
        a, b = pairs // self.n, pairs % self.n
        return np.bincount(np.concatenate([a, b]), minlength=self.n).astype(np.int64)

    def locality(self, i: int) -> int:
        return int(self.localities()[i])

    @property
    def max_locality(self) -> int:
        loc = self.localities()
        return int(loc.max()) if loc.size else 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommMetrics):
            return NotImplemented
        return self.bits_sent() == other.bits_sent()

    def __repr__(self) -> str:
        return (
            f"CommMetrics(n={self.n}, total_bits={self.total_bits}, "
            f"adversary_bits={self.adversary_bits}, max_locality={self.max_locality})"
        )


# ---------------------------------------------------------------------------
# budget enforcement


class Budget:
    """Expected-bits table for one delivery round.

    A rule ``tag -> (bits, allow)`` says each permitted sender may deliver at
    most ``bits`` bits under ``tag`` to a receiver this round.  Anything not
    covered by a rule has a budget of zero.
    """

    def __init__(self):
        self.rules: dict[str, tuple[int, Callable[[int, int], bool] | None]] = {}
        self._used: dict[tuple[int, int, str], int] = {}

    def allow(self, tag: str, bits: int, senders: Callable[[int, int], bool] | None = None) -> None:
        prev = self.rules.get(tag)
        if prev is not None and prev[1] is None and senders is None:
            bits = max(bits, prev[0])
        self.rules[tag] = (bits, senders)

    def limit(self, receiver: int, sender: int, tag: str) -> int:
        rule = self.rules.get(tag)
        if rule is None:
            return 0
        bits, senders = rule
        if senders is not None and not senders(receiver, sender):
            return 0
        return bits

    def admit(self, message: Message) -> bool:
        sender, receiver, _, tag, payload = message
        key = (receiver, sender, tag)
        used = self._used.get(key, 0) + len(payload)
        self._used[key] = used
        rule = self.rules.get(tag)
        if rule is None or used > rule[0]:
            return False
        return rule[1] is None or rule[1](receiver, sender)

    def reset(self) -> None:
        self.rules.clear()
        self._used.clear()


def enforce_budget(party: int, message: Message, budget: Budget) -> str:
    """Return ``"accept"`` or ``"abort"`` for ``message`` arriving at ``party``.

    Only sizes are checked here; content validation is the protocol's job.
    """
    if message.receiver != party:
        raise ValueError("message is not addressed to this party")
    return "accept" if budget.admit(message) else "abort"


# ---------------------------------------------------------------------------
# the network


class Network:
    def __init__(
        self,
        n: int,
        streams: Streams,
        corrupted: Iterable[int] = (),
        strategy=None,
        protocol: str = "",
    ):
        self.n = n
        self.streams = streams
        self.corrupted = frozenset(corrupted)
        self.strategy = strategy
        self.protocol = protocol
        self.round = 0
        self.metrics = CommMetrics(n, self.corrupted)
        self.abort_round: dict[int, int] = {}
        self.abort_reason: dict[int, str] = {}
        self.inbox: list[list[Message]] = [[] for _ in range(n)]
        self.budget = Budget()
        self.pending: list[Message] = []
        self.log: list[Message] | None = None  # set to a list to keep every delivered message

    # -- party state -----------------------------------------------------
    def is_corrupted(self, i: int) -> bool:
        return i in self.corrupted

    def honest_parties(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.corrupted]

    def active(self, i: int) -> bool:
        return i not in self.abort_round

    def abort(self, i: int, reason: str) -> None:
        if i not in self.abort_round:
            self.abort_round[i] = self.round
            self.abort_reason[i] = reason

    def rng(self, i: int) -> random.Random:
        return self.streams.party(i)

    # -- traffic ---------------------------------------------------------
    def send(self, sender: int, receiver: int, tag: str, payload: str) -> None:
        if sender == receiver:
            raise InvariantViolation("a party cannot message itself")
        if not self.active(sender):
            return
        msg = Message(sender, receiver, self.round, tag, payload)
        if sender in self.corrupted and self.strategy is not None:
            self.pending.extend(self.strategy.outgoing(self, msg))
        else:
            self.pending.append(msg)

    def multicast(self, sender: int, receivers: Iterable[int], tag: str, payload: str) -> None:
        if not self.active(sender):
            return
        rnd = self.round
        if sender in self.corrupted and self.strategy is not None:
            outgoing, pending = self.strategy.outgoing, self.pending
            for r in receivers:
                if r != sender:
                    pending.extend(outgoing(self, Message(sender, r, rnd, tag, payload)))
        else:
            self.pending.extend([Message(sender, r, rnd, tag, payload) for r in receivers if r != sender])

    def expect(self, tag: str, bits: int, senders: Callable[[int, int], bool] | None = None) -> None:
        """Declare the honest schedule for the messages delivered at the next step."""
        self.budget.allow(tag, bits, senders)

    def charge(self, sender: int, receiver: int, bits: int) -> None:
        """Account for modeled traffic that is not materialized as a Message."""
        if bits and self.active(sender):
            self.metrics.record(sender, receiver, self.round, bits)

    def charge_many(self, src, dst, bits) -> None:
        self.metrics.record_many(src, dst, self.round, bits)

    def step(self) -> None:
        """Deliver everything queued this round and advance the clock."""
        if self.strategy is not None:
            self.pending.extend(self.strategy.inject(self))
        for box in self.inbox:
            box.clear()
        pending = self.pending
        if any(m.round != self.round for m in pending):
            raise InvariantViolation("message stamped with a stale round")
        self.metrics.record_round([m.sender for m in pending], [m.receiver for m in pending], self.round,
                                  [len(m.payload) for m in pending])
        corrupted, abort_round, inbox, admit = self.corrupted, self.abort_round, self.inbox, self.budget.admit
        rnd = self.round
        for msg in pending:
            if abort_round and msg.sender not in corrupted and abort_round.get(msg.sender, rnd) < rnd:
                raise InvariantViolation("aborted party attempted to send")
            r = msg.receiver
            if r in corrupted:
                inbox[r].append(msg)
            elif r in abort_round:
                continue
            elif admit(msg):
                inbox[r].append(msg)
            else:
                self.abort(r, "flood")
        if self.log is not None:
            self.log.extend(self.pending)
        self.pending = []
        self.budget.reset()
        self.round += 1

    def skip(self, rounds: int = 1) -> None:
        for _ in range(rounds):
            self.step()

    def received(self, i: int, tag: str) -> list[Message]:
        return [m for m in self.inbox[i] if m.tag == tag]


# ---------------------------------------------------------------------------
# protocol registry and the top-level runner


@dataclass(frozen=True)
class ProtocolEntry:
    name: str
    runner: Callable[..., ProtocolOutcome]
    max_rounds: Callable[[RunConfig], int]
    tags: tuple[str, ...] = ()
    description: str = ""


PROTOCOLS: dict[str, ProtocolEntry] = {}


def register(name: str, *, max_rounds: Callable[[RunConfig], int], tags: Sequence[str] = (), description: str = ""):
    def deco(fn):
        PROTOCOLS[name] = ProtocolEntry(name, fn, max_rounds, tuple(tags), description or (fn.__doc__ or "").strip().split("\n")[0])
        return fn

    return deco


def _load_protocols() -> None:
    # importing these modules populates PROTOCOLS
    from . import broadcast, committee, protocols, routing  # noqa: F401
    from .adversary import strawman  # noqa: F401


def protocol_names() -> list[str]:
    _load_protocols()
    return sorted(PROTOCOLS)


def execute(config: RunConfig, protocol: str, inputs: Sequence, **options) -> tuple[ProtocolOutcome, Network]:
    """One execution exactly as configured (adversary included), no twin."""
    _load_protocols()
    try:
        entry = PROTOCOLS[protocol]
    except KeyError:
        raise UnknownProtocol(protocol) from None
    if len(inputs) != config.n:
        raise ConfigInvalid(f"expected {config.n} inputs, got {len(inputs)}")
    streams = Streams(config.seed)
    strategy = None
    if config.adversary is not None:
        strategy = config.adversary.build(protocol, config, streams.adversary)
    net = Network(config.n, streams, config.corrupted, strategy, protocol)
    if strategy is not None:
        strategy.bind(net)
    result = entry.runner(net, config, list(inputs), **options)
    bound = entry.max_rounds(config)
    if net.round > bound:
        raise InvariantViolation(f"{protocol} ran {net.round} rounds, bound is {bound}")
    for i, out in enumerate(result.outcomes):
        if out is None:
            result.outcomes[i] = Outcome.abort("timeout")
    for i, out in enumerate(result.outcomes):
        if not out.aborted and i in net.abort_round and i not in net.corrupted:
            raise InvariantViolation(f"party {i} aborted but reports an output")
    result.details.setdefault("rounds", net.round)
    return result, net


def run_protocol(config: RunConfig, protocol: str, inputs: Sequence, *, twin: bool = True, **options):
    """Run ``protocol`` and return ``(ProtocolOutcome, CommMetrics)``.

    With an adversary configured and ``twin`` set, the reported metrics come
    from an all-honest execution with the same seed; the adversarial run's
    traffic is attached as ``metrics.observed``.
    """
    result, net = execute(config, protocol, inputs, **options)
    if config.adversary is None or not twin:
        metrics = net.metrics
        if config.adversary is not None:
            metrics.observed = net.metrics
        return result, metrics
    _, honest_net = execute(config.honest_twin(), protocol, inputs, **options)
    metrics = honest_net.metrics
    metrics.observed = net.metrics
    return result, metrics
