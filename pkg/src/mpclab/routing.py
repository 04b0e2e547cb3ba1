"""Sparse routing network and responsible gossip over it.

Gossip is simulated with dense boolean state over (party, origin) pairs and
one matrix product per round and value, which keeps runs with a few hundred
parties and all-to-all rumors fast.  Every forwarding event is still charged
exactly, per ordered (sender, receiver) pair and round.

Rumor wire format: 1 marker bit, the origin index, a 16-bit length and the
value.  WARN is the origin index plus the marker bit.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigInvalid, GraphMissing
from .netsim import Outcome, ProtocolOutcome, RunConfig, register

logger = logging.getLogger(__name__)

LEN_FIELD = 16


def index_bits(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def rumor_bits(n: int, value: str) -> int:
    return 1 + index_bits(n) + LEN_FIELD + len(value)


def warn_bits(n: int) -> int:
    return index_bits(n) + 1


def degree_target(config: RunConfig) -> float:
    """The routing degree ``d = alpha * n * log2(n) / h``."""
    return config.alpha * config.n * config.log_n / config.h


# ---------------------------------------------------------------------------


@dataclass
class RoutingGraph:
    n: int
    d: float
    out: list[np.ndarray]
    incoming: list[np.ndarray]
    neighbors: list[np.ndarray]
    aborted: frozenset[int] = frozenset()
    _adj: np.ndarray | None = field(default=None, repr=False)

    def degree(self, i: int) -> int:
        return int(self.neighbors[i].size)

    @property
    def max_degree(self) -> int:
        return max((nb.size for nb in self.neighbors), default=0)

    def adjacency(self) -> np.ndarray:
        if self._adj is None:
            a = np.zeros((self.n, self.n), dtype=np.float32)
            for i, nb in enumerate(self.neighbors):
                a[i, nb] = 1.0
            self._adj = a
        return self._adj

    def honest_connected(self, honest) -> bool:
        """Is the subgraph induced by ``honest`` connected?"""
        honest = sorted(honest)
        if len(honest) <= 1:
            return True
        pos = {p: k for k, p in enumerate(honest)}
        rows, cols = [], []
        for i in honest:
            for j in self.neighbors[i].tolist():
                if j in pos:
                    rows.append(pos[i])
                    cols.append(pos[j])
        m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(honest), len(honest)))
        count, _ = connected_components(m, directed=False)
        return count == 1


def _sample_out(net, n: int, size: int) -> list[list[int]]:
    out = []
    for i in range(n):
        others = range(n - 1)
        picks = net.rng(i).sample(others, size) if size else []
        out.append(sorted(j if j < i else j + 1 for j in picks))
    return out


def sparse_network(net, config: RunConfig, d_override: int | None = None, check_h: bool = True,
                   threshold: bool = True) -> RoutingGraph:
    """Every party picks ``ceil(d)`` random next hops and notifies them (one round).

    A party aborts iff it is notified by more than ``2d`` parties; otherwise
    its neighbourhood is the union of the hops it chose and the hops that
    chose it.
    """
    n = config.n
    if check_h and not config.h > config.log_n:
        raise ConfigInvalid(f"sparse network needs h > log2 n (h={config.h}, log2 n={config.log_n:.2f})")
    d = float(d_override) if d_override is not None else degree_target(config)
    size = min(n - 1, math.ceil(d))
    planned = _sample_out(net, n, size)
    strategy = net.strategy
    src, dst, bits = [], [], []
    for i in range(n):
        if not net.active(i):
            continue
        targets, b = planned[i], 1
        if i in net.corrupted and strategy is not None:
            targets, b = strategy.hop_targets(net, i, targets)
        src.extend([i] * len(targets))
        dst.extend(targets)
        bits.extend([b] * len(targets))
    src_a = np.asarray(src, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.int64)
    bits_a = np.asarray(bits, dtype=np.int64)
    net.charge_many(src_a, dst_a, bits_a)
    incoming: list[list[int]] = [[] for _ in range(n)]
    flooded = set()
    for s, r, b in zip(src_a.tolist(), dst_a.tolist(), bits_a.tolist()):
        incoming[r].append(s)
        if b > 1:
            flooded.add(r)
    net.step()
    for r in range(n):
        if r in net.corrupted:
            continue
        if r in flooded or len(incoming[r]) != len(set(incoming[r])):
            net.abort(r, "flood")
        elif threshold and len(incoming[r]) > 2 * d:
            net.abort(r, "threshold")
    out_arrays = [np.asarray(p if i not in net.corrupted or strategy is None else
                             strategy.hop_targets(net, i, p)[0], dtype=np.int64)
                  for i, p in enumerate(planned)]
    in_arrays = [np.asarray(sorted(set(x)), dtype=np.int64) for x in incoming]
    nbrs = [np.union1d(o, q) for o, q in zip(out_arrays, in_arrays)]
    aborted = frozenset(i for i in range(n) if not net.active(i) and i not in net.corrupted)
    return RoutingGraph(n, d, out_arrays, in_arrays, nbrs, aborted)


# ---------------------------------------------------------------------------


NULL = -1  # "my own origin has no input": any rumor for it is a forgery


@dataclass
class GossipResult:
    views: list[dict[int, str] | None]
    rounds: int
    messages_sent: np.ndarray
    conflicts: int = 0


class GossipEngine:
    """Round-synchronous flooding over a :class:`RoutingGraph`.

    ``responsible`` turns on conflict detection (abort on two values for one
    origin).  Without it the engine is the strawman flood used as the
    lower-bound victim: first-heard value wins and nobody aborts.
    """

    def __init__(self, net, graph: RoutingGraph, inputs, *, responsible: bool = True, warn: bool = True,
                 max_rounds: int | None = None, max_value_bits: int | None = None, tag: str = "rumor"):
        self.net = net
        self.tag = tag
        self.graph = graph
        self.n = n = graph.n
        self.inputs = list(inputs)
        self.responsible = responsible
        self.warn = warn
        self.max_rounds = n if max_rounds is None else max_rounds
        lens = [len(x) for x in self.inputs if x is not None]
        self.max_value_bits = max_value_bits if max_value_bits is not None else max(lens, default=0)
        self.values: list[list[str]] = [[] for _ in range(n)]  # per origin, value id k+1 -> string
        self.known = np.zeros((n, n), dtype=np.int16)
        self.newly = np.zeros((n, n), dtype=bool)
        self.warn_now = np.zeros(n, dtype=bool)
        self.messages_sent = np.zeros(n, dtype=np.int64)
        self.round_index = 0
        self.conflicts = 0
        self._corrupt_sent: set[tuple[int, int]] = set()
        self._injected: set[tuple[int, int, int]] = set()
        self.strategy = net.strategy
        self.corrupted = np.zeros(n, dtype=bool)
        for c in net.corrupted:
            self.corrupted[c] = True
        # corrupted parties that forward honestly keep honest-looking state;
        # when that state would abort we only silence it
        self.shadow_dead = np.zeros(n, dtype=bool)

    # -- values ------------------------------------------------------------
    def vid(self, origin: int, value: str) -> int:
        vals = self.values[origin]
        try:
            return vals.index(value) + 1
        except ValueError:
            vals.append(value)
            return len(vals)

    def value(self, origin: int, vid: int) -> str:
        return self.values[origin][vid - 1]

    def active_mask(self) -> np.ndarray:
        mask = ~self.shadow_dead
        for i in self.net.abort_round:
            mask[i] = False
        return mask

    def _stop(self, i: int, reason: str) -> None:
        if self.corrupted[i]:
            self.shadow_dead[i] = True
        else:
            self.net.abort(i, reason)

    # -- main loop ---------------------------------------------------------
    def run(self) -> GossipResult:
        net, n = self.net, self.n
        strategy = self.strategy
        forward_corrupt = strategy is None or strategy.gossip_forwarding(self)
        explicit_first: dict[int, list[tuple[int, str]]] = {}
        for i, x in enumerate(self.inputs):
            if not net.active(i) and not self.corrupted[i]:
                continue
            if x is None:
                self.known[i, i] = NULL
                continue
            v = self.vid(i, x)
            if self.corrupted[i] and strategy is not None:
                plan = strategy.gossip_initial(self, i, x)
                if plan is not None:
                    explicit_first[i] = plan
                    self.known[i, i] = v
                    continue
            self.known[i, i] = v
            self.newly[i, i] = True
        adj = self.graph.adjacency()
        send_adj = adj
        if strategy is not None:
            blocked = list(strategy.gossip_blocked(self))
            if blocked:
                send_adj = adj.copy()
                for s, r in blocked:
                    send_adj[s, r] = 0.0
        rbits_cache: dict[tuple[int, int], int] = {}

        def rb(o: int, v: int) -> int:
            key = (o, v)
            b = rbits_cache.get(key)
            if b is None:
                b = rbits_cache[key] = rumor_bits(n, self.value(o, v))
            return b

        wbits = warn_bits(n)
        while self.round_index < self.max_rounds:
            active = self.active_mask()
            senders = active.copy()
            if not forward_corrupt:
                senders &= ~self.corrupted
            # WARN senders abort this round after sending
            warners = self.warn_now & active
            fwd = self.newly & senders[:, None] & ~warners[:, None]
            injections = []
            if strategy is not None:
                injections = list(strategy.gossip_inject(self))
                if self.round_index == 0:
                    for s, plan in explicit_first.items():
                        injections.extend((s, r, s, val) for r, val in plan)
            if not fwd.any() and not warners.any() and not injections:
                break
            # charge honest-path traffic
            sender_idx = np.flatnonzero(fwd.any(axis=1) | warners)
            src_l, dst_l, bits_l = [], [], []
            for i in sender_idx.tolist():
                nb = np.flatnonzero(send_adj[i]) if self.corrupted[i] else self.graph.neighbors[i]
                if warners[i]:
                    b, cnt = wbits, 1
                else:
                    origins = np.flatnonzero(fwd[i])
                    b = sum(rb(o, int(self.known[i, o])) for o in origins.tolist())
                    cnt = origins.size
                    if self.corrupted[i]:
                        self._corrupt_sent.update((i, o) for o in origins.tolist())
                if nb.size:
                    src_l.append(np.full(nb.size, i, dtype=np.int64))
                    dst_l.append(nb.astype(np.int64))
                    bits_l.append(np.full(nb.size, b, dtype=np.int64))
                self.messages_sent[i] += cnt * nb.size
            if src_l:
                net.charge_many(np.concatenate(src_l), np.concatenate(dst_l), np.concatenate(bits_l))
            # adversary traffic
            inj_got: dict[tuple[int, int], set[int]] = {}
            inj_warn: set[int] = set()
            inj_flood: set[int] = set()
            for s, r, o, val in injections:
                bits = wbits if val is None else rumor_bits(n, val)
                net.charge(s, r, bits)
                if self.corrupted[r]:
                    continue
                if not adj[r, s]:
                    if self.responsible:
                        inj_flood.add(r)  # nothing scheduled from a non-neighbour
                    continue
                if val is None:
                    inj_warn.add(r)
                    continue
                key = (r, s, o)
                repeat = key in self._injected or ((s, o) in self._corrupt_sent and send_adj[s, r])
                if self.responsible and (repeat or len(val) > self.max_value_bits):
                    inj_flood.add(r)
                    continue
                self._injected.add(key)
                inj_got.setdefault((r, o), set()).add(self.vid(o, val))
            n_vals = max((len(v) for v in self.values), default=0)
            # deliveries
            got = np.zeros((n_vals + 1, n, n), dtype=bool) if n_vals else None
            if n_vals:
                fwd_f = fwd.astype(np.float32)
                for v in range(1, n_vals + 1):
                    m = fwd_f * (self.known == v)
                    if m.any():
                        got[v] = (send_adj.T @ m) > 0
                for (r, o), vids in inj_got.items():
                    for v in vids:
                        got[v, r, o] = True
            warned = (send_adj.T @ warners.astype(np.float32)) > 0
            for r in inj_warn:
                warned[r] = True
            for i in np.flatnonzero(warners).tolist():
                self._stop(i, "warned")
                self.warn_now[i] = False
            self.newly[:] = False
            net.step()
            self.round_index += 1
            receivers = self.active_mask()
            for r in inj_flood:
                if receivers[r]:
                    self._stop(r, "flood")
                    receivers[r] = False
            conflict = np.zeros(n, dtype=bool)
            if n_vals:
                any_got = got[1:].any(axis=0)
                count = got[1:].sum(axis=0)
                known = self.known
                if self.responsible:
                    own = np.take_along_axis(got, np.clip(known, 0, None)[None].astype(np.int64), axis=0)[0]
                    clash = ((known > 0) & (count - own.astype(np.int64) > 0)) | ((known == NULL) & any_got)
                    clash |= (known == 0) & (count >= 2)
                    conflict = clash.any(axis=1) & receivers
                    self.conflicts += int(conflict.sum())
                learn = (known == 0) & any_got & receivers[:, None]
                if self.responsible:
                    learn &= (count == 1) & ~conflict[:, None]
                if learn.any():
                    # first heard wins; same-round ties go to the earliest-registered value
                    first = np.argmax(got[1:], axis=0).astype(np.int16) + 1
                    self.known[learn] = first[learn]
                    self.newly[learn] = True
            if self.responsible:
                hit = (conflict | warned) & receivers
                for i in np.flatnonzero(hit).tolist():
                    if self.warn:
                        self.warn_now[i] = True
                        self.newly[i] = False
                    else:
                        self._stop(i, "equivocation" if conflict[i] else "warned")
        views: list[dict[int, str] | None] = []
        for i in range(n):
            if not net.active(i) and not self.corrupted[i]:
                views.append(None)
                continue
            row = self.known[i]
            views.append({o: self.value(o, int(v)) for o, v in enumerate(row.tolist()) if v > 0})
        return GossipResult(views, self.round_index, self.messages_sent.copy(), self.conflicts)


def gossip(net, graph: RoutingGraph | None, inputs, *, warn: bool = True, responsible: bool = True,
           max_value_bits: int | None = None, tag: str = "rumor") -> GossipResult:
    """Flood every non-Null input to all parties over ``graph``.

    Honest parties forward each origin's rumor once; with ``responsible``
    set, two different values for one origin make a party WARN its
    neighbours and abort.
    """
    if graph is None:
        raise GraphMissing("gossip needs the routing graph from sparse_network")
    return GossipEngine(net, graph, inputs, responsible=responsible, warn=warn,
                        max_value_bits=max_value_bits, tag=tag).run()


@functools.lru_cache(maxsize=16)
def _index_strings(n: int) -> tuple[str, ...]:
    ib = index_bits(n)
    return tuple(format(i, f"0{ib}b") for i in range(n))


def serialize_view(n: int, view: dict[int, str]) -> str:
    idx = _index_strings(n)
    return "".join(idx[o] + format(len(v), f"0{LEN_FIELD}b") + v for o, v in sorted(view.items()))


def serialize_members(n: int, members) -> str:
    idx = _index_strings(n)
    return "".join([idx[m] for m in sorted(members)])


# ---------------------------------------------------------------------------
# registered entry points


def _sparse_rounds(config: RunConfig) -> int:
    return 1


@register("sparse_network", max_rounds=_sparse_rounds, tags=("hop",))
def run_sparse_network(net, config: RunConfig, inputs, **options):
    """Establish the sparse routing network; each party outputs its neighbour set."""
    graph = sparse_network(net, config)
    outs = []
    for i in range(config.n):
        if not net.active(i):
            outs.append(Outcome.abort(net.abort_reason.get(i, "abort")))
        else:
            outs.append(Outcome.output(serialize_members(config.n, graph.neighbors[i].tolist())))
    return ProtocolOutcome(outs, {"graph": graph})


@register("gossip", max_rounds=lambda c: 1 + c.n, tags=("hop", "rumor"))
def run_gossip(net, config: RunConfig, inputs, **options):
    """Sparse network followed by responsible gossip of the non-empty inputs."""
    graph = sparse_network(net, config)
    vals = [x if x not in (None, "") else None for x in inputs]
    res = gossip(net, graph, vals, warn=config.warn)
    outs = []
    for i, view in enumerate(res.views):
        if view is None or not net.active(i):
            outs.append(Outcome.abort(net.abort_reason.get(i, "abort")))
        else:
            outs.append(Outcome.output(serialize_view(config.n, view)))
    return ProtocolOutcome(outs, {"graph": graph, "views": res.views, "gossip_rounds": res.rounds,
                                  "messages_sent": res.messages_sent})
