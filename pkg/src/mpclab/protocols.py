"""End-to-end MPC with selective abort.

Four compositions of the building blocks:

``mpc_committee``
    clique committee election, key generation inside the committee, public
    key forwarded to everyone, ciphertexts sent to the committee, pairwise
    fingerprints over the ciphertext vector, evaluation, output forwarded.
``mpc_multi_output``
    the same skeleton with a signature key, per-party symmetric keys, and a
    single designated member forwarding each party's signed ciphertext.
``mpc_gossip``
    no committee: every party's first-round object is gossiped over the
    sparse network, outputs are computed on each party's view, and a second
    gossip of view-bound output shares catches diverging views.
``mpc_local_tradeoff``
    committee elected by gossip; each member talks only to a random subset
    of ``ceil(n / sqrt(h))`` parties.

The committee's internal protocol is the trusted-party oracle of
:mod:`mpclab.idealfunc`, which charges modeled bits to the committee's
channels.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .broadcast import corrupt_input, length_prefixed, pairwise_equality
from .committee import committee_elect, local_committee_elect
from .crypto_model import KeyMaterial, MockBackend, expand
from .errors import ConfigInvalid, DecryptFailure
from .idealfunc import EncryptedFunctionality, FunctionSpec, make_function
from .netsim import Outcome, ProtocolOutcome, RunConfig, randbits, register, run_protocol
from .routing import gossip, index_bits, serialize_view, sparse_network

logger = logging.getLogger(__name__)

MPC_PROTOCOLS = ("mpc_committee", "mpc_multi_output", "mpc_gossip", "mpc_local_tradeoff")


# ---------------------------------------------------------------------------
# shared steps


def _resolve_function(config: RunConfig, inputs, f, fname: str | None, multi: bool) -> FunctionSpec:
    if f is not None:
        return f
    width = len(inputs[0]) if inputs else 1
    return make_function(fname or ("identity" if multi else "xor"), config.n, width)


def _contrib(net, members, lam: int) -> dict[int, str]:
    return {c: randbits(net.rng(c), lam) for c in members}


def accept_copies(net, i: int, tag: str, allowed, own: str | None = None, mismatch: str = "mismatch",
                  require_all: bool = True) -> str | None:
    """All copies from ``allowed`` senders (plus ``own``) must agree and at least one must exist.

    With ``require_all`` every sender in ``allowed`` must have delivered.
    """
    got = {m.sender: m.payload for m in net.received(i, tag) if m.sender in allowed}
    copies = list(got.values())
    if own is not None:
        copies.append(own)
    if not copies or (require_all and len(got) < len(allowed)):
        net.abort(i, "missing")
        return None
    if len(set(copies)) > 1:
        net.abort(i, mismatch)
        return None
    return copies[0]


def _mutual_pairs(views, members) -> list[tuple[int, int]]:
    members = sorted(members)
    sets = {c: set(views[c].members) for c in members}
    return [(a, b) for k, a in enumerate(members) for b in members[k + 1 :] if b in sets[a] and a in sets[b]]


def _committee_of(views) -> list[int]:
    return sorted(i for i, v in enumerate(views) if v is not None and v.elected)


def _expected(views, n: int) -> dict[int, frozenset[int]]:
    return {i: frozenset(m for m in views[i].members if m != i) if views[i] is not None else frozenset()
            for i in range(n)}


def _equality_abort(net, lam: int, pairs, strings) -> None:
    for i in pairwise_equality(net, lam, pairs, strings):
        net.abort(i, "equality-fail")


def _outcomes(net, n: int, values: dict[int, str]) -> list[Outcome]:
    outs = []
    for i in range(n):
        if net.is_corrupted(i):
            outs.append(Outcome.abort("corrupted"))
        elif not net.active(i) or i not in values:
            if net.active(i):
                net.abort(i, "missing")
            outs.append(Outcome.abort(net.abort_reason.get(i, "missing")))
        else:
            outs.append(Outcome.output(values[i]))
    return outs


# ---------------------------------------------------------------------------
# committee on the clique


def _mpc_committee_rounds(config: RunConfig) -> int:
    return 10


@register("mpc_committee", max_rounds=_mpc_committee_rounds, tags=("elect", "coin", "pk", "ct", "out"))
def mpc_committee(net, config: RunConfig, inputs, f: FunctionSpec | None = None, fname: str | None = None, **options):
    """Committee-based MPC with abort on the clique."""
    n = config.n
    f = _resolve_function(config, inputs, f, fname, multi=False)
    cost = config.costs()
    backend = MockBackend(cost)
    views = committee_elect(net, config)
    committee = _committee_of(views)
    expected = _expected(views, n)
    func = EncryptedFunctionality(net, backend, f, committee)
    pk_by = func.gen(_contrib(net, committee, cost.lam))
    net.step()
    # forward the public key to everyone
    for c in committee:
        if pk_by.get(c) is not None:
            net.multicast(c, range(n), "pk", pk_by[c].bits)
    net.expect("pk", cost.B_pk, senders=lambda r, s: s in expected[r])
    net.step()
    pk_of: dict[int, KeyMaterial] = {}
    true_pk = next((k for k in pk_by.values() if k is not None), None)
    for i in range(n):
        if net.is_corrupted(i):
            if true_pk is not None:
                pk_of[i] = true_pk
            continue
        if not net.active(i):
            continue
        own = pk_by[i].bits if pk_by.get(i) is not None else None
        got = accept_copies(net, i, "pk", expected[i], own, "pk-mismatch")
        if got is not None:
            pk_of[i] = KeyMaterial("enc-public", got)
    # inputs to the committee
    ct_bits = cost.ct_bits(f.in_width)
    cts: dict[int, str] = {}
    for i in range(n):
        if i in pk_of and (net.active(i) or net.is_corrupted(i)):
            cts[i] = backend.pke_enc(pk_of[i], corrupt_input(net, i, inputs[i]))
            net.multicast(i, expected[i], "ct", cts[i])
    net.expect("ct", ct_bits, senders=lambda r, s: r in expected[s])
    net.step()
    vectors: dict[int, list[str | None]] = {}
    for c in committee:
        vec: list[str | None] = [None] * n
        for msg in net.received(c, "ct"):
            vec[msg.sender] = msg.payload
        vec[c] = cts.get(c)
        vectors[c] = vec
    _equality_abort(net, config.lam, _mutual_pairs(views, committee),
                    {c: length_prefixed(v) for c, v in vectors.items()})
    y_by = func.comp(vectors)
    net.step()
    for c in committee:
        if y_by.get(c) is not None:
            net.multicast(c, range(n), "out", y_by[c])
    net.expect("out", f.out_width, senders=lambda r, s: s in expected[r])
    net.step()
    values = {}
    for i in range(n):
        if net.is_corrupted(i) or not net.active(i):
            continue
        got = accept_copies(net, i, "out", expected[i], y_by.get(i), "output-mismatch")
        if got is not None:
            values[i] = got
    return ProtocolOutcome(_outcomes(net, n, values), {
        "committee": committee, "views": views, "boundary": dict(func.boundary), "f": f,
        "multi_output": False, "charges": dict(func.charges)})


# ---------------------------------------------------------------------------
# multi-output


@register("mpc_multi_output", max_rounds=lambda c: 11, tags=("elect", "coin", "pk", "ct", "fwd"))
def mpc_multi_output(net, config: RunConfig, inputs, f: FunctionSpec | None = None, fname: str | None = None,
                     **options):
    """Multi-output MPC: signed per-party ciphertexts forwarded by one designated member."""
    n = config.n
    f = _resolve_function(config, inputs, f, fname, multi=True)
    if not f.multi_output:
        raise ConfigInvalid(f"{f.name} is single-output; use mpc_committee")
    cost = config.costs()
    backend = MockBackend(cost)
    views = committee_elect(net, config)
    committee = _committee_of(views)
    expected = _expected(views, n)
    func = EncryptedFunctionality(net, backend, f, committee)
    pk_by = func.gen(_contrib(net, committee, cost.lam))
    net.step()
    vk_by = func.gen_sig(_contrib(net, committee, cost.lam))
    net.step()
    keys_by = {c: pk_by[c].bits + vk_by[c].bits for c in committee
               if pk_by.get(c) is not None and vk_by.get(c) is not None}
    for c, payload in keys_by.items():
        net.multicast(c, range(n), "pk", payload)
    net.expect("pk", 2 * cost.B_pk, senders=lambda r, s: s in expected[r])
    net.step()
    true_keys = next(iter(keys_by.values()), None)
    keys_of: dict[int, str] = {}
    for i in range(n):
        if net.is_corrupted(i):
            if true_keys is not None:
                keys_of[i] = true_keys
            continue
        if not net.active(i):
            continue
        got = accept_copies(net, i, "pk", expected[i], keys_by.get(i), "pk-mismatch")
        if got is not None:
            keys_of[i] = got
    # input ciphertext and encrypted symmetric key, to the committee
    sym: dict[int, KeyMaterial] = {}
    sent: dict[int, tuple[str, str]] = {}
    for i in range(n):
        if i not in keys_of or not (net.active(i) or net.is_corrupted(i)):
            continue
        pk = KeyMaterial("enc-public", keys_of[i][: cost.B_pk])
        sym[i] = backend.ske_gen(net.rng(i))
        ct = backend.pke_enc(pk, corrupt_input(net, i, inputs[i]))
        kct = backend.pke_enc(pk, sym[i].bits)
        sent[i] = (ct, kct)
        net.multicast(i, expected[i], "ct", ct + kct)
    ct_len, k_len = cost.ct_bits(f.in_width), cost.ct_bits(cost.B_skey)
    net.expect("ct", ct_len + k_len, senders=lambda r, s: r in expected[s])
    net.step()
    w_by: dict[int, list[str | None]] = {}
    k_by: dict[int, list[str | None]] = {}
    for c in committee:
        w: list[str | None] = [None] * n
        kw: list[str | None] = [None] * n
        for msg in net.received(c, "ct"):
            if len(msg.payload) == ct_len + k_len:
                w[msg.sender], kw[msg.sender] = msg.payload[:ct_len], msg.payload[ct_len:]
        if c in sent:
            w[c], kw[c] = sent[c]
        w_by[c], k_by[c] = w, kw
    _equality_abort(net, config.lam, _mutual_pairs(views, committee),
                    {c: length_prefixed((a or "") + (b or "") for a, b in zip(w_by[c], k_by[c])) for c in committee})
    designated, signed = func.comp_sign(w_by, k_by)
    net.step()
    fwd_bits = cost.ct_bits(f.out_width) + cost.B_sig
    if signed is not None and designated is not None:
        for i in range(n):
            if i != designated:
                ct, sig = signed[i]
                net.send(designated, i, "fwd", ct + sig)
    expected_fwd = {i: min(expected[i] | ({i} if views[i] is not None and views[i].elected else set()),
                           default=None) for i in range(n)}
    net.expect("fwd", fwd_bits, senders=lambda r, s: s == expected_fwd[r])
    net.step()
    values = {}
    for i in range(n):
        if net.is_corrupted(i) or not net.active(i) or i not in sym:
            continue
        if i == designated and signed is not None:
            payload = signed[i][0] + signed[i][1]
        else:
            msgs = [m for m in net.received(i, "fwd") if m.sender == expected_fwd[i]]
            if len(msgs) != 1:
                net.abort(i, "missing")
                continue
            payload = msgs[0].payload
        ct, sig = payload[: -cost.B_sig], payload[-cost.B_sig :]
        vk = KeyMaterial("sig-public", keys_of[i][cost.B_pk :])
        if not backend.sig_verify(vk, ct, sig):
            net.abort(i, "sig-fail")
            continue
        try:
            values[i] = backend.ske_dec(sym[i], ct)
        except DecryptFailure:
            net.abort(i, "decrypt-fail")
    return ProtocolOutcome(_outcomes(net, n, values), {
        "committee": committee, "views": views, "boundary": dict(func.boundary), "f": f,
        "multi_output": True, "designated": designated, "signed": signed, "charges": dict(func.charges)})


# ---------------------------------------------------------------------------
# gossip, no committee


def _object_layout(cost, width: int) -> tuple[int, int]:
    """(ciphertext field, total) bits of a party's first-round object."""
    ct_field = max(cost.B_ct * width, cost.ct_bits(width))
    return ct_field, cost.B_pk + ct_field + cost.B_proof


@register("mpc_gossip", max_rounds=lambda c: 1 + 2 * c.n, tags=("hop", "rumor", "share"))
def mpc_gossip(net, config: RunConfig, inputs, f: FunctionSpec | None = None, fname: str | None = None, **options):
    """MPC over the sparse network: gossip first-round objects, evaluate, cross-check output shares."""
    n = config.n
    f = _resolve_function(config, inputs, f, fname, multi=False)
    cost = config.costs()
    backend = MockBackend(cost)
    graph = sparse_network(net, config)
    ct_field, obj_bits = _object_layout(cost, f.in_width)
    secret: dict[str, KeyMaterial] = {}
    objects: list[str | None] = []
    for i in range(n):
        if not (net.active(i) or net.is_corrupted(i)):
            objects.append(None)
            continue
        pk, sk = backend.pke_gen(randbits(net.rng(i), cost.lam))
        secret[pk.bits] = sk
        ct = backend.pke_enc(pk, corrupt_input(net, i, inputs[i])).ljust(ct_field, "0")
        objects.append(pk.bits + ct + expand("proof", ct, cost.B_proof))
    first = gossip(net, graph, objects, warn=config.warn, max_value_bits=obj_bits, tag="rumor")
    zero = "0" * f.in_width
    plain_len = cost.ct_bits(f.in_width)

    def open_object(obj: str | None) -> str:
        if obj is None or len(obj) != obj_bits:
            return zero
        pk, ct, proof = obj[: cost.B_pk], obj[cost.B_pk : cost.B_pk + ct_field], obj[cost.B_pk + ct_field :]
        sk = secret.get(pk)
        if sk is None or proof != expand("proof", ct, cost.B_proof):
            return zero
        try:
            x = backend.pke_dec(sk, ct[:plain_len])
        except DecryptFailure:
            return zero
        return x if len(x) == f.in_width else zero

    boundary: dict[int, list[str]] = {}
    ys: dict[int, str] = {}
    shares: list[str | None] = []
    share_bits = f.out_width * (cost.B_share + cost.B_proof)
    for i in range(n):
        view = first.views[i]
        if view is None or not (net.active(i) or net.is_corrupted(i)):
            shares.append(None)
            continue
        xs = [open_object(view.get(o)) for o in range(n)]
        ys[i] = f(xs)
        if not net.is_corrupted(i):
            boundary[i] = xs
        shares.append(expand("share", serialize_view(n, view), share_bits))
    second = gossip(net, graph, shares, warn=config.warn, max_value_bits=share_bits, tag="share")
    values = {}
    for i in range(n):
        if net.is_corrupted(i) or not net.active(i) or second.views[i] is None:
            continue
        if any(s != shares[i] for s in second.views[i].values()):
            net.abort(i, "share-mismatch")
            continue
        values[i] = ys[i]
    return ProtocolOutcome(_outcomes(net, n, values), {
        "graph": graph, "boundary": boundary, "f": f, "multi_output": False,
        "gossip_rounds": (first.rounds, second.rounds),
        "messages_sent": first.messages_sent + second.messages_sent})


# ---------------------------------------------------------------------------
# local committee with random contact subsets


def subset_size(config: RunConfig) -> int:
    return min(config.n - 1, math.ceil(config.n / math.sqrt(config.h)))


def sample_subsets(net, committee, size: int) -> dict[int, list[int]]:
    """Each member ``c`` draws the parties it will serve, uniformly among the others."""
    subsets = {}
    for c in committee:
        others = [j for j in range(net.n) if j != c]
        subsets[c] = sorted(net.rng(c).sample(others, size))
    return subsets


@register("mpc_local_tradeoff", max_rounds=lambda c: c.n + 12,
          tags=("hop", "rumor", "coin", "pk", "ct", "list", "out"))
def mpc_local_tradeoff(net, config: RunConfig, inputs, f: FunctionSpec | None = None, fname: str | None = None,
                       **options):
    """Local MPC: gossip-elected committee, each member serving a random subset of parties."""
    n = config.n
    f = _resolve_function(config, inputs, f, fname, multi=False)
    cost = config.costs()
    backend = MockBackend(cost)
    graph = sparse_network(net, config)
    views = local_committee_elect(net, config, graph)
    committee = _committee_of(views)
    expected = _expected(views, n)
    func = EncryptedFunctionality(net, backend, f, committee)
    pk_by = func.gen(_contrib(net, committee, cost.lam))
    net.step()
    subsets = sample_subsets(net, committee, subset_size(config))
    for c in committee:
        if pk_by.get(c) is not None:
            net.multicast(c, subsets[c], "pk", pk_by[c].bits)
    net.expect("pk", cost.B_pk, senders=lambda r, s: s in expected[r])
    net.step()
    pk_of: dict[int, KeyMaterial] = {}
    served_by: dict[int, set[int]] = {i: set() for i in range(n)}
    true_pk = next((k for k in pk_by.values() if k is not None), None)
    for i in range(n):
        served_by[i] = {m.sender for m in net.received(i, "pk") if m.sender in expected[i]}
        if net.is_corrupted(i):
            if true_pk is not None:
                pk_of[i] = true_pk
            continue
        if not net.active(i):
            continue
        own = pk_by[i].bits if pk_by.get(i) is not None else None
        got = accept_copies(net, i, "pk", expected[i], own, "pk-mismatch", require_all=False)
        if got is None and not served_by[i] and own is None:
            net.abort_reason[i] = "uncovered"
        if got is not None:
            pk_of[i] = KeyMaterial("enc-public", got)
    ct_bits = cost.ct_bits(f.in_width)
    cts: dict[int, str] = {}
    for i in range(n):
        if i in pk_of and (net.active(i) or net.is_corrupted(i)):
            cts[i] = backend.pke_enc(pk_of[i], corrupt_input(net, i, inputs[i]))
            net.multicast(i, sorted(served_by[i]), "ct", cts[i])
    net.expect("ct", ct_bits, senders=lambda r, s: r in expected[s])
    net.step()
    # committee members exchange what they collected
    ib = index_bits(n)
    own_lists: dict[int, str] = {}
    for c in committee:
        entries = {m.sender: m.payload for m in net.received(c, "ct") if len(m.payload) == ct_bits}
        if c in cts:
            entries[c] = cts[c]
        own_lists[c] = "".join(format(i, f"0{ib}b") + entries[i] for i in sorted(entries))
        net.multicast(c, expected[c], "list", own_lists[c])
    net.expect("list", n * (ib + ct_bits), senders=lambda r, s: s in expected[r])
    net.step()
    step = ib + ct_bits
    parsed: dict[str, dict[int, str] | None] = {}

    def parse(body: str) -> dict[int, str] | None:
        if body not in parsed:
            entries = {}
            ok = len(body) % step == 0
            for k in range(0, len(body) if ok else 0, step):
                i, ct = int(body[k : k + ib], 2), body[k + ib : k + step]
                if i >= n or entries.setdefault(i, ct) != ct:
                    ok = False
                    break
            parsed[body] = entries if ok else None
        return parsed[body]

    merges: dict[frozenset, tuple[list[str | None], bool]] = {}
    vectors: dict[int, list[str | None]] = {}
    for c in committee:
        if not net.active(c) and not net.is_corrupted(c):
            continue
        bodies = frozenset([own_lists[c]] + [m.payload for m in net.received(c, "list") if m.sender in expected[c]])
        if bodies not in merges:
            merged: dict[int, str] = {}
            clash = False
            for body in sorted(bodies):
                entries = parse(body)
                if entries is None:
                    clash = True
                    break
                for i, ct in entries.items():
                    if merged.setdefault(i, ct) != ct:
                        clash = True
                        break
                if clash:
                    break
            merges[bodies] = ([merged.get(i) for i in range(n)], clash)
        vec, clash = merges[bodies]
        if clash and not net.is_corrupted(c):
            net.abort(c, "ct-conflict")
            continue
        vectors[c] = vec
    live = [c for c in committee if c in vectors]
    _equality_abort(net, config.lam, _mutual_pairs(views, live), {c: length_prefixed(vectors[c]) for c in live})
    y_by = func.comp(vectors)
    net.step()
    for c in committee:
        if y_by.get(c) is not None:
            net.multicast(c, subsets[c], "out", y_by[c])
    net.expect("out", f.out_width, senders=lambda r, s: s in expected[r])
    net.step()
    values = {}
    for i in range(n):
        if net.is_corrupted(i) or not net.active(i):
            continue
        got = accept_copies(net, i, "out", served_by[i], y_by.get(i), "output-mismatch")
        if got is not None:
            values[i] = got
    return ProtocolOutcome(_outcomes(net, n, values), {
        "committee": committee, "views": views, "graph": graph, "subsets": subsets, "served_by": served_by,
        "boundary": dict(func.boundary), "f": f, "multi_output": False, "charges": dict(func.charges)})


# ---------------------------------------------------------------------------
# reports


@dataclass
class MpcRunReport:
    protocol: str
    outcomes: list[Outcome]
    total_bits: int
    localities: np.ndarray
    committee_size: int | None
    abort_reasons: Counter
    consistency_ok: bool
    violations: list[str] = field(default_factory=list)
    rounds: int = 0
    observed_bits: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def max_locality(self) -> int:
        return int(self.localities.max()) if self.localities.size else 0

    def aborted_honest(self, corrupted=()) -> int:
        corrupted = set(corrupted)
        return sum(1 for i, o in enumerate(self.outcomes) if i not in corrupted and o.aborted)

    def summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "total_bits": self.total_bits,
            "max_locality": self.max_locality,
            "committee_size": self.committee_size,
            "aborted": sum(1 for o in self.outcomes if o.aborted and o.reason != "corrupted"),
            "abort_reasons": dict(sorted(self.abort_reasons.items())),
            "consistency_ok": self.consistency_ok,
            "violations": self.violations,
            "rounds": self.rounds,
        }


def check_consistency(result: ProtocolOutcome, inputs, corrupted=()) -> list[str]:
    """Consistency-or-abort and boundary correctness for one MPC run.

    * per output slot, non-aborted honest parties hold at most one value;
    * each non-aborted honest output equals the plain evaluator applied to
      an input vector some honest participant fixed at the functionality;
    * in that vector every honest party's entry is its true input.
    """
    corrupted = set(corrupted)
    f: FunctionSpec = result.details["f"]
    multi = result.details.get("multi_output", False)
    boundary: dict[int, list[str]] = result.details.get("boundary", {})
    honest_out = {i: o.value for i, o in enumerate(result.outcomes) if i not in corrupted and not o.aborted}
    problems = []
    if not multi and len(set(honest_out.values())) > 1:
        problems.append(f"disagreement: {sorted(set(honest_out.values()))}")
    candidates = {tuple(v) for v in boundary.values()}
    evaluated = {b: f(list(b)) for b in candidates}
    for i, y in honest_out.items():
        ok = False
        for b, fy in evaluated.items():
            want = fy[i] if multi else fy
            if want == y and b[i] == inputs[i]:
                ok = True
                break
        if not ok:
            problems.append(f"party {i} output {y!r} matches no honest boundary evaluation")
    return problems


def run_mpc(protocol: str, config: RunConfig, inputs, f: FunctionSpec | None = None, *, twin: bool = True,
            **options) -> MpcRunReport:
    """Run one MPC protocol and assemble its report (CC from the all-honest twin)."""
    if protocol not in MPC_PROTOCOLS:
        raise ConfigInvalid(f"{protocol} is not an MPC protocol; choose from {MPC_PROTOCOLS}")
    result, metrics = run_protocol(config, protocol, inputs, twin=twin, f=f, **options)
    corrupted = config.corrupted
    problems = check_consistency(result, inputs, corrupted)
    reasons = Counter(o.reason for i, o in enumerate(result.outcomes) if o.aborted and i not in corrupted)
    committee = result.details.get("committee")
    observed = metrics.observed.observed_bits if metrics.observed is not None else None
    return MpcRunReport(protocol, result.outcomes, metrics.total_bits, metrics.localities(),
                        len(committee) if committee is not None else None, reasons, not problems, problems,
                        result.details.get("rounds", 0), observed, result.details)
