"""Trusted-party oracles for the encrypted functionalities.

The oracles stand in for a threshold/multi-key FHE protocol among a committee.
They compute exactly what the ideal functionality computes and charge the
committee's channels with the bits the real protocol would have used:

* key generation = one simultaneous broadcast among the participants,
  ``c_sb * |C|^2 * (poly_in + lam) * ceil(log2 |C|)`` bits;
* every output bit delivered costs ``|C| * (B_share + B_proof)``.

Charges are spread uniformly over ordered participant pairs so that per-party
locality inside the committee is well defined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .crypto_model import CostModel, KeyMaterial, MockBackend, xor_all
from .errors import ConfigInvalid, DecryptFailure


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    arity: int
    in_width: int
    out_width: int
    evaluator: Callable[[Sequence[str]], str | list[str]]
    depth: int = 1
    multi_output: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    def __call__(self, xs: Sequence[str]):
        if len(xs) != self.arity:
            raise ValueError(f"{self.name} takes {self.arity} inputs, got {len(xs)}")
        return self.evaluator(list(xs))

    @property
    def total_out_bits(self) -> int:
        return self.out_width * (self.arity if self.multi_output else 1)


def _fold(op):
    def run(xs: list[str]) -> str:
        width = len(xs[0])
        acc = int(xs[0], 2) if width else 0
        for x in xs[1:]:
            acc = op(acc, int(x, 2) if x else 0)
        return format(acc & ((1 << width) - 1), f"0{width}b") if width else ""

    return run


def _and_tree(xs: list[str]) -> str:
    level = list(xs)
    while len(level) > 1:
        nxt = [_fold(lambda a, b: a & b)(level[i : i + 2]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def make_function(name: str, arity: int, width: int) -> FunctionSpec:
    """Catalog of test functions over ``arity`` inputs of ``width`` bits."""
    depth = max(1, math.ceil(math.log2(max(arity, 2))))
    single = {
        "xor": _fold(lambda a, b: a ^ b),
        "or": _fold(lambda a, b: a | b),
        "sum": _fold(lambda a, b: a + b),
        "and": _and_tree,
        "const0": lambda xs: "0" * width,
    }
    multi = {
        "identity": lambda xs: list(xs),
        "rotate": lambda xs: xs[1:] + xs[:1],
        "swap": lambda xs: [xs[i ^ 1] if (i ^ 1) < len(xs) else xs[i] for i in range(len(xs))],
        "reverse": lambda xs: xs[::-1],
    }
    if name in single:
        return FunctionSpec(name, arity, width, width, single[name], depth=depth)
    if name in multi:
        return FunctionSpec(name, arity, width, width, multi[name], depth=1, multi_output=True)
    raise ConfigInvalid(f"unknown function {name!r}; known: {sorted(single) + sorted(multi)}")


FUNCTION_NAMES = ("and", "const0", "identity", "or", "reverse", "rotate", "sum", "swap", "xor")


# ---------------------------------------------------------------------------
# charges


def log_factor(size: int) -> int:
    return math.ceil(math.log2(size)) if size > 1 else 0


def broadcast_charge(size: int, input_bits: int, cost: CostModel, c_sb: int = 1) -> int:
    """Bits for one simultaneous broadcast of ``input_bits``-bit secrets among ``size`` parties."""
    return c_sb * size * size * (cost.poly_in(input_bits) + cost.lam) * log_factor(size)


def output_charge(out_bits: int, size: int, cost: CostModel) -> int:
    return out_bits * size * (cost.B_share + cost.B_proof)


def spread_over_pairs(members: Sequence[int], total: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``total`` bits over ordered pairs of distinct members, remainder to the first pairs."""
    m = np.asarray(sorted(members), dtype=np.int64)
    k = m.size
    if k < 2 or total <= 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    src = np.repeat(m, k)
    dst = np.tile(m, k)
    off = src != dst
    src, dst = src[off], dst[off]
    base, rem = divmod(total, src.size)
    bits = np.full(src.size, base, dtype=np.int64)
    bits[:rem] += 1
    return src, dst, bits


# ---------------------------------------------------------------------------


class EncryptedFunctionality:
    """One committee's instance of the encrypted functionality.

    ``participants`` are the committee members as the protocol sees them.
    Honest inputs are passed in directly; corrupted participants' inputs go
    through the adversary strategy (if any) before use.
    """

    def __init__(self, net, backend: MockBackend, f: FunctionSpec, participants, c_sb: int = 1):
        self.net = net
        self.backend = backend
        self.cost = backend.cost
        self.f = f
        self.participants = sorted(set(participants))
        self.c_sb = c_sb
        self.strategy = net.strategy
        self.boundary: dict[int, list[str]] = {}
        self.charges: dict[str, int] = {}
        self.keys: dict[str, tuple[KeyMaterial, KeyMaterial]] = {}

    # -- helpers -------------------------------------------------------------
    def live(self) -> list[int]:
        return [c for c in self.participants if self.net.active(c)]

    def incomplete(self) -> bool:
        """An honest participant has dropped out, so its input can never arrive."""
        return any(not self.net.is_corrupted(c) and not self.net.active(c) for c in self.participants)

    def _contributions(self, phase: str, contrib: dict[int, str]) -> list[str]:
        out = []
        for c in self.live():
            r = contrib.get(c)
            if self.net.is_corrupted(c) and self.strategy is not None:
                r = self.strategy.oracle_contribution(phase, c, r)
            if r is not None:
                out.append(r)
        return out

    def _charge(self, label: str, total: int) -> None:
        src, dst, bits = spread_over_pairs(self.live(), total)
        self.net.charge_many(src, dst, bits)
        self.charges[label] = self.charges.get(label, 0) + int(bits.sum())

    def _deliver(self, phase: str, values: dict[int, object]) -> dict[int, object]:
        """Selective abort: the adversary sees corrupted outputs first, then may veto honest ones."""
        honest = [c for c in values if not self.net.is_corrupted(c)]
        vetoed = set()
        if self.strategy is not None and honest:
            vetoed = set(self.strategy.selective_abort(phase, honest)) & set(honest)
        out = {}
        for c, v in values.items():
            if c in vetoed:
                self.net.abort(c, "oracle-abort")
                out[c] = None
            else:
                out[c] = v
        return out

    def _keys(self, contrib: list[str], gen) -> tuple[KeyMaterial, KeyMaterial] | None:
        if not contrib:
            return None
        return gen(xor_all(contrib))

    def _decrypt(self, sk: KeyMaterial, ct: str | None, width: int) -> str:
        if ct is None:
            return "0" * width
        try:
            x = self.backend.pke_dec(sk, ct)
        except DecryptFailure:
            return "0" * width
        return x if len(x) == width else "0" * width

    # -- F_Gen / F_Gen,1 / F_Gen,2 -------------------------------------------
    def gen(self, contrib: dict[int, str], phase: str = "gen") -> dict[int, KeyMaterial | None]:
        rs = self._contributions(phase, contrib)
        keys = self._keys(rs, self.backend.pke_gen if phase != "gen_sig" else self.backend.sig_gen)
        self._charge(phase, broadcast_charge(len(self.live()), self.cost.lam, self.cost, self.c_sb))
        if keys is None:
            return {}
        self.keys[phase] = keys
        pk = keys[0]
        return self._deliver(phase, {c: pk for c in self.live()})

    def gen_sig(self, contrib: dict[int, str]) -> dict[int, KeyMaterial | None]:
        return self.gen(contrib, phase="gen_sig")

    # -- F_Comp ----------------------------------------------------------------
    def comp(self, w_by_party: dict[int, list[str | None]]) -> dict[int, str | None]:
        """Decrypt each participant's public input ``w`` under the generated key and evaluate ``f``.

        Honest participants normally submit identical ``w``; if they do not,
        each receives the evaluation of its own submission, so any
        inconsistency shows up in the outputs rather than being masked.
        """
        keys = self.keys.get("gen")
        if self.incomplete():
            keys = None
        out: dict[int, str] = {}
        cache: dict[tuple, tuple[list[str], str]] = {}
        for c in self.live():
            w = w_by_party.get(c)
            if w is None or keys is None:
                continue
            key = tuple(w)
            if key not in cache:
                xs = [self._decrypt(keys[1], ct, self.f.in_width) for ct in w]
                cache[key] = (xs, self.f(xs))
            xs, y = cache[key]
            if not self.net.is_corrupted(c):
                self.boundary[c] = xs
            out[c] = y
        self._charge("comp", output_charge(self.f.out_width, len(self.live()), self.cost))
        return self._deliver("comp", out)

    # -- F_Comp,Sign -----------------------------------------------------------
    def comp_sign(
        self,
        w_by_party: dict[int, list[str | None]],
        k_by_party: dict[int, list[str | None]],
    ) -> tuple[int | None, list[tuple[str, str]] | None]:
        """Evaluate a multi-output ``f``, encrypt each output under its owner's
        symmetric key, sign it, and hand the list to one designated participant."""
        live = self.live()
        keys = self.keys.get("gen")
        sig_keys = self.keys.get("gen_sig")
        designated = live[0] if live else None
        if designated is None or keys is None or sig_keys is None or self.incomplete():
            return designated, None
        sk, sig_sk = keys[1], sig_keys[1]
        # evaluate on an honest participant's submission when there is one
        ref = next((c for c in live if not self.net.is_corrupted(c) and w_by_party.get(c) is not None), designated)
        w = w_by_party.get(ref)
        kw = k_by_party.get(ref)
        if w is None or kw is None:
            return designated, None
        xs = [self._decrypt(sk, ct, self.f.in_width) for ct in w]
        ks = [self._decrypt(sk, k, self.cost.B_skey) for k in kw]
        for c in live:
            wc = w_by_party.get(c)
            if not self.net.is_corrupted(c) and wc is not None:
                self.boundary[c] = xs if wc == w else [self._decrypt(sk, ct, self.f.in_width) for ct in wc]
        ys = self.f(xs)
        out = []
        for k, y in zip(ks, ys):
            ct = self.backend.ske_enc(KeyMaterial("sym", k), y)
            out.append((ct, self.backend.sig_sign(sig_sk, ct)))
        out_bits = sum(len(ct) + len(s) for ct, s in out)
        self._charge("comp_sign", output_charge(out_bits, len(live), self.cost))
        delivered = self._deliver("comp_sign", {designated: out})
        return designated, delivered.get(designated)


def simultaneous_broadcast(net, cost: CostModel, participants, values: dict[int, str], c_sb: int = 1):
    """Ideal all-to-all broadcast among ``participants``: everyone gets the full vector."""
    members = sorted(participants)
    vector = [values.get(c) for c in members]
    width = max((len(v) for v in vector if v is not None), default=0)
    k = len(members)
    total = c_sb * k * k * (width + cost.lam) * log_factor(k)
    src, dst, bits = spread_over_pairs(members, total)
    net.charge_many(src, dst, bits)
    return {c: list(vector) for c in members}
