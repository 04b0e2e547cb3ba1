"""Command-line experiment runner.

Subcommands::

    mpclab run       one configuration, prints a JSON report
    mpclab sweep     grid x seeds -> CSV (one row per run)
    mpclab fit       log-log slope of total bits vs n from sweep CSVs -> JSON
    mpclab attack    strategy campaign with Wilson intervals -> JSON
    mpclab list-protocols | list-strategies

Settings come from CLI flags, then a flat ``key = value`` config file
(``--config``), then defaults.  ``MPCLAB_SEED`` overrides the root seed.
Exit codes: 0 ok, 2 configuration error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .adversary import CATALOG, AdversarySpec, strategy_catalog
from .adversary.strawman import isolation_attack
from .errors import ConfigInvalid, InvariantViolation, StrategyProtocolMismatch, UnknownProtocol
from .idealfunc import FUNCTION_NAMES, make_function
from .netsim import RunConfig, Streams, protocol_names, randbits, run_protocol
from .primitives import wilson_interval
from .protocols import MPC_PROTOCOLS, run_mpc

logger = logging.getLogger("mpclab")

CSV_COLUMNS = [
    "protocol", "n", "h", "alpha", "lambda", "D", "seed",
    "total_bits", "max_locality", "aborted_honest_count", "consistency_ok", "wallclock_ms",
]
_INT_COLUMNS = ("n", "h", "lambda", "D", "seed", "total_bits", "max_locality", "aborted_honest_count")

DEFAULTS = {
    "protocol": "mpc_committee", "n": "64", "h": None, "h_ratio": "0.5", "alpha": "2", "lam": "4", "depth": "8",
    "seed": "0", "seeds": "10", "f": None, "width": "8", "strategy": None, "workers": "1",
}


# ---------------------------------------------------------------------------
# configuration plumbing


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve(args: argparse.Namespace, key: str):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in args.file_config:
        return args.file_config[key]
    return DEFAULTS.get(key)


def root_seed(args) -> int:
    env = os.environ.get("MPCLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigInvalid(f"MPCLAB_SEED must be an integer, got {env!r}") from None
    return int(resolve(args, "seed"))


def int_list(text) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigInvalid(f"expected comma-separated integers, got {text!r}") from None


def float_list(text) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigInvalid(f"expected comma-separated numbers, got {text!r}") from None


def parse_params(items) -> dict:
    params = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigInvalid(f"strategy parameter must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = int(v)
        except ValueError:
            params[k] = v
    return params


def make_inputs(n: int, width: int, seed: int) -> list[str]:
    rng = Streams(seed).derived(6)
    return [randbits(rng, width) for _ in range(n)]


# ---------------------------------------------------------------------------
# single runs


@dataclass(frozen=True)
class PointSpec:
    protocol: str
    n: int
    h: int
    alpha: float
    lam: int
    depth: int
    seed: int
    width: int = 8
    fname: str | None = None
    strategy: str | None = None
    params: tuple = ()
    timing: bool = True


def _generic_consistency(result, corrupted) -> bool:
    outs = {o.value for i, o in enumerate(result.outcomes) if i not in corrupted and not o.aborted}
    return len(outs) <= 1


def run_point(spec: PointSpec) -> dict:
    """One seeded run -> one CSV row."""
    adversary = None
    if spec.strategy:
        adversary = AdversarySpec.random(spec.n, spec.h, spec.strategy, seed=spec.seed, **dict(spec.params))
    config = RunConfig(n=spec.n, h=spec.h, alpha=spec.alpha, lam=spec.lam, depth=spec.depth, seed=spec.seed,
                       adversary=adversary)
    inputs = make_inputs(spec.n, spec.width, spec.seed)
    start = time.perf_counter()
    if spec.protocol in MPC_PROTOCOLS:
        f = make_function(spec.fname, spec.n, spec.width) if spec.fname else None
        report = run_mpc(spec.protocol, config, inputs, f)
        total, locality, ok = report.total_bits, report.max_locality, report.consistency_ok
        aborted = report.aborted_honest(config.corrupted)
    else:
        result, metrics = run_protocol(config, spec.protocol, inputs)
        total, locality = metrics.total_bits, metrics.max_locality
        ok = _generic_consistency(result, config.corrupted)
        aborted = sum(1 for i, o in enumerate(result.outcomes) if i not in config.corrupted and o.aborted)
    elapsed = (time.perf_counter() - start) * 1000 if spec.timing else 0.0
    return {
        "protocol": spec.protocol, "n": spec.n, "h": spec.h, "alpha": spec.alpha, "lambda": spec.lam,
        "D": spec.depth, "seed": spec.seed, "total_bits": total, "max_locality": locality,
        "aborted_honest_count": aborted, "consistency_ok": ok, "wallclock_ms": round(elapsed, 3),
    }


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    protocol: str
    ns: list[int]
    hs: list[int] | None = None
    h_ratio: float | None = 0.5
    alphas: list[float] = field(default_factory=lambda: [2.0])
    lams: list[int] = field(default_factory=lambda: [4])
    depths: list[int] = field(default_factory=lambda: [8])
    seeds: int = 10
    root_seed: int = 0
    width: int = 8
    fname: str | None = None
    strategy: str | None = None
    params: dict = field(default_factory=dict)
    timing: bool = True

    def points(self) -> list[PointSpec]:
        out = []
        for n in self.ns:
            hs = self.hs if self.hs else [max(1, int(round(n * self.h_ratio)))]
            for h in hs:
                for alpha in self.alphas:
                    for lam in self.lams:
                        for depth in self.depths:
                            reason = precondition_failure(self.protocol, n, h, alpha)
                            if reason:
                                logger.warning("skipping %s n=%d h=%d: %s", self.protocol, n, h, reason)
                                continue
                            for k in range(self.seeds):
                                out.append(PointSpec(self.protocol, n, h, alpha, lam, depth, self.root_seed + k,
                                                     self.width, self.fname, self.strategy,
                                                     tuple(sorted(self.params.items())), self.timing))
        return out


def precondition_failure(protocol: str, n: int, h: int, alpha: float) -> str | None:
    if not 1 <= h <= n:
        return "need 1 <= h <= n"
    needs_sparse = protocol in ("mpc_gossip", "mpc_local_tradeoff", "gossip", "sparse_network", "local_committee")
    if needs_sparse and not h > math.log2(n):
        return "needs h > log2 n"
    if protocol == "mpc_local_tradeoff" and alpha * math.log2(n) / math.sqrt(h) >= 1:
        logger.warning("%s n=%d h=%d: election bias clips to 1 (outside the interesting regime)", protocol, n, h)
    return None


def run_sweep(spec: SweepSpec, out_path: str, workers: int = 1) -> int:
    points = spec.points()
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                # map preserves submission order, so the single writer stays deterministic
                for row in pool.map(run_point, points):
                    writer.writerow(row)
        else:
            for point in points:
                writer.writerow(run_point(point))
    return len(points)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    protocol: str
    polylog_k: float
    slope: float
    intercept: float
    ci: tuple[float, float]
    slope_raw: float
    residuals: list[float]
    ns: list[int]
    mean_bits: list[float]
    r2: float


def read_sweep_csv(paths) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_COLUMNS:
                raise ConfigInvalid(f"{path}: header {reader.fieldnames} does not match schema {CSV_COLUMNS}")
            for lineno, row in enumerate(reader, 2):
                try:
                    parsed = dict(row)
                    for key in _INT_COLUMNS:
                        parsed[key] = int(row[key])
                    parsed["alpha"] = float(row["alpha"])
                    parsed["wallclock_ms"] = float(row["wallclock_ms"])
                    if row["consistency_ok"] not in ("True", "False"):
                        raise ValueError("consistency_ok must be True or False")
                    parsed["consistency_ok"] = row["consistency_ok"] == "True"
                except (TypeError, ValueError) as exc:
                    raise ConfigInvalid(f"{path}:{lineno}: {exc}") from None
                rows.append(parsed)
    return rows


def _ols(x: np.ndarray, y: np.ndarray):
    res = stats.linregress(x, y)
    dof = x.size - 2
    if dof > 0:
        t = stats.t.ppf(0.975, dof)
        ci = (res.slope - t * res.stderr, res.slope + t * res.stderr)
    else:
        ci = (float("nan"), float("nan"))
    return res, ci


def fit_rows(rows: list[dict], polylog_k: float = 1.0, protocol: str | None = None) -> FitResult:
    """OLS of log(mean total bits / log2(n)^k) against log n, one point per n."""
    protocols = sorted({r["protocol"] for r in rows})
    if protocol is None:
        if len(protocols) != 1:
            raise ConfigInvalid(f"rows mix protocols {protocols}; pass --protocol")
        protocol = protocols[0]
    rows = [r for r in rows if r["protocol"] == protocol]
    by_n: dict[int, list[int]] = {}
    for r in rows:
        by_n.setdefault(r["n"], []).append(r["total_bits"])
    ns = sorted(by_n)
    if len(ns) < 3:
        raise ConfigInvalid(f"need at least 3 distinct n to fit, got {ns}")
    mean = np.array([np.mean(by_n[n]) for n in ns], dtype=float)
    x = np.log(np.array(ns, dtype=float))
    y_raw = np.log(mean)
    y = y_raw - polylog_k * np.log(np.log2(np.array(ns, dtype=float)))
    res, ci = _ols(x, y)
    raw = stats.linregress(x, y_raw)
    resid = y - (res.intercept + res.slope * x)
    return FitResult(protocol, polylog_k, float(res.slope), float(res.intercept), (float(ci[0]), float(ci[1])),
                     float(raw.slope), [float(v) for v in resid], ns, [float(v) for v in mean], float(res.rvalue**2))


# ---------------------------------------------------------------------------
# attack campaigns


def attack_campaign(protocol: str, n: int, h: int, alpha: float, lam: int, depth: int, seeds: int, root: int,
                    strategy: str | None, params: dict, d_target: int | None, width: int = 8) -> dict:
    if strategy in (None, "isolation_attacker") and protocol in ("strawman", "gossip"):
        wins = isolated = 0
        for k in range(seeds):
            cfg = RunConfig(n=n, h=h, alpha=alpha, lam=lam, depth=depth, seed=root + k)
            res = isolation_attack(protocol, cfg, d_target=d_target, width=width)
            wins += res.success
            isolated += res.isolated
        lo, hi = wilson_interval(wins, seeds)
        return {"protocol": protocol, "strategy": "isolation_attacker", "n": n, "h": h, "d_target": d_target,
                "seeds": seeds, "successes": wins, "success_rate": wins / seeds, "wilson99": [lo, hi],
                "victim_isolated_rate": isolated / seeds}
    if strategy is None:
        raise ConfigInvalid("attack needs --strategy for this protocol")
    violations = aborted_runs = 0
    for k in range(seeds):
        spec = PointSpec(protocol, n, h, alpha, lam, depth, root + k, width, None, strategy,
                         tuple(sorted(params.items())), timing=False)
        row = run_point(spec)
        violations += not row["consistency_ok"]
        aborted_runs += row["aborted_honest_count"] > 0
    return {"protocol": protocol, "strategy": strategy, "n": n, "h": h, "seeds": seeds,
            "violations": violations, "violation_rate": violations / seeds,
            "violation_wilson99": list(wilson_interval(violations, seeds)),
            "abort_rate": aborted_runs / seeds, "abort_wilson99": list(wilson_interval(aborted_runs, seeds))}


# ---------------------------------------------------------------------------
# CLI


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; CLI flags take precedence")
    p.add_argument("--protocol")
    p.add_argument("--alpha")
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--depth", "--D", dest="depth")
    p.add_argument("--seed")
    p.add_argument("--width", help="input width in bits")
    p.add_argument("--strategy", help="adversary strategy (corrupts n-h random parties)")
    p.add_argument("--param", action="append", default=[], help="strategy parameter key=value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpclab", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    _common(p)
    p.add_argument("--n")
    p.add_argument("--h")
    p.add_argument("--f", help=f"function, one of {', '.join(FUNCTION_NAMES)}")
    p.add_argument("--out", help="also write the JSON report here")

    p = sub.add_parser("sweep", help="grid sweep to CSV")
    _common(p)
    p.add_argument("--n", help="comma-separated party counts")
    p.add_argument("--h", help="comma-separated honest counts (overrides --h-ratio)")
    p.add_argument("--h-ratio", dest="h_ratio")
    p.add_argument("--seeds")
    p.add_argument("--f")
    p.add_argument("--workers")
    p.add_argument("--no-wallclock", action="store_true", help="write 0 for wallclock_ms (byte-identical reruns)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit log-log slope from sweep CSVs")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--polylog-k", type=float, default=1.0)
    p.add_argument("--protocol")
    p.add_argument("--out")

    p = sub.add_parser("attack", help="attack campaign with Wilson intervals")
    _common(p)
    p.add_argument("--n")
    p.add_argument("--h")
    p.add_argument("--seeds")
    p.add_argument("--d-target", dest="d_target", type=int, default=3)
    p.add_argument("--out")

    sub.add_parser("list-protocols", help="registered protocols")
    sub.add_parser("list-strategies", help="adversary strategies")
    return parser


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _cmd_run(args) -> None:
    protocol = resolve(args, "protocol")
    n = int(resolve(args, "n"))
    h_text = resolve(args, "h")
    h = int(h_text) if h_text is not None else max(1, int(round(n * float(resolve(args, "h_ratio")))))
    strategy = resolve(args, "strategy")
    seed = root_seed(args)
    adversary = AdversarySpec.random(n, h, strategy, seed=seed, **parse_params(args.param)) if strategy else None
    config = RunConfig(n=n, h=h, alpha=float(resolve(args, "alpha")), lam=int(resolve(args, "lam")),
                       depth=int(resolve(args, "depth")), seed=seed, adversary=adversary)
    width = int(resolve(args, "width"))
    inputs = make_inputs(n, width, seed)
    if protocol in MPC_PROTOCOLS:
        fname = resolve(args, "f")
        f = make_function(fname, n, width) if fname else None
        report = run_mpc(protocol, config, inputs, f)
        payload = report.summary() | {"n": n, "h": h, "seed": seed, "outputs": {
            str(i): (o.value if not o.aborted else f"abort:{o.reason}") for i, o in enumerate(report.outcomes)}}
    else:
        result, metrics = run_protocol(config, protocol, inputs)
        payload = {"protocol": protocol, "n": n, "h": h, "seed": seed, "total_bits": metrics.total_bits,
                   "max_locality": metrics.max_locality,
                   "consistency_ok": _generic_consistency(result, config.corrupted),
                   "outputs": {str(i): (o.value if not o.aborted else f"abort:{o.reason}")
                               for i, o in enumerate(result.outcomes)}}
    _emit(payload, args.out)


def _cmd_sweep(args) -> None:
    h_text = resolve(args, "h")
    spec = SweepSpec(
        protocol=resolve(args, "protocol"), ns=int_list(resolve(args, "n")),
        hs=int_list(h_text) if h_text else None, h_ratio=float(resolve(args, "h_ratio")),
        alphas=float_list(resolve(args, "alpha")), lams=int_list(resolve(args, "lam")),
        depths=int_list(resolve(args, "depth")), seeds=int(resolve(args, "seeds")), root_seed=root_seed(args),
        width=int(resolve(args, "width")), fname=resolve(args, "f"), strategy=resolve(args, "strategy"),
        params=parse_params(args.param), timing=not args.no_wallclock)
    if spec.protocol not in protocol_names():
        raise UnknownProtocol(spec.protocol)
    rows = run_sweep(spec, args.out, workers=int(resolve(args, "workers")))
    print(f"wrote {rows} rows to {args.out}")


def _cmd_fit(args) -> None:
    result = fit_rows(read_sweep_csv(args.input), args.polylog_k, args.protocol)
    _emit(asdict(result), args.out)


def _cmd_attack(args) -> None:
    protocol = resolve(args, "protocol")
    n = int(resolve(args, "n"))
    h_text = resolve(args, "h")
    h = int(h_text) if h_text is not None else max(1, n // 2)
    strategy = resolve(args, "strategy")
    if strategy is not None and strategy not in CATALOG:
        raise ConfigInvalid(f"unknown strategy {strategy!r}")
    payload = attack_campaign(protocol, n, h, float(resolve(args, "alpha")), int(resolve(args, "lam")),
                              int(resolve(args, "depth")), int(resolve(args, "seeds")), root_seed(args), strategy,
                              parse_params(args.param), args.d_target, int(resolve(args, "width")))
    _emit(payload, args.out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.file_config = read_config_file(args.config) if getattr(args, "config", None) else {}
        if args.command == "list-protocols":
            print("\n".join(protocol_names()))
        elif args.command == "list-strategies":
            print("\n".join(strategy_catalog()))
        elif args.command == "run":
            _cmd_run(args)
        elif args.command == "sweep":
            _cmd_sweep(args)
        elif args.command == "fit":
            _cmd_fit(args)
        elif args.command == "attack":
            _cmd_attack(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except (ConfigInvalid, UnknownProtocol, StrategyProtocolMismatch, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
