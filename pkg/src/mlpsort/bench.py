"""Experiment harness: configure runs, generate inputs, verify against the
sequential oracle, and emit machine-readable metrics records.

A record is one JSON object per (config, repetition) with the modeled
communication costs broken down by phase (splitter selection, bucket
processing, data delivery, local sorting), per-level load and message
statistics, and the verification verdict.  Repetitions and sweeps reuse
one config template; input streams are seeded independently of the
algorithm streams so the two never interact.  Records contain no
wall-clock fields unless timing is explicitly enabled, which keeps the
default output byte-identical across runs of the same config.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from bisect import bisect_left
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Iterator, Sequence

from .ams import AmsParams, ams_sort
from .core import Element, SeedSpec
from .delivery import SCHEMES
from .rlm import LevelPlan, rlm_sort
from .simnet import CostParams, Network

PHASES = ("splitter_selection", "bucket_processing", "data_delivery",
          "local_sorting")
DISTRIBUTIONS = ("uniform", "sorted", "reverse", "equal")  # plus zipf:<theta>


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    algo: str = "ams"
    pes: int = 8
    n_per_pe: int = 1000
    levels: int = 1
    groups: tuple[int, ...] | None = None
    a: float | None = None
    b: int = 16
    eps: float = 0.2
    delivery: str = "deterministic"
    seed: int = 1
    reps: int = 1
    dist: str = "uniform"
    alpha: float = 1.0
    beta: float = 1.0
    verify: bool = False
    verify_cap: int = 10_000_000
    timing: bool = False

    def resolved_groups(self) -> tuple[int, ...]:
        groups = self.groups or default_groups(self.algo, self.pes, self.levels)
        return tuple(groups)

    def validate(self) -> None:
        if self.algo not in ("ams", "rlm"):
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if self.pes < 1:
            raise ConfigError("--pes must be at least 1")
        if self.n_per_pe < 0:
            raise ConfigError("--n-per-pe must be non-negative")
        if self.levels < 1:
            raise ConfigError("--levels must be at least 1")
        if self.delivery not in SCHEMES:
            raise ConfigError(f"unknown delivery scheme {self.delivery!r}")
        if self.reps < 1:
            raise ConfigError("--reps must be at least 1")
        if self.b < 1:
            raise ConfigError("--b must be at least 1")
        if self.a is not None and self.a <= 0:
            raise ConfigError("--a must be positive")
        if self.eps <= 0:
            raise ConfigError("--eps must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("--alpha/--beta must be non-negative")
        _parse_dist(self.dist)
        groups = self.resolved_groups()
        if self.groups is not None and len(groups) != self.levels:
            raise ConfigError(
                f"--groups lists {len(groups)} levels, --levels says {self.levels}")
        if math.prod(groups) != self.pes:
            raise ConfigError(
                f"group counts {groups} do not telescope {self.pes} PEs")


def default_groups(algo: str, p: int, k: int) -> tuple[int, ...]:
    """Power-of-two level schedules: near-even exponent split for the
    merge algorithm; sample sort pins the last level to groups of 16
    when the machine is big enough."""
    if p & (p - 1):
        raise ConfigError(
            f"default schedules need a power-of-two PE count, got {p}; "
            "pass --groups explicitly")
    exp = p.bit_length() - 1

    def even_split(total_exp: int, parts: int) -> list[int]:
        out = []
        rem = total_exp
        for left in range(parts, 1, -1):
            q = min(rem, -(-rem // left))  # ceil: larger counts first
            out.append(q)
            rem -= q
        out.append(rem)
        return out

    if algo == "ams" and k > 1 and exp >= 4 + (k - 1):
        head = even_split(exp - 4, k - 1)
        exps = head + [4]
    else:
        exps = even_split(exp, k)
    return tuple(1 << q for q in exps)


def _parse_dist(dist: str) -> tuple[str, float | None]:
    if dist in DISTRIBUTIONS:
        return dist, None
    if dist.startswith("zipf:"):
        try:
            theta = float(dist.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad zipf parameter in {dist!r}") from None
        if theta <= 0:
            raise ConfigError("zipf exponent must be positive")
        return "zipf", theta
    raise ConfigError(f"unknown input distribution {dist!r}")


_ZIPF_UNIVERSE = 100_000
_zipf_cdf_cache: dict[float, list[float]] = {}


def _zipf_cdf(theta: float) -> list[float]:
    cdf = _zipf_cdf_cache.get(theta)
    if cdf is None:
        acc = 0.0
        cdf = []
        for k in range(1, _ZIPF_UNIVERSE + 1):
            acc += k ** -theta
            cdf.append(acc)
        _zipf_cdf_cache[theta] = cdf
    return cdf


def generate_input(config: ExperimentConfig, rep: int) -> dict[int, list[Element]]:
    """Per-PE input arrays; seeded independently of the algorithm streams."""
    kind, theta = _parse_dist(config.dist)
    p, per = config.pes, config.n_per_pe
    n = p * per
    data = {}
    stream = SeedSpec(config.seed, "input").derive(f"rep{rep}")
    for pe in range(p):
        offset = pe * per
        if kind == "uniform":
            rng = stream.derive(f"pe{pe}").rng()
            keys = [rng.getrandbits(64) for _ in range(per)]
        elif kind == "sorted":
            keys = list(range(offset, offset + per))
        elif kind == "reverse":
            keys = [n - 1 - (offset + i) for i in range(per)]
        elif kind == "equal":
            keys = [42] * per
        else:
            rng = stream.derive(f"pe{pe}").rng()
            cdf = _zipf_cdf(theta)
            total = cdf[-1]
            keys = [bisect_left(cdf, rng.random() * total) for _ in range(per)]
        data[pe] = [Element(k, pe, i) for i, k in enumerate(keys)]
    return data


def _run_once(config: ExperimentConfig, rep: int) -> dict:
    groups = config.resolved_groups()
    data = generate_input(config, rep)
    n = config.pes * config.n_per_pe
    net = Network(config.pes, CostParams(config.alpha, config.beta))
    algo_seed = SeedSpec(config.seed, "algo").derive(f"rep{rep}")

    started = time.perf_counter()
    if config.algo == "rlm":
        effective_a = None
        out, levels = rlm_sort(net, data, LevelPlan(config.pes, groups),
                               config.delivery, algo_seed)
    else:
        effective_a = config.a
        if effective_a is None:
            effective_a = 1.6 * math.log10(max(n, 10))
        params = AmsParams(groups, oversampling=effective_a,
                           overpartition=config.b, imbalance=config.eps)
        out, levels = ams_sort(net, data, params, config.delivery, algo_seed)
    wall = time.perf_counter() - started

    verdict = "skipped"
    if config.verify and n <= config.verify_cap:
        flat_out = [e for pe in range(config.pes) for e in out[pe]]
        expected = sorted(e for seq in data.values() for e in seq)
        verdict = "pass" if flat_out == expected else "fail"

    loads = [len(out[pe]) for pe in range(config.pes)]
    avg = n / config.pes if config.pes else 0.0
    for lv in levels:
        lv["imbalance"] = (lv["max_load"] / avg) if avg else 0.0
    phases = {name: {"modeled_time": 0.0, "max_words": 0, "max_msgs": 0}
              for name in PHASES}
    phases.update(net.ledger.phase_summary())

    record = {
        "schema": 1,
        "algo": config.algo,
        "pes": config.pes,
        "n_per_pe": config.n_per_pe,
        "levels": config.levels,
        "groups": list(groups),
        "a": effective_a,
        "b": config.b,
        "eps": config.eps,
        "delivery": config.delivery,
        "dist": config.dist,
        "alpha": config.alpha,
        "beta": config.beta,
        "seed": config.seed,
        "rep": rep,
        "verified": verdict,
        "final_max_load": max(loads),
        "final_imbalance": (max(loads) / avg) if avg else 0.0,
        "modeled_time": net.ledger.modeled_time,
        "max_sent_msgs": max(net.ledger.sent_msgs),
        "max_recv_msgs": max(net.ledger.recv_msgs),
        "phases": phases,
        "level_reports": levels,
    }
    if config.timing:
        record["wall_s"] = wall
    return record


def run_experiment(config: ExperimentConfig) -> Iterator[dict]:
    """One record per repetition, in repetition order."""
    config.validate()
    for rep in range(config.reps):
        yield _run_once(config, rep)


_AXIS_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def parse_axis(text: str) -> tuple[str, list]:
    """Parse ``param=v1,v2,...`` into a typed axis."""
    if "=" not in text:
        raise ConfigError(f"axis {text!r} is not of the form param=v1,v2,...")
    name, _, raw = text.partition("=")
    name = name.strip().replace("-", "_")
    if name == "groups" or name not in _AXIS_FIELDS:
        raise ConfigError(f"cannot sweep over {name!r}")
    values = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if name in ("pes", "n_per_pe", "levels", "b", "seed", "reps"):
            values.append(int(token))
        elif name in ("a", "eps", "alpha", "beta"):
            values.append(float(token))
        else:
            values.append(token)
    return name, values


def sweep(config: ExperimentConfig, axes: Sequence[tuple[str, list]],
          ) -> Iterator[dict]:
    """Cartesian product of the axis values over the template config."""
    if not axes:
        return
    def rec(cfg: ExperimentConfig, remaining):
        if not remaining:
            yield from run_experiment(cfg)
            return
        name, values = remaining[0]
        for v in values:
            yield from rec(replace(cfg, **{name: v}), remaining[1:])
    yield from rec(config, list(axes))


_CSV_COLUMNS = [
    "schema", "algo", "pes", "n_per_pe", "levels", "groups", "a", "b", "eps",
    "delivery", "dist", "alpha", "beta", "seed", "rep", "verified",
    "final_max_load", "final_imbalance", "modeled_time",
    "max_sent_msgs", "max_recv_msgs",
]


def write_records(records: Iterable[dict], out, fmt: str = "jsonl") -> int:
    """Stream records to a text file object; returns the count of
    verification failures encountered."""
    failures = 0
    if fmt == "jsonl":
        for rec in records:
            out.write(json.dumps(rec, separators=(",", ":")) + "\n")
            if rec["verified"] == "fail":
                failures += 1
    elif fmt == "csv":
        writer = csv.writer(out)
        writer.writerow(_CSV_COLUMNS + [f"{p}_modeled_time" for p in PHASES])
        for rec in records:
            row = []
            for col in _CSV_COLUMNS:
                value = rec[col]
                row.append("x".join(map(str, value)) if col == "groups" else value)
            row += [rec["phases"][p]["modeled_time"] for p in PHASES]
            writer.writerow(row)
            if rec["verified"] == "fail":
                failures += 1
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    return failures
