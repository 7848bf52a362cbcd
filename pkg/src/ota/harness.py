"""Synthetic traffic, query-log replay and parameter sweeps.

A replay runs every configured algorithm over the same query stream and
reports one row per algorithm: horizon Gini and efficiency (efficiency also
relative to CTR ranking on that stream), plus the per-query means of
``E_q / Gamma`` and ``G_q``.

Per-query means are taken over groups of identical queries: the impression
vectors of a group are averaged first and the metric is computed on the
average. A stream of distinct queries therefore gets plain per-query
averages, while a repeated query is compared through its empirical
impression distribution.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from ota import metrics
from ota.allocator import RngStream, rank_probabilistic
from ota.baselines import dmd_step, new_pacer_state, rank_by_ctr, throttle_step
from ota.errors import InvalidConfig, InvalidSpec
from ota.model import (
    AccumulatorBuilder,
    Item,
    QueryInstance,
    read_query_log,
    validate_query,
)
from ota.solver import SolverParams, frank_wolfe

log = logging.getLogger(__name__)

DEFAULT_GAMMA_DECAY = 0.85
DEFAULT_ITERS = 500
# Fixed shard size so stateless replay gives identical sums for any thread count.
CHUNK = 256

REPORT_COLUMNS = (
    "algorithm",
    "parameters",
    "gini",
    "efficiency",
    "relative_efficiency",
    "mean_E_q_over_Gamma",
    "mean_G_q",
    "wall_time",
)


# ---------------------------------------------------------------------------
# Synthetic traffic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    """``uniform(lo, hi)``, ``lognormal(mu, sigma)`` or ``equal(value)``."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    _FIELDS = {"uniform": ("lo", "hi"), "lognormal": ("mu", "sigma"), "equal": ("value",)}

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        kind = d.get("kind")
        if kind not in cls._FIELDS:
            raise InvalidSpec(f"unknown distribution kind {kind!r}")
        try:
            vals = [float(d[k]) for k in cls._FIELDS[kind]]
        except KeyError as exc:
            raise InvalidSpec(f"{kind} distribution needs {exc.args[0]!r}") from exc
        return cls(kind, *vals)

    def to_dict(self) -> dict:
        names = self._FIELDS[self.kind]
        return {"kind": self.kind, **dict(zip(names, (self.a, self.b)))}

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, n)
        if self.kind == "lognormal":
            return rng.lognormal(self.a, self.b, n)
        return np.full(n, self.a)


def uniform(lo: float, hi: float) -> Distribution:
    return Distribution("uniform", lo, hi)


def lognormal(mu: float, sigma: float) -> Distribution:
    return Distribution("lognormal", mu, sigma)


def equal(value: float) -> Distribution:
    return Distribution("equal", value)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic query stream.

    Each item gets a base CTR and a budget once. A query shows
    ``items_per_query`` items drawn without replacement from the pool (all of
    them by default); with ``ctr_noise > 0`` its CTRs are the base values times
    a lognormal factor, clamped to ``[0, 1]``. ``repeat_single_query`` draws one
    query and emits it ``n_queries`` times.
    """

    n_items: int
    n_queries: int
    slots: int
    ctr_distribution: Distribution = field(default_factory=lambda: uniform(0.01, 0.99))
    budget_distribution: Distribution = field(default_factory=lambda: equal(1.0))
    gammas: tuple[float, ...] | None = None
    gamma_decay: float = DEFAULT_GAMMA_DECAY
    repeat_single_query: bool = False
    items_per_query: int | None = None
    ctr_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gammas is not None:
            object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if self.n_items < 1 or self.n_queries < 1 or self.slots < 1:
            raise InvalidSpec("n_items, n_queries and slots must all be >= 1")
        per_query = self.items_per_query or self.n_items
        if not self.slots <= per_query <= self.n_items:
            raise InvalidSpec(
                f"need slots <= items_per_query <= n_items, got {self.slots}, "
                f"{per_query}, {self.n_items}")
        if self.gammas is not None and len(self.gammas) != self.slots:
            raise InvalidSpec(f"{len(self.gammas)} gammas for {self.slots} slots")
        if self.gammas is None and not 0.0 < self.gamma_decay < 1.0:
            raise InvalidSpec(f"gamma_decay={self.gamma_decay} must lie in (0, 1)")
        if self.ctr_noise < 0:
            raise InvalidSpec("ctr_noise must be nonnegative")
        if self.budget_distribution.kind == "equal" and not self.budget_distribution.a > 0:
            raise InvalidSpec("equal budgets must be positive")
        if self.budget_distribution.kind == "uniform" and not self.budget_distribution.a > 0:
            raise InvalidSpec("uniform budgets need lo > 0")

    def position_multipliers(self) -> tuple[float, ...]:
        if self.gammas is not None:
            return self.gammas
        return tuple(self.gamma_decay ** k for k in range(self.slots))

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        try:
            for key in ("ctr_distribution", "budget_distribution"):
                if key in d:
                    d[key] = Distribution.from_dict(d[key])
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ctr_distribution"] = self.ctr_distribution.to_dict()
        d["budget_distribution"] = self.budget_distribution.to_dict()
        if self.gammas is not None:
            d["gammas"] = list(self.gammas)
        return d


def generate_traffic(spec: SyntheticSpec) -> Iterator[QueryInstance]:
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.n_items - 1))
    ids = [f"item-{j:0{width}d}" for j in range(spec.n_items)]
    base_ctr = np.clip(spec.ctr_distribution.sample(rng, spec.n_items), 0.0, 1.0)
    budgets = spec.budget_distribution.sample(rng, spec.n_items)
    if not np.all(budgets > 0):
        raise InvalidSpec("budget distribution produced a non-positive budget")
    gammas = spec.position_multipliers()
    per_query = spec.items_per_query or spec.n_items
    qwidth = len(str(spec.n_queries - 1))

    def draw(t: int) -> QueryInstance:
        if per_query == spec.n_items:
            chosen = np.arange(spec.n_items)
        else:
            chosen = np.sort(rng.choice(spec.n_items, size=per_query, replace=False))
        ctr = base_ctr[chosen]
        if spec.ctr_noise > 0:
            ctr = np.clip(ctr * rng.lognormal(0.0, spec.ctr_noise, per_query), 0.0, 1.0)
        items = tuple(Item(ids[j], float(c), float(budgets[j]))
                      for j, c in zip(chosen, ctr))
        return validate_query(QueryInstance(f"q{t:0{qwidth}d}", items, gammas))

    if spec.repeat_single_query:
        q = draw(0)
        for _ in range(spec.n_queries):
            yield q
    else:
        for t in range(spec.n_queries):
            yield draw(t)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

ALGORITHMS = {
    "ota": {"lambda": None, "iters": DEFAULT_ITERS},
    "otd_theoretical": {"lambda": None, "iters": DEFAULT_ITERS},
    "ctr": {},
    "dmd": {"b": 1.0, "eta": None},
    "throttle": {"b": 1.0},
}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "AlgorithmSpec":
        d = dict(d)
        name = d.pop("name", None)
        if name not in ALGORITHMS:
            raise InvalidConfig(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}")
        unknown = set(d) - set(ALGORITHMS[name])
        if unknown:
            raise InvalidConfig(f"{name}: unknown parameters {sorted(unknown)}")
        return cls(name, d)

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}

    def is_grid(self) -> bool:
        return any(isinstance(v, (list, tuple)) for v in self.params.values())

    def expand(self) -> list["AlgorithmSpec"]:
        keys = sorted(self.params)
        axes = [v if isinstance(v, (list, tuple)) else [v]
                for v in (self.params[k] for k in keys)]
        return [AlgorithmSpec(self.name, dict(zip(keys, combo)))
                for combo in itertools.product(*axes)]

    def resolved(self) -> dict:
        """Parameters with defaults filled in, validated."""
        p = dict(ALGORITHMS[self.name])
        p.update(self.params)
        if self.name in ("ota", "otd_theoretical"):
            if p["lambda"] is None:
                raise InvalidConfig(f"{self.name} needs a lambda")
            try:
                p["lambda"], p["iters"] = float(p["lambda"]), int(p["iters"])
                SolverParams(lam=p["lambda"], max_iters=p["iters"])
            except (TypeError, ValueError) as exc:
                raise InvalidConfig(f"{self.name}: {exc}") from exc
        if self.name in ("dmd", "throttle"):
            p["b"] = float(p["b"])
            if not p["b"] > 0:
                raise InvalidConfig(f"{self.name}: b must be positive")
        if self.name == "dmd" and p["eta"] is not None:
            p["eta"] = float(p["eta"])
            if not p["eta"] >= 0:
                raise InvalidConfig("dmd: eta must be nonnegative")
        return p


@dataclass(frozen=True)
class ExperimentConfig:
    """``traffic`` is either a :class:`SyntheticSpec` or a query-log path."""

    traffic: SyntheticSpec | str
    algorithms: tuple[AlgorithmSpec, ...]
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.algorithms:
            raise InvalidConfig("at least one algorithm is required")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
        traffic = d.get("traffic")
        if isinstance(traffic, dict) and "synthetic" in traffic:
            traffic = SyntheticSpec.from_dict(traffic["synthetic"])
        elif isinstance(traffic, dict) and "log" in traffic:
            path = Path(traffic["log"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            traffic = str(path)
        else:
            raise InvalidConfig('traffic must be {"synthetic": {...}} or {"log": "path"}')
        algos = tuple(AlgorithmSpec.from_dict(a) for a in d.get("algorithms", ()))
        return cls(traffic, algos, d.get("output"), int(d.get("seed", 0)))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.traffic, self.algorithms, self.output, int(seed))


def load_traffic(traffic: SyntheticSpec | str) -> list[QueryInstance]:
    if isinstance(traffic, SyntheticSpec):
        return list(generate_traffic(traffic))
    with open(traffic) as fh:
        return list(read_query_log(fh))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    algorithm: str
    parameters: dict
    gini: float
    efficiency: float
    relative_efficiency: float
    mean_E_q_over_Gamma: float
    mean_G_q: float
    wall_time: float

    def __post_init__(self):
        for c in REPORT_COLUMNS[2:]:
            setattr(self, c, float(getattr(self, c)))

    def as_record(self) -> dict:
        d = asdict(self)
        d["parameters"] = json.dumps(self.parameters, sort_keys=True, separators=(",", ":"))
        return d


@dataclass
class RunReport:
    rows: list[ReportRow] = field(default_factory=list)

    def row(self, algorithm: str, **params) -> ReportRow:
        for r in self.rows:
            if r.algorithm == algorithm and all(r.parameters.get(k) == v for k, v in params.items()):
                return r
        raise KeyError((algorithm, params))

    def write_csv(self, fh: IO[str]):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            rec = r.as_record()
            w.writerow([_fmt(rec[c]) for c in REPORT_COLUMNS])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=2)

    def plot_data(self) -> dict:
        series: dict[str, dict[str, list]] = {}
        for r in self.rows:
            s = series.setdefault(r.algorithm, {"x": [], "y": [], "parameters": []})
            s["x"].append(r.gini)
            s["y"].append(r.relative_efficiency)
            s["parameters"].append(r.parameters)
        return series

    @classmethod
    def read_csv(cls, fh: IO[str]) -> "RunReport":
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise InvalidConfig(f"unexpected report columns {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(ReportRow(
                algorithm=rec["algorithm"],
                parameters=json.loads(rec["parameters"]),
                **{c: float(rec[c]) for c in REPORT_COLUMNS[2:]},
            ))
        return cls(rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

class _Tally:
    """Accumulator plus per-query-group sums of impression vectors."""

    def __init__(self):
        self.acc = AccumulatorBuilder()
        self.groups: dict[tuple, list] = {}

    def add(self, q: QueryInstance, imp: np.ndarray):
        self.acc.add_impressions(q, imp)
        key = (q.query_id, q.item_ids, q.gammas)
        g = self.groups.get(key)
        if g is None:
            self.groups[key] = [q, 1, imp.astype(float, copy=True)]
        else:
            g[1] += 1
            g[2] += imp

    def merge(self, other: "_Tally"):
        self.acc.merge(other.acc)
        for key, (q, n, s) in other.groups.items():
            g = self.groups.get(key)
            if g is None:
                self.groups[key] = [q, n, s.copy()]
            else:
                g[1] += n
                g[2] += s

    def query_means(self) -> tuple[float, float]:
        e_sum = g_sum = 0.0
        total = 0
        for q, n, s in self.groups.values():
            mean = s / n
            e_sum += n * metrics.e_q(mean, q.ctrs) / q.gamma_total
            g_sum += n * metrics.g_q(mean, q.budgets)
            total += n
        return e_sum / total, g_sum / total


class _SolveCache:
    """Memoizes the deterministic stage-1 solution of repeated queries."""

    def __init__(self, lam: float, iters: int):
        self.params = SolverParams(lam=lam, max_iters=iters)
        self._cache: dict[tuple, np.ndarray] = {}

    def __call__(self, q: QueryInstance) -> np.ndarray:
        key = (q.item_ids, q.ctrs.tobytes(), q.budgets.tobytes(), q.gammas)
        x = self._cache.get(key)
        if x is None:
            x, _ = frank_wolfe(q.budgets, q.ctrs, q.gamma_total, self.params)
            self._cache[key] = x
        return x


def _stateless_impressions(name: str, p: dict, seed: int):
    if name == "ctr":
        return lambda t, q: rank_by_ctr(q).impressions(q)
    solve = _SolveCache(float(p["lambda"]), int(p["iters"]))
    if name == "otd_theoretical":
        return lambda t, q: solve(q)

    def ota(t, q):
        alpha = solve(q)
        return rank_probabilistic(alpha, q.n_slots, RngStream(seed, t)).impressions(q)
    return ota


def _replay_stateless(fn, queries: Sequence[QueryInstance], threads: int) -> _Tally:
    chunks = [range(i, min(i + CHUNK, len(queries))) for i in range(0, len(queries), CHUNK)]

    def work(idx: range) -> _Tally:
        tally = _Tally()
        for t in idx:
            tally.add(queries[t], fn(t, queries[t]))
        return tally

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    total = _Tally()
    for part in parts:
        total.merge(part)
    return total


def _replay_pacer(name: str, p: dict, queries: Sequence[QueryInstance], seed: int) -> _Tally:
    eta = None if p.get("eta") is None else float(p["eta"])
    state = new_pacer_state(len(queries), b=float(p["b"]), eta=eta)
    tally = _Tally()
    for t, q in enumerate(queries):
        if name == "dmd":
            a, state = dmd_step(state, q)
        else:
            a, state = throttle_step(state, q, RngStream(seed, t))
        tally.add(q, a.impressions(q))
    return tally


def run_algorithm(spec: AlgorithmSpec, queries: Sequence[QueryInstance], seed: int,
                  threads: int = 1) -> _Tally:
    p = spec.resolved()
    if spec.name in ("dmd", "throttle"):
        return _replay_pacer(spec.name, p, queries, seed)
    return _replay_stateless(_stateless_impressions(spec.name, p, seed), queries, threads)


def replay(config: ExperimentConfig, threads: int = 1,
           queries: Sequence[QueryInstance] | None = None) -> RunReport:
    """Run every configured algorithm over the traffic and collect a report."""
    for a in config.algorithms:
        if a.is_grid():
            raise InvalidConfig(f"{a.name}: list-valued parameters need sweep, not run")
    if queries is None:
        queries = load_traffic(config.traffic)
    if not queries:
        raise InvalidConfig("traffic is empty")

    ctr_spec = AlgorithmSpec("ctr")
    reference = None
    report = RunReport()
    for spec in config.algorithms:
        log.info("replaying %s %s over %d queries", spec.name, spec.params, len(queries))
        start = time.perf_counter()
        tally = run_algorithm(spec, queries, config.seed, threads)
        wall = time.perf_counter() - start
        acc = tally.acc.freeze()
        eff = metrics.horizon_efficiency(acc)
        if spec.name == "ctr":
            reference = eff if reference is None else reference
        elif reference is None:
            reference = metrics.horizon_efficiency(
                run_algorithm(ctr_spec, queries, config.seed, threads).acc.freeze())
        mean_e, mean_g = tally.query_means()
        report.rows.append(ReportRow(
            algorithm=spec.name,
            parameters=spec.resolved() if spec.name != "ctr" else {},
            gini=metrics.horizon_gini(acc),
            efficiency=eff,
            relative_efficiency=eff / reference if reference > 0 else math.nan,
            mean_E_q_over_Gamma=mean_e,
            mean_G_q=mean_g,
            wall_time=wall,
        ))
    return report


def expand_config(config: ExperimentConfig) -> ExperimentConfig:
    algos = [a2 for a in config.algorithms for a2 in a.expand()]
    return ExperimentConfig(config.traffic, tuple(algos), config.output, config.seed)


def sweep(config: ExperimentConfig, threads: int = 1,
          queries: Sequence[QueryInstance] | None = None) -> RunReport:
    """Cross product of each algorithm's parameter lists, one row per combination."""
    return replay(expand_config(config), threads=threads, queries=queries)


def strip_wall_time(csv_text: str) -> str:
    """Report text with the wall_time column blanked, for reproducibility checks."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    col = rows[0].index("wall_time")
    for r in rows[1:]:
        r[col] = ""
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def write_report(report: RunReport, path: str | Path):
    with open(path, "w", newline="") as fh:
        report.write_csv(fh)


__all__ = [
    "AlgorithmSpec",
    "Distribution",
    "ExperimentConfig",
    "ReportRow",
    "RunReport",
    "SyntheticSpec",
    "equal",
    "expand_config",
    "generate_traffic",
    "load_traffic",
    "lognormal",
    "replay",
    "run_algorithm",
    "strip_wall_time",
    "sweep",
    "uniform",
    "write_report",
]
