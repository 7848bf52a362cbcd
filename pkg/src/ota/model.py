"""Domain types shared across the package and the JSONL query-log format.

Items are addressed by their dense position inside a query on every hot path;
``item_id`` strings only matter when results are keyed across queries
(accumulators, logs).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from ota.errors import (
    BudgetNotPositive,
    CtrOutOfRange,
    DuplicateItemId,
    EmptyQuery,
    FewerItemsThanSlots,
    InconsistentBudget,
    InvalidAssignment,
    InvalidDistribution,
    NonDecreasingGammas,
    PositionMultiplierOutOfRange,
    UnknownItemIndex,
    ValidationError,
)

SUM_TOL = 1e-9


@dataclass(frozen=True)
class Item:
    item_id: str
    ctr: float
    budget: float


@dataclass(frozen=True)
class QueryInstance:
    """One search request: candidate items and the position multipliers of its slots.

    Construction does not validate; pass the instance through
    :func:`validate_query` at ingestion boundaries.
    """

    query_id: str
    items: tuple[Item, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_slots(self) -> int:
        return len(self.gammas)

    @cached_property
    def ctrs(self) -> np.ndarray:
        a = np.array([it.ctr for it in self.items], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def budgets(self) -> np.ndarray:
        a = np.array([it.budget for it in self.items], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def gamma_array(self) -> np.ndarray:
        a = np.array(self.gammas, dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def gamma_total(self) -> float:
        return math.fsum(self.gammas)

    @cached_property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(it.item_id for it in self.items)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "gammas": list(self.gammas),
            "items": [
                {"item_id": it.item_id, "ctr": it.ctr, "budget": it.budget}
                for it in self.items
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QueryInstance":
        items = tuple(
            Item(str(it["item_id"]), float(it["ctr"]), float(it["budget"]))
            for it in d["items"]
        )
        return cls(str(d["query_id"]), items, tuple(float(g) for g in d["gammas"]))


def validate_query(raw: QueryInstance) -> QueryInstance:
    """Return ``raw`` unchanged if every query invariant holds, else raise."""
    if not raw.items:
        raise EmptyQuery(f"query {raw.query_id!r} has no items")
    if not raw.gammas:
        raise EmptyQuery(f"query {raw.query_id!r} has no slots")
    g = raw.gammas
    for k, v in enumerate(g):
        if not (0.0 <= v <= 1.0) or math.isnan(v):
            raise PositionMultiplierOutOfRange(
                f"gammas[{k}]={v} outside [0, 1]", index=k)
    for k in range(1, len(g)):
        if not g[k] < g[k - 1]:
            raise NonDecreasingGammas(
                f"gammas must be strictly decreasing: gammas[{k - 1}]={g[k - 1]} "
                f"<= gammas[{k}]={g[k]}", index=k)
    seen = set()
    for j, it in enumerate(raw.items):
        if not (0.0 <= it.ctr <= 1.0):
            raise CtrOutOfRange(f"items[{j}].ctr={it.ctr} outside [0, 1]", index=j)
        if not (it.budget > 0.0) or math.isinf(it.budget):
            raise BudgetNotPositive(
                f"items[{j}].budget={it.budget} must be a positive finite number", index=j)
        if it.item_id in seen:
            raise DuplicateItemId(f"items[{j}].item_id={it.item_id!r} repeats", index=j)
        seen.add(it.item_id)
    if len(raw.items) < len(g):
        raise FewerItemsThanSlots(
            f"{len(raw.items)} items for {len(g)} slots", index=len(raw.items))
    return raw


@dataclass(frozen=True)
class ImpressionDistribution:
    """Virtual impression vector: per-item share of the query's impression mass."""

    alpha: np.ndarray
    gamma_total: float

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if a.ndim != 1:
            raise InvalidDistribution("alpha must be one-dimensional")
        bad = np.flatnonzero((a < 0.0) | (a > 1.0) | np.isnan(a))
        if bad.size:
            j = int(bad[0])
            raise InvalidDistribution(f"alpha[{j}]={a[j]} outside [0, 1]", index=j)
        if abs(a.sum() - self.gamma_total) > SUM_TOL:
            raise InvalidDistribution(
                f"sum(alpha)={a.sum()!r} differs from gamma_total={self.gamma_total!r}")
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "gamma_total", float(self.gamma_total))

    def __len__(self):
        return self.alpha.shape[0]


@dataclass(frozen=True)
class SlotAssignment:
    """Realized placement: ``slots[k]`` is the item index shown at slot ``k``.

    Unfilled slots can only occur at the tail, so they are simply absent.
    """

    slots: tuple[int, ...]

    def __post_init__(self):
        s = tuple(int(i) for i in self.slots)
        if len(set(s)) != len(s):
            raise InvalidAssignment(f"an item occupies more than one slot: {s}")
        object.__setattr__(self, "slots", s)

    def __len__(self):
        return len(self.slots)

    def impressions(self, query: QueryInstance) -> np.ndarray:
        """Per-item gamma-weighted impressions this assignment gives ``query``."""
        check_assignment(query, self)
        out = np.zeros(query.n_items)
        for k, j in enumerate(self.slots):
            out[j] += query.gammas[k]
        return out


def check_assignment(query: QueryInstance, a: SlotAssignment) -> None:
    if len(a.slots) > query.n_slots:
        raise InvalidAssignment(
            f"{len(a.slots)} slots assigned but query has {query.n_slots}")
    for k, j in enumerate(a.slots):
        if not 0 <= j < query.n_items:
            raise UnknownItemIndex(f"slot {k} holds item index {j}", index=k)


@dataclass(frozen=True)
class CampaignAccumulator:
    """Per-item running totals over a horizon of queries.

    Every item that appears in an accumulated query is enrolled, even if it
    never received an impression.
    """

    impressions: Mapping[str, float] = field(default_factory=dict)
    expected_clicks: Mapping[str, float] = field(default_factory=dict)
    budgets: Mapping[str, float] = field(default_factory=dict)
    query_count: int = 0

    @property
    def item_ids(self) -> list[str]:
        return list(self.budgets)

    def merge(self, other: "CampaignAccumulator") -> "CampaignAccumulator":
        b = AccumulatorBuilder.from_accumulator(self)
        b.merge(other)
        return b.freeze()

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(impressions, expected_clicks, budgets) aligned on :attr:`item_ids`."""
        ids = self.item_ids
        return (
            np.array([self.impressions[i] for i in ids], dtype=float),
            np.array([self.expected_clicks[i] for i in ids], dtype=float),
            np.array([self.budgets[i] for i in ids], dtype=float),
        )


class AccumulatorBuilder:
    """Mutable counterpart of :class:`CampaignAccumulator` for replay loops."""

    def __init__(self):
        self.impressions: dict[str, float] = {}
        self.expected_clicks: dict[str, float] = {}
        self.budgets: dict[str, float] = {}
        self.query_count = 0

    @classmethod
    def from_accumulator(cls, acc: CampaignAccumulator) -> "AccumulatorBuilder":
        b = cls()
        b.impressions = dict(acc.impressions)
        b.expected_clicks = dict(acc.expected_clicks)
        b.budgets = dict(acc.budgets)
        b.query_count = acc.query_count
        return b

    def _enroll(self, item_id: str, budget: float):
        known = self.budgets.get(item_id)
        if known is None:
            self.budgets[item_id] = budget
            self.impressions[item_id] = 0.0
            self.expected_clicks[item_id] = 0.0
        elif known != budget:
            raise InconsistentBudget(
                f"item {item_id!r} seen with budget {known} and {budget}")

    def add_impressions(self, query: QueryInstance, weights: Sequence[float] | np.ndarray):
        """Credit per-item impression mass ``weights`` (aligned with ``query.items``)."""
        for it, w in zip(query.items, weights):
            self._enroll(it.item_id, it.budget)
            if w:
                w = float(w)
                self.impressions[it.item_id] += w
                self.expected_clicks[it.item_id] += it.ctr * w
        self.query_count += 1

    def add_assignment(self, query: QueryInstance, a: SlotAssignment):
        check_assignment(query, a)
        for it in query.items:
            self._enroll(it.item_id, it.budget)
        for k, j in enumerate(a.slots):
            it = query.items[j]
            g = query.gammas[k]
            self.impressions[it.item_id] += g
            self.expected_clicks[it.item_id] += it.ctr * g
        self.query_count += 1

    def merge(self, other: CampaignAccumulator | "AccumulatorBuilder"):
        for i, b in other.budgets.items():
            self._enroll(i, b)
            self.impressions[i] += other.impressions[i]
            self.expected_clicks[i] += other.expected_clicks[i]
        self.query_count += other.query_count

    def freeze(self) -> CampaignAccumulator:
        return CampaignAccumulator(
            dict(self.impressions), dict(self.expected_clicks), dict(self.budgets),
            self.query_count)


def accumulate(acc: CampaignAccumulator, q: QueryInstance, a: SlotAssignment) -> CampaignAccumulator:
    """Return ``acc`` plus the impressions and expected clicks of one placement."""
    b = AccumulatorBuilder.from_accumulator(acc)
    b.add_assignment(q, a)
    return b.freeze()


def merge_all(accs: Iterable[CampaignAccumulator]) -> CampaignAccumulator:
    b = AccumulatorBuilder()
    for acc in accs:
        b.merge(acc)
    return b.freeze()


# Query-log I/O: one JSON object per line.

def write_query_log(queries: Iterable[QueryInstance], fh: IO[str]) -> int:
    n = 0
    for q in queries:
        fh.write(json.dumps(q.to_dict(), separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def read_query_log(fh: IO[str], validate: bool = True) -> Iterator[QueryInstance]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            q = QueryInstance.from_dict(json.loads(line))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"line {lineno}: malformed query record ({exc})",
                             index=lineno) from exc
        yield validate_query(q) if validate else q
