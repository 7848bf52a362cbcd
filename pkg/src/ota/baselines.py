"""Comparison allocators: CTR ranking, dual-descent pacing (DMD) and a
probabilistic throttling pacer.

The pacers treat each budget as an impression goal over the horizon: item
``j`` should collect ``b * B_j`` gamma-weighted impressions across
``horizon`` queries, i.e. ``rho_j = b * B_j / horizon`` per query.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ota.allocator import RngStream
from ota.errors import InvalidParams, NonPositiveEta
from ota.model import QueryInstance, SlotAssignment

_EPS = 1e-12


def rank_by_ctr(query: QueryInstance) -> SlotAssignment:
    """Highest CTR first; equal CTRs keep their original order."""
    order = np.argsort(-query.ctrs, kind="stable")
    return SlotAssignment(tuple(order[: query.n_slots].tolist()))


@dataclass(frozen=True)
class PacerState:
    """Per-item pacing state. Arrays are aligned with ``item_ids``; items are
    enrolled the first time they show up in a query."""

    horizon: int
    eta: float
    b: float = 1.0
    item_ids: tuple[str, ...] = ()
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    target: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consumed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    queries_seen: int = 0
    index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidParams(f"horizon={self.horizon} must be >= 1")
        if not self.b > 0:
            raise InvalidParams(f"b={self.b} must be positive")
        # eta == 0 is allowed: it freezes the duals and reduces DMD to CTR ranking
        if not self.eta >= 0:
            raise NonPositiveEta(f"eta={self.eta} must be nonnegative")


def new_pacer_state(horizon: int, b: float = 1.0, eta: float | None = None) -> PacerState:
    """Fresh state; ``eta`` defaults to ``1/sqrt(horizon)``."""
    if eta is None:
        eta = 1.0 / math.sqrt(horizon) if horizon >= 1 else 1.0
    return PacerState(horizon=int(horizon), eta=float(eta), b=float(b))


def _enroll(state: PacerState, query: QueryInstance) -> tuple[PacerState, np.ndarray]:
    index = state.index
    new_ids, new_targets = [], []
    pos = np.empty(query.n_items, dtype=np.intp)
    for j, it in enumerate(query.items):
        k = index.get(it.item_id)
        if k is None:
            if not new_ids:
                index = dict(index)
            k = len(state.item_ids) + len(new_ids)
            index[it.item_id] = k
            new_ids.append(it.item_id)
            new_targets.append(state.b * it.budget / state.horizon)
        pos[j] = k
    if new_ids:
        m = len(new_ids)
        state = replace(
            state,
            item_ids=state.item_ids + tuple(new_ids),
            dual=np.concatenate([state.dual, np.zeros(m)]),
            target=np.concatenate([state.target, np.asarray(new_targets)]),
            consumed=np.concatenate([state.consumed, np.zeros(m)]),
            index=index,
        )
    return state, pos


def _consumption(state: PacerState, query: QueryInstance, pos: np.ndarray,
                 slots: tuple[int, ...]) -> np.ndarray:
    g = np.zeros(len(state.item_ids))
    for k, j in enumerate(slots):
        g[pos[j]] += query.gammas[k]
    return g


def dmd_step(state: PacerState, query: QueryInstance) -> tuple[SlotAssignment, PacerState]:
    """One round of dual-descent pacing.

    Items are scored by ``ctr - dual`` and the best positive scores take the
    slots in order. Every enrolled item's dual then moves by
    ``eta * (consumed_now - target)`` and is floored at zero, so items ahead of
    their pace get penalized and items behind it drift back to pure CTR.
    """
    state, pos = _enroll(state, query)
    score = query.ctrs - state.dual[pos]
    order = np.argsort(-score, kind="stable")
    order = order[score[order] > 0.0][: query.n_slots]
    slots = tuple(order.tolist())
    g = _consumption(state, query, pos, slots)
    dual = np.maximum(0.0, state.dual + state.eta * (g - state.target))
    state = replace(state, dual=dual, consumed=state.consumed + g,
                    queries_seen=state.queries_seen + 1)
    return SlotAssignment(slots), state


def throttle_step(state: PacerState, query: QueryInstance, rng: RngStream
                  ) -> tuple[SlotAssignment, PacerState]:
    """Probabilistic throttling: item ``j`` enters the auction with probability
    ``min(1, target_j * t / consumed_j)``, where ``t`` counts queries including
    this one; entrants are ranked by CTR."""
    state, pos = _enroll(state, query)
    t = state.queries_seen + 1
    pace = state.target[pos] * t
    p = np.clip(pace / np.maximum(state.consumed[pos], _EPS), 0.0, 1.0)
    enter = rng.random(query.n_items) < p
    order = np.argsort(-query.ctrs, kind="stable")
    order = order[enter[order]][: query.n_slots]
    slots = tuple(order.tolist())
    g = _consumption(state, query, pos, slots)
    state = replace(state, consumed=state.consumed + g, queries_seen=t)
    return SlotAssignment(slots), state
