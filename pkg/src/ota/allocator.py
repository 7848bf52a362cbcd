"""Stage 2: turn an impression distribution into a concrete slot ranking.

Slots are filled best position first. Each slot draws one of the items not yet
placed with probability proportional to its ``alpha`` among the remaining
pool. Items with ``alpha == 0`` can never be drawn; once no positive-weight
item remains the trailing slots stay empty.
"""
from __future__ import annotations

import numpy as np

from ota.errors import DegenerateAllZeroAlpha, InvalidParams
from ota.model import ImpressionDistribution, QueryInstance, SlotAssignment
from ota.solver import SolveDiagnostics, SolverParams, solve_otd_fw


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with different ids are statistically independent, and a given pair
    always yields the same draws, no matter which worker consumes it.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def random(self, size=None):
        return self.generator.random(size)


def rank_probabilistic(alpha: ImpressionDistribution | np.ndarray, n_slots: int,
                       rng: RngStream) -> SlotAssignment:
    """Sequential proportional sampling without replacement, O(N) per slot."""
    w = np.array(alpha.alpha if isinstance(alpha, ImpressionDistribution) else alpha,
                 dtype=float)
    if n_slots < 0 or n_slots > w.shape[0]:
        raise InvalidParams(f"{n_slots} slots for {w.shape[0]} items")
    if not np.any(w > 0.0):
        raise DegenerateAllZeroAlpha("alpha has no positive entry")
    w[w < 0.0] = 0.0
    u = rng.random(n_slots)
    slots = []
    for k in range(n_slots):
        cum = np.cumsum(w)
        total = cum[-1]
        if not total > 0.0:
            break
        j = int(np.searchsorted(cum, u[k] * total, side="right"))
        if j >= w.shape[0] or w[j] <= 0.0:
            # u * total rounded up onto the final plateau
            j = int(np.flatnonzero(w > 0.0)[-1])
        slots.append(j)
        w[j] = 0.0
    return SlotAssignment(tuple(slots))


def allocate_ota(query: QueryInstance, params: SolverParams, rng: RngStream
                 ) -> tuple[SlotAssignment, ImpressionDistribution, SolveDiagnostics]:
    """Solve for the impression distribution, then sample a ranking from it."""
    alpha, diag = solve_otd_fw(query, params)
    return rank_probabilistic(alpha, query.n_slots, rng), alpha, diag
