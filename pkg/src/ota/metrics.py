"""Fairness and efficiency measures.

Per-query quantities operate on an impression vector and the item budgets;
horizon quantities operate on a :class:`~ota.model.CampaignAccumulator`.
All fairness measures look at impressions *per unit of budget*.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ota.errors import DegenerateZeroMean, EmptyHorizon, LengthMismatch
from ota.model import CampaignAccumulator, ImpressionDistribution

# Row-block size for the pairwise squared-difference sum; bounds memory at
# _BLOCK * N doubles.
_BLOCK = 512


def _as_vector(alpha) -> np.ndarray:
    if isinstance(alpha, ImpressionDistribution):
        return alpha.alpha
    return np.asarray(alpha, dtype=float)


def _ratios(alpha, budgets) -> np.ndarray:
    a = _as_vector(alpha)
    b = np.asarray(budgets, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"alpha has shape {a.shape}, budgets {b.shape}")
    return a / b


def _abs_pair_sum(r: np.ndarray) -> float:
    """sum_{j,h} |r_j - r_h| via the sorted-order identity, O(N log N)."""
    n = r.shape[0]
    s = np.sort(r)
    w = 2.0 * np.arange(1, n + 1) - n - 1
    return float(2.0 * np.dot(w, s))


@dataclass(frozen=True)
class QueryMetrics:
    e_q: float
    g_q: float
    gmd_q: float
    gini_q: float | None


def gmd_q(alpha, budgets) -> float:
    """Mean absolute pairwise difference of alpha_j / B_j (divided by N^2)."""
    r = _ratios(alpha, budgets)
    n = r.shape[0]
    return _abs_pair_sum(r) / (n * n)


def gini_q(alpha, budgets) -> float:
    r = _ratios(alpha, budgets)
    n = r.shape[0]
    mu = r.sum() / n
    if not mu > 0.0:
        raise DegenerateZeroMean("Gini undefined: every alpha_j is zero")
    return _abs_pair_sum(r) / (n * n) / (2.0 * mu)


def g_q(alpha, budgets) -> float:
    """Mean squared pairwise difference of alpha_j / B_j (divided by N^2).

    Evaluated as the literal double sum in row blocks; the solver's closed-form
    matvec is deliberately not used here so the two can check each other.
    """
    r = _ratios(alpha, budgets)
    n = r.shape[0]
    total = 0.0
    for start in range(0, n, _BLOCK):
        d = r[start:start + _BLOCK, None] - r[None, :]
        total += float(np.einsum("ij,ij->", d, d))
    return total / (n * n)


def e_q(alpha, ctrs) -> float:
    a = _as_vector(alpha)
    c = np.asarray(ctrs, dtype=float)
    if a.shape != c.shape:
        raise LengthMismatch(f"alpha has shape {a.shape}, ctrs {c.shape}")
    return float(np.dot(c, a))


def query_metrics(alpha, budgets, ctrs) -> QueryMetrics:
    try:
        gini = gini_q(alpha, budgets)
    except DegenerateZeroMean:
        gini = None
    return QueryMetrics(e_q(alpha, ctrs), g_q(alpha, budgets), gmd_q(alpha, budgets), gini)


def horizon_gini(acc: CampaignAccumulator) -> float:
    """Gini index of accumulated impressions per unit budget over all enrolled items."""
    imp, _, bud = acc.arrays()
    if imp.size == 0 or not np.any(imp > 0):
        raise DegenerateZeroMean("no item received any impression")
    r = imp / bud
    n = r.shape[0]
    return _abs_pair_sum(r) / (2.0 * n * r.sum())


def horizon_efficiency(acc: CampaignAccumulator) -> float:
    """Expected clicks per query."""
    if acc.query_count < 1:
        raise EmptyHorizon("no queries accumulated")
    _, clk, _ = acc.arrays()
    return float(clk.sum()) / acc.query_count


@dataclass(frozen=True)
class HorizonMetrics:
    gini: float
    efficiency: float
    relative_efficiency: float


def horizon_metrics(acc: CampaignAccumulator, reference_efficiency: float) -> HorizonMetrics:
    """Gini and efficiency, with efficiency also relative to ``reference_efficiency``
    (normally CTR ranking on the same traffic)."""
    eff = horizon_efficiency(acc)
    rel = eff / reference_efficiency if reference_efficiency > 0 else float("nan")
    return HorizonMetrics(horizon_gini(acc), eff, rel)
