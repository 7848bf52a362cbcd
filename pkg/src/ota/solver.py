"""Stage 1: per-query optimal impression distribution by Frank-Wolfe.

Minimizes ``f(x) = (lam/2) <Bx, x> - (1 - lam) <c, x>`` over
``D = {0 <= x <= 1, sum(x) = Gamma}``, where ``B`` depends only on budgets and
``(1/2)<Bx, x>`` is the mean squared pairwise difference of ``x_j / B_j``.
``B`` is never materialized: ``Bx`` has an O(N) closed form.

Note that ``B`` is positive *semi*definite; ``<Bx, x>`` vanishes whenever
``x`` is proportional to the budget vector.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ota.errors import GammaOutOfRange, InvalidParams, LengthMismatch
from ota.model import ImpressionDistribution, QueryInstance, validate_query


class Init(str, enum.Enum):
    UNIFORM_FEASIBLE = "uniform"
    TOP_CTR = "top_ctr"


@dataclass(frozen=True)
class SolverParams:
    """``lam`` weighs fairness against efficiency (0 = pure clicks, 1 = pure fairness).

    ``tolerance`` enables early stopping once the Frank-Wolfe gap drops to or
    below it; ``None`` runs exactly ``max_iters`` iterations.
    """

    lam: float = 0.5
    max_iters: int = 1000
    tolerance: float | None = None
    init: Init = Init.UNIFORM_FEASIBLE

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise InvalidParams(f"lambda={self.lam} outside [0, 1]")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidParams(f"max_iters={self.max_iters} must be a positive integer")
        if self.tolerance is not None and not self.tolerance >= 0.0:
            raise InvalidParams(f"tolerance={self.tolerance} must be nonnegative")
        object.__setattr__(self, "init", Init(self.init))


@dataclass
class SolveDiagnostics:
    iters_run: int
    objective_trace: list[float] = field(repr=False)
    final_fw_gap: float
    b_inf_norm: float
    a_priori_bound: float


def _check_lengths(*arrays):
    n = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != n:
            raise LengthMismatch(f"shape {a.shape} does not match {n}")


def budget_matvec(x, budgets) -> np.ndarray:
    """``Bx`` in O(N): ``(4/N^2) (1/B_i) (N x_i/B_i - sum_h x_h/B_h)``."""
    x = np.asarray(x, dtype=float)
    inv = 1.0 / np.asarray(budgets, dtype=float)
    _check_lengths(x, inv)
    n = x.shape[0]
    r = x * inv
    return (4.0 / (n * n)) * inv * (n * r - r.sum())


def b_inf_norm(budgets) -> float:
    """Max absolute row sum of ``B``."""
    inv = 1.0 / np.asarray(budgets, dtype=float)
    n = inv.shape[0]
    rows = (4.0 / (n * n)) * ((n - 1) * inv * inv + inv * (inv.sum() - inv))
    return float(rows.max())


def objective(x, budgets, ctrs, lam: float) -> float:
    x = np.asarray(x, dtype=float)
    c = np.asarray(ctrs, dtype=float)
    _check_lengths(x, c)
    bx = budget_matvec(x, budgets)
    return float(0.5 * lam * np.dot(bx, x) - (1.0 - lam) * np.dot(c, x))


def gradient(x, budgets, ctrs, lam: float) -> np.ndarray:
    c = np.asarray(ctrs, dtype=float)
    return lam * budget_matvec(x, budgets) - (1.0 - lam) * c


def lmo(grad, gamma_total: float) -> np.ndarray:
    """Exact minimizer of ``<grad, s>`` over ``{0 <= s <= 1, sum(s) = gamma_total}``.

    Ones go to the ``floor(gamma_total)`` smallest gradient entries and the
    fractional remainder to the next one. Ties go to the lower index.
    Selection is a partition, O(N) expected, plus a sort of the chosen few.
    """
    g = np.asarray(grad, dtype=float)
    n = g.shape[0]
    if gamma_total < 0.0 or gamma_total > n + 1e-12 or math.isnan(gamma_total):
        raise GammaOutOfRange(f"gamma_total={gamma_total} outside [0, {n}]")
    gamma_total = min(gamma_total, float(n))
    whole = int(math.floor(gamma_total))
    frac = gamma_total - whole
    m = whole + (1 if frac > 0.0 else 0)
    s = np.zeros(n)
    if m == 0:
        return s
    if m == 1:
        # argmin returns the first minimal index
        s[int(np.argmin(g))] = gamma_total
        return s
    if m == n:
        chosen = np.arange(n)
    else:
        kth = np.partition(g, m - 1)[m - 1]
        below = (g < kth).nonzero()[0]
        tied = (g == kth).nonzero()[0][: m - below.size]
        chosen = np.concatenate([below, tied])
    order = chosen[np.lexsort((chosen, g[chosen]))]
    s[order[:whole]] = 1.0
    if frac > 0.0:
        s[order[whole]] = frac
    return s


def initial_point(ctrs: np.ndarray, gamma_total: float, init: Init) -> np.ndarray:
    n = ctrs.shape[0]
    if init is Init.TOP_CTR:
        return lmo(-ctrs, gamma_total)
    return np.full(n, gamma_total / n)


def frank_wolfe(budgets, ctrs, gamma_total: float, params: SolverParams):
    """Run the Frank-Wolfe loop on raw arrays; returns ``(x, diagnostics)``.

    Iterations are numbered ``t = 0..T`` with step ``2/(t+2)``, so the first
    step (``t = 0``) lands exactly on an oracle vertex and the trace holds
    ``f(x_0), ..., f(x_T)``.
    """
    budgets = np.asarray(budgets, dtype=float)
    ctrs = np.asarray(ctrs, dtype=float)
    _check_lengths(budgets, ctrs)
    lam = params.lam
    lin = (1.0 - lam) * ctrs

    x = initial_point(ctrs, gamma_total, params.init)
    grad = lam * budget_matvec(x, budgets) - lin
    trace: list[float] = []
    t_last = params.max_iters
    for t in range(params.max_iters + 1):
        s = lmo(grad, gamma_total)
        if t > 0 and params.tolerance is not None:
            if float(np.dot(grad, x - s)) <= params.tolerance:
                t_last = t - 1
                break
        beta = 2.0 / (t + 2.0)
        x = (1.0 - beta) * x + beta * s
        np.clip(x, 0.0, 1.0, out=x)
        bx = budget_matvec(x, budgets)
        grad = lam * bx - lin
        trace.append(float(0.5 * lam * np.dot(bx, x) - np.dot(lin, x)))

    gap = float(np.dot(grad, x - lmo(grad, gamma_total)))
    norm = b_inf_norm(budgets)
    diag = SolveDiagnostics(
        iters_run=t_last,
        objective_trace=trace,
        final_fw_gap=gap,
        b_inf_norm=norm,
        a_priori_bound=2.0 * lam * norm / (t_last + 2.0),
    )
    return x, diag


def solve_otd_fw(query: QueryInstance, params: SolverParams):
    """Optimal impression distribution for one query.

    Returns ``(ImpressionDistribution, SolveDiagnostics)``.
    """
    validate_query(query)
    x, diag = frank_wolfe(query.budgets, query.ctrs, query.gamma_total, params)
    return ImpressionDistribution(x, query.gamma_total), diag
