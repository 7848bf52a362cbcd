"""Fair traffic allocation for sponsored-search slots.

Two stages per query: :func:`solve_otd_fw` finds the impression distribution
that trades expected clicks against budget-normalized fairness, and
:func:`rank_probabilistic` samples a concrete slot ranking from it.
"""
from ota.allocator import RngStream, allocate_ota, rank_probabilistic
from ota.baselines import PacerState, dmd_step, new_pacer_state, rank_by_ctr, throttle_step
from ota.errors import OTAError
from ota.metrics import (
    e_q,
    g_q,
    gini_q,
    gmd_q,
    horizon_efficiency,
    horizon_gini,
)
from ota.model import (
    CampaignAccumulator,
    ImpressionDistribution,
    Item,
    QueryInstance,
    SlotAssignment,
    accumulate,
    validate_query,
)
from ota.solver import SolveDiagnostics, SolverParams, b_inf_norm, budget_matvec, lmo, objective, solve_otd_fw

__version__ = "0.1.0"

__all__ = [
    "CampaignAccumulator",
    "ImpressionDistribution",
    "Item",
    "OTAError",
    "PacerState",
    "QueryInstance",
    "RngStream",
    "SlotAssignment",
    "SolveDiagnostics",
    "SolverParams",
    "accumulate",
    "allocate_ota",
    "b_inf_norm",
    "budget_matvec",
    "dmd_step",
    "e_q",
    "g_q",
    "gini_q",
    "gmd_q",
    "horizon_efficiency",
    "horizon_gini",
    "lmo",
    "new_pacer_state",
    "objective",
    "rank_by_ctr",
    "rank_probabilistic",
    "solve_otd_fw",
    "throttle_step",
    "validate_query",
]
