"""Concrete problem instances built on the engine."""

from .consensus import ConsensusRegressionConfig, build_consensus_problem, ring_weights
from .pricing import (PricingConfig, build_pricing_problem, constraint_slots,
                      interference_series, naive_baseline, power_allocation,
                      pricing_graph, revenue_series, sinr_report)

__all__ = [
    "ConsensusRegressionConfig",
    "build_consensus_problem",
    "ring_weights",
    "PricingConfig",
    "build_pricing_problem",
    "pricing_graph",
    "constraint_slots",
    "power_allocation",
    "naive_baseline",
    "sinr_report",
    "interference_series",
    "revenue_series",
]
