"""Mean-variance, cost-minimizing and CVaR-constrained portfolios of wind and PV plants."""

from .analysis import balance_stats, cv_ratio, diversity, normalize_to_risk, verify_appendix_a
from .ingest import DemandGen, PlantSeries, build_demandgen, load_dataset, prune_correlated
from .models import KINDS, Finance, FrontierPoint, ScenarioConfig, assemble, frontier_sweep, lcoe
from .sampling import SamplePlan, lhs_sample

__all__ = [
    "KINDS", "DemandGen", "Finance", "FrontierPoint", "PlantSeries", "SamplePlan", "ScenarioConfig",
    "assemble", "balance_stats", "build_demandgen", "cv_ratio", "diversity", "frontier_sweep",
    "lcoe", "lhs_sample", "load_dataset", "normalize_to_risk", "prune_correlated",
    "verify_appendix_a",
]
__version__ = "0.1.0"
