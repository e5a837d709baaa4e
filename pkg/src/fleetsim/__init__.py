"""fleetsim: seeded taxi-fleet simulation, event-informed demand models and
rollout dispatch policies."""

from .auction import brute_force_assignment, optimal_assignment, solve_square
from .citygraph import CityGraph, GraphFormatError, grid_city, line_city, ring_city
from .demand import (ArrivalProcess, OccupancyTable, SectorDemandModel,
                     build_demand_models, destination_matrix,
                     intersection_distribution, minute_arrival_process,
                     occupancy_weight, sample_local_demand)
from .events import (EventRecord, SpectralClusterer, cluster_average,
                     event_representation, rbf_similarity, sector_feature,
                     spectral_cluster)
from .harness import (DemandSettings, ExperimentConfig, MetricsReport,
                      run_benchmark, wait_time_overhead, write_report)
from .policies import (GreedyPolicy, InstantaneousAssignmentPolicy, OraclePolicy,
                       RolloutConfig, RolloutPolicy, oracle_decide_episode)
from .prediction import (HistoricalAveragePredictor, MlpRegressor,
                         gradient_check, percent_error)
from .simulation import (Control, ContractViolationError, DemandStream,
                         PolicyTrace, Request, SystemState, initial_state,
                         legal_controls, run_episode, stage_cost, transition)

__version__ = "0.1.0"

__all__ = [
    "ArrivalProcess", "CityGraph", "Control", "ContractViolationError",
    "DemandSettings", "DemandStream", "EventRecord", "ExperimentConfig",
    "GraphFormatError", "GreedyPolicy", "HistoricalAveragePredictor",
    "InstantaneousAssignmentPolicy", "MetricsReport", "MlpRegressor",
    "OccupancyTable", "OraclePolicy", "PolicyTrace", "Request",
    "RolloutConfig", "RolloutPolicy", "SectorDemandModel", "SpectralClusterer",
    "SystemState", "brute_force_assignment", "build_demand_models",
    "cluster_average", "destination_matrix", "event_representation",
    "gradient_check", "grid_city", "initial_state", "intersection_distribution",
    "legal_controls", "line_city", "minute_arrival_process", "occupancy_weight",
    "optimal_assignment", "oracle_decide_episode", "percent_error",
    "rbf_similarity", "ring_city", "run_benchmark", "run_episode",
    "sample_local_demand", "sector_feature", "solve_square", "spectral_cluster",
    "stage_cost", "transition", "wait_time_overhead",
]
