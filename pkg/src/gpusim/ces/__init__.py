from .control import (CESConfig, CESReport, EnergyModel, NodeSeries, NodeState, energy_savings,
                      future_nodes_trend, job_arrival_check, node_series_from_result,
                      periodic_check, recent_nodes_trend, run_ces_simulation)
from .forecast import (ForecastConfig, NodeForecaster, forecast_features, forecast_running_nodes,
                       load_holidays, resample)
from .synthetic import synthetic_node_series
from ..scoring import smape

__all__ = [
    "CESConfig", "CESReport", "EnergyModel", "NodeSeries", "NodeState", "energy_savings",
    "future_nodes_trend", "job_arrival_check", "node_series_from_result", "periodic_check",
    "recent_nodes_trend", "run_ces_simulation", "ForecastConfig", "NodeForecaster",
    "forecast_features", "forecast_running_nodes", "load_holidays", "resample", "smape", "synthetic_node_series",
]
