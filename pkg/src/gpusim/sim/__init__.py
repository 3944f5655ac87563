from .engine import (EventKind, JobOutcome, SimEvent, SimOptions, SimResult, check_result, schedule_vc,
                     run_many, run_simulation)
from .metrics import (MetricsSummary, compute_metrics, queuing_by_duration_group,
                      queuing_ratio_by_group)
from .placement import SimNode, consolidate_allocate
from .recorded import RecordedPlacement, place_recorded

__all__ = [
    "EventKind", "JobOutcome", "SimEvent", "SimOptions", "SimResult", "check_result",
    "run_many", "run_simulation", "schedule_vc", "MetricsSummary", "compute_metrics",
    "queuing_by_duration_group", "queuing_ratio_by_group", "SimNode", "consolidate_allocate",
    "RecordedPlacement", "place_recorded",
]
