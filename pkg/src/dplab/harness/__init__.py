from .adapter import QueryDataset, query_instance_to_stream, stream_to_query_instance
from .experiments import EXPERIMENTS, ExperimentConfig, ExperimentResult, run_experiment
from .reports import Report, emit_report, parse_report

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentResult",
    "QueryDataset",
    "Report",
    "emit_report",
    "parse_report",
    "query_instance_to_stream",
    "run_experiment",
    "stream_to_query_instance",
]
