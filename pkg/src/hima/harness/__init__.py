"""Match runner, tournaments, ablations, metrics and the command line."""
from .ablate import AblationSpec, AblationTable, UnknownAxis, ablate
from .match import (Builtin, ConfigError, Expert, External, Hima, MatchConfig, MatchResult, WinRate, run_match,
                    win_rate)
from .metrics import IncompleteTrace, MetricReport, compute_metrics

__all__ = [
    "AblationSpec", "AblationTable", "UnknownAxis", "ablate",
    "Builtin", "ConfigError", "Expert", "External", "Hima", "MatchConfig", "MatchResult", "WinRate",
    "run_match", "win_rate",
    "IncompleteTrace", "MetricReport", "compute_metrics",
]
