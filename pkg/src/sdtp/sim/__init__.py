"""Discrete-event simulation of SDTP and the TCP baseline."""

from .engine import Event, EventKind, Simulator, TraceLog, TraceRecord
from .metrics import MetricsSummary, measure_connection_delay, measure_e2e_delay
from .network import Network, RunResult, run
from .scenario import ConnectionSpec, DropSpec, LinkSpec, Scenario, ScenarioInvalid, fig6, per_link_loss

__all__ = [
    "ConnectionSpec", "DropSpec", "Event", "EventKind", "LinkSpec", "MetricsSummary", "Network",
    "RunResult", "Scenario", "ScenarioInvalid", "Simulator", "TraceLog", "TraceRecord", "fig6",
    "measure_connection_delay", "measure_e2e_delay", "per_link_loss", "run",
]
