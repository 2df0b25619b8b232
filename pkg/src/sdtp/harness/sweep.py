"""Parameter sweeps over isolated simulator runs."""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..sim.metrics import CSV_FIELDS, MetricsSummary
from ..sim.network import run
from ..sim.scenario import Scenario, ScenarioInvalid

# CLI/axis spelling -> Scenario attribute
AXES = {
    "loss_rate": "loss_rate",
    "control_delay_ms": "control_delay_ms",
    "seed": "seed",
    "k": "k",
    "placement.k": "k",
    "loss_threshold": "loss_threshold",
    "placement.loss_threshold": "loss_threshold",
    "cn_period_ms": "cn_period_ms",
    "cache_capacity": "cache_capacity",
    "processing_us": "processing_us",
    "syn_timeout_ms": "syn_timeout_ms",
    "rto_min_ms": "rto_min_ms",
}
_INT_AXES = {"seed", "k", "cache_capacity", "processing_us"}
METRICS = ("conn_delay_ms", "mean_e2e_ms", "jitter_ms", "retx_count", "undelivered")
AGG_FIELDS = ("scenario_id", "protocol", "axis", "value", "n") + tuple(
    f"{m}_{s}" for m in METRICS for s in ("mean", "stdev"))


def coerce(axis: str, raw) -> object:
    attr = AXES[axis]
    return int(raw) if attr in _INT_AXES else float(raw)


def points(base: Scenario, axis: str, values: Sequence, reps: int,
           protocols: Optional[Sequence[str]] = None) -> List[Tuple[object, Scenario]]:
    """One scenario per (protocol, value, repetition); seeds are base + rep."""
    if axis not in AXES:
        raise ScenarioInvalid("axis", f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    if not values:
        raise ScenarioInvalid("values", "empty value list")
    if reps < 1:
        raise ScenarioInvalid("reps", "need at least one repetition")
    attr = AXES[axis]
    out = []
    for proto in protocols or (base.protocol,):
        for v in values:
            v = coerce(axis, v)
            for rep in range(reps):
                seed = (v if attr == "seed" else base.seed) + rep
                sc = base.with_(protocol=proto, seed=seed, **({} if attr == "seed" else {attr: v}))
                out.append((v, sc.validate()))
    return out


def _one(sc: Scenario) -> MetricsSummary:
    return run(sc).summary()


def run_points(scenarios: Iterable[Scenario], jobs: int = 1) -> List[MetricsSummary]:
    scenarios = list(scenarios)
    if jobs <= 1:
        return [_one(sc) for sc in scenarios]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one, scenarios))


@dataclass
class SweepResult:
    axis: str
    rows: List[MetricsSummary]
    values: List[object]  # axis value behind each row
    aggregate: List[Dict[str, object]]


def aggregate(axis: str, values: Sequence, rows: Sequence[MetricsSummary]) -> List[Dict[str, object]]:
    groups: Dict[tuple, List[MetricsSummary]] = {}
    for v, r in zip(values, rows):
        groups.setdefault((r.scenario_id, r.protocol, v), []).append(r)
    out = []
    for (sid, proto, v), members in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2])):
        rec: Dict[str, object] = {"scenario_id": sid, "protocol": proto, "axis": axis, "value": v, "n": len(members)}
        for m in METRICS:
            xs = [float(getattr(r, m)) for r in members if getattr(r, m) is not None]
            rec[f"{m}_mean"] = statistics.fmean(xs) if xs else None
            rec[f"{m}_stdev"] = statistics.stdev(xs) if len(xs) > 1 else 0.0 if xs else None
        out.append(rec)
    return out


def sweep(base: Scenario, axis: str, values: Sequence, reps: int = 1,
          protocols: Optional[Sequence[str]] = None, jobs: int = 1) -> SweepResult:
    pts = points(base, axis, values, reps, protocols)
    rows = run_points((sc for _, sc in pts), jobs)
    order = sorted(range(len(rows)), key=lambda i: (rows[i].protocol, pts[i][0], rows[i].seed))
    rows = [rows[i] for i in order]
    vals = [pts[i][0] for i in order]
    return SweepResult(axis, rows, vals, aggregate(axis, vals, rows))


# -- CSV

def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def rows_csv(rows: Sequence[MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def read_rows_csv(text: str) -> List[MetricsSummary]:
    return [MetricsSummary.from_row(r) for r in csv.DictReader(io.StringIO(text))]


def dicts_csv(records: Sequence[Dict[str, object]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        w.writerow([_cell(rec.get(h)) for h in header])
    return buf.getvalue()


def aggregate_csv(result: SweepResult) -> str:
    return dicts_csv(result.aggregate, AGG_FIELDS)
