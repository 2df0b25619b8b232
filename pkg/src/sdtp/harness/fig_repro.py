"""Figure-ready CSV series on the built-in two-host, five-switch topology."""

from __future__ import annotations

import statistics
from typing import Dict, List, Sequence

from ..sim.network import run
from ..sim.scenario import fig6
from .sweep import dicts_csv, run_points

LOSS_RATES = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05)
FIG5_SERIES = (("TCP", "tcp", 10.0), ("SDTP@10ms", "sdtp", 10.0), ("SDTP@65ms", "sdtp", 65.0))
FIG7_SERIES = (("TCP", "tcp", 10.0), ("SDTP", "sdtp", 10.0))

FIG5_FIELDS = ("loss_rate", "series", "n", "conn_delay_ms_mean", "conn_delay_ms_stdev")
FIG7_FIELDS = ("loss_rate", "series", "n", "mean_e2e_ms_mean", "mean_e2e_ms_stdev",
               "jitter_ms_mean", "jitter_ms_stdev")
FIG8_FIELDS = ("loss_rate", "series", "seed", "seq", "delay_ms")


def _stats(xs: List[float]):
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def _grid(series, loss_rates, seeds: int, packets: int, base_seed: int, jobs: int):
    keys, scs = [], []
    for label, proto, cd in series:
        for loss in loss_rates:
            for rep in range(seeds):
                keys.append((label, loss))
                scs.append(fig6(proto, loss_rate=loss, control_delay_ms=cd, seed=base_seed + rep, packets=packets))
    rows = run_points(scs, jobs)
    grouped: Dict[tuple, list] = {}
    for key, row in zip(keys, rows):
        grouped.setdefault(key, []).append(row)
    return grouped


def fig5(seeds: int = 10, loss_rates: Sequence[float] = LOSS_RATES, packets: int = 20,
         base_seed: int = 1, jobs: int = 1) -> List[dict]:
    """Connection establishment delay versus loss rate."""
    grouped = _grid(FIG5_SERIES, loss_rates, seeds, packets, base_seed, jobs)
    out = []
    for label, _, _ in FIG5_SERIES:
        for loss in loss_rates:
            rows = grouped[(label, loss)]
            m, s = _stats([r.conn_delay_ms for r in rows if r.conn_delay_ms is not None])
            out.append({"loss_rate": loss, "series": label, "n": len(rows),
                        "conn_delay_ms_mean": m, "conn_delay_ms_stdev": s})
    return out


def fig7(seeds: int = 10, loss_rates: Sequence[float] = LOSS_RATES, packets: int = 1000,
         base_seed: int = 1, jobs: int = 1) -> List[dict]:
    """Average end-to-end packet delay (and jitter) versus loss rate."""
    grouped = _grid(FIG7_SERIES, loss_rates, seeds, packets, base_seed, jobs)
    out = []
    for label, _, _ in FIG7_SERIES:
        for loss in loss_rates:
            rows = grouped[(label, loss)]
            m, s = _stats([r.mean_e2e_ms for r in rows if r.mean_e2e_ms is not None])
            jm, js = _stats([r.jitter_ms for r in rows if r.jitter_ms is not None])
            out.append({"loss_rate": loss, "series": label, "n": len(rows), "mean_e2e_ms_mean": m,
                        "mean_e2e_ms_stdev": s, "jitter_ms_mean": jm, "jitter_ms_stdev": js})
    return out


def fig8(loss_rates: Sequence[float] = LOSS_RATES, packets: int = 1000, seed: int = 1) -> List[dict]:
    """Per-packet delay for a run of consecutive packets at each loss rate."""
    out = []
    for label, proto, cd in FIG7_SERIES:
        for loss in loss_rates:
            res = run(fig6(proto, loss_rate=loss, control_delay_ms=cd, seed=seed, packets=packets))
            for seq, d in sorted(res.e2e[1].delays_ms.items()):
                out.append({"loss_rate": loss, "series": label, "seed": seed, "seq": seq, "delay_ms": d})
    return out


FIGURES = {"fig5": (fig5, FIG5_FIELDS), "fig7": (fig7, FIG7_FIELDS), "fig8": (fig8, FIG8_FIELDS)}


def fig_repro(which: str, **kwargs) -> str:
    try:
        fn, header = FIGURES[which]
    except KeyError:
        raise ValueError(f"unknown figure {which!r}; choose from {sorted(FIGURES)}") from None
    return dicts_csv(fn(**kwargs), header)
