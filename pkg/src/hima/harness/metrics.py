"""Macro-efficiency metrics recomputed from a match trace.

PBR is the share of ticks spent at the supply maximum. RUR is resources
spent up to the first tick at maximum supply (or over the whole game when it
is never reached). APU is the mean supply usage ratio up to that tick. TR is
the share of the catalog's technologies completed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..world.catalog import load_catalog

SERIES_KEYS = ("supply_used", "supply_cap", "spent_minerals", "spent_gas", "techs")


class IncompleteTrace(ValueError):
    pass


@dataclass
class SideMetrics:
    pbr: float
    rur: int
    apu: float
    tr: float
    max_supply_reached: bool
    first_max_tick: Optional[int] = None


@dataclass
class MetricReport:
    win_rate: list  # per side, 1.0 / 0.0 for a single match
    pbr: list
    rur: list
    apu: list
    tr: list
    max_supply_reached: list = field(default_factory=list)

    def rows(self) -> list:
        return [{"side": i, "win_rate": self.win_rate[i], "pbr": self.pbr[i], "rur": self.rur[i],
                 "apu": self.apu[i], "tr": self.tr[i], "max_supply_reached": self.max_supply_reached[i]}
                for i in range(len(self.pbr))]

    def to_tsv(self) -> str:
        head = ["side", "win_rate", "pbr", "rur", "apu", "tr", "max_supply_reached"]
        lines = ["\t".join(head)]
        for r in self.rows():
            lines.append("\t".join(f"{r[h]:.6f}" if isinstance(r[h], float) else str(r[h]) for h in head))
        return "\n".join(lines) + "\n"


def side_metrics(series: dict, tech_total: int, supply_max: int = 200) -> SideMetrics:
    for key in SERIES_KEYS:
        if key not in series:
            raise IncompleteTrace(f"series is missing {key!r}")
    n = len(series["supply_used"])
    if n == 0:
        raise IncompleteTrace("empty series")
    if any(len(series[k]) != n for k in SERIES_KEYS):
        raise IncompleteTrace("series lengths differ")
    if tech_total < 1:
        raise IncompleteTrace("technology total must be positive")
    used, cap = series["supply_used"], series["supply_cap"]
    at_max = [u >= supply_max for u in used]
    first = next((i for i, m in enumerate(at_max) if m), None)
    end = n - 1 if first is None else first
    rur = series["spent_minerals"][end] + series["spent_gas"][end]
    ratios = [min(1.0, used[i] / cap[i]) if cap[i] > 0 else 0.0 for i in range(end + 1)]
    return SideMetrics(pbr=sum(at_max) / n, rur=rur, apu=sum(ratios) / len(ratios),
                       tr=min(1.0, series["techs"][-1] / tech_total), max_supply_reached=first is not None,
                       first_max_tick=first)


def _trace_of(result) -> dict:
    if isinstance(result, dict):
        return result
    if isinstance(result, (str, Path)):
        return json.loads(Path(result).read_text())
    return result.trace


def compute_metrics(result, catalogs: Optional[Sequence] = None, supply_max: int = 200) -> MetricReport:
    """Metrics for both sides of a MatchResult, trace dict or trace file."""
    trace = _trace_of(result)
    for key in ("series", "winner"):
        if key not in trace:
            raise IncompleteTrace(f"trace is missing {key!r}")
    series = trace["series"]
    if len(series) != 2:
        raise IncompleteTrace("trace needs one series per side")
    if catalogs is not None:
        totals = [len(c.tech_ids) for c in catalogs]
    elif "tech_total" in trace:
        totals = list(trace["tech_total"])
    elif "races" in trace:
        totals = [len(load_catalog(r).tech_ids) for r in trace["races"]]
    else:
        raise IncompleteTrace("cannot determine the technology totals")
    sides = [side_metrics(series[i], totals[i], supply_max) for i in range(2)]
    winner = trace["winner"]
    return MetricReport(win_rate=[1.0 if winner == i else 0.0 for i in range(2)],
                        pbr=[s.pbr for s in sides], rur=[s.rur for s in sides], apu=[s.apu for s in sides],
                        tr=[s.tr for s in sides], max_supply_reached=[s.max_supply_reached for s in sides])
