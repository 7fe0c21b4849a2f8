from dataclasses import dataclass, field

import numpy as np


EPISODE_COLUMNS = [
    "episode", "seed", "slots", "truncated", "control_cost", "transmissions", "transmission_rate",
    "deliveries", "total_cost", "aoi_mean", "aoi_var", "battery_final", "starved", "overflow",
    "cache_empty", "saturated",
]

METRIC_COLUMNS = [
    "episodes", "control_cost", "control_cost_var", "transmissions", "transmissions_var",
    "transmission_rate", "total_cost", "total_cost_var", "aoi_mean", "aoi_var", "battery_final",
    "starved", "overflow", "truncated",
]


def total_cost(records, lam):
    """ (ΣJ_t + λΣa_t) / T """
    if not records:
        raise ValueError("total_cost needs at least one record")
    return (sum(r.cost for r in records) + lam * sum(r.a for r in records)) / len(records)


def episode_metrics(result, lam):
    records = result.records
    slots = len(records)
    aoi = np.array([r.beta for r in records], dtype=float)
    transmissions = sum(r.a for r in records)
    return {
        "episode": result.episode,
        "seed": result.seed,
        "slots": slots,
        "truncated": result.truncated,
        "control_cost": sum(r.cost for r in records) / slots,
        "transmissions": transmissions,
        "transmission_rate": transmissions / slots,
        "deliveries": sum(1 for r in records if r.sc_delivered),
        "total_cost": total_cost(records, lam),
        "aoi_mean": float(aoi.mean()),
        "aoi_var": float(aoi.var()),
        "battery_final": records[-1].battery,
        "starved": sum(1 for r in records if r.starved),
        "overflow": sum(1 for r in records if r.overflow),
        "cache_empty": sum(1 for r in records if r.cache_empty),
        "saturated": sum(1 for r in records if r.saturated),
    }


@dataclass
class Metrics:
    episodes: int
    control_cost: float
    control_cost_var: float
    transmissions: float
    transmissions_var: float
    transmission_rate: float
    total_cost: float
    total_cost_var: float
    aoi_mean: float
    aoi_var: float
    battery_final: float
    starved: int
    overflow: int
    truncated: int
    # Per-slot means over the episodes still running at that slot
    battery_trace: list = field(default_factory=list)
    transmission_trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def as_row(self):
        return {name: getattr(self, name) for name in METRIC_COLUMNS}


def _slot_means(results, attribute):
    length = max(len(r.records) for r in results)
    totals = np.zeros(length)
    counts = np.zeros(length)
    for result in results:
        values = np.array([getattr(rec, attribute) for rec in result.records], dtype=float)
        totals[:len(values)] += values
        counts[:len(values)] += 1
    return list(totals / counts)


def aggregate_metrics(results, lam):
    """ Means (and population variances) across episodes of the per-episode metrics. """
    results = [r for r in results if r.records]
    if not results:
        raise ValueError("aggregate_metrics needs at least one non-empty episode")
    rows = [episode_metrics(r, lam) for r in results]

    def column(name):
        return np.array([row[name] for row in rows], dtype=float)

    return Metrics(
        episodes=len(rows),
        control_cost=float(column("control_cost").mean()),
        control_cost_var=float(column("control_cost").var()),
        transmissions=float(column("transmissions").mean()),
        transmissions_var=float(column("transmissions").var()),
        transmission_rate=float(column("transmission_rate").mean()),
        total_cost=float(column("total_cost").mean()),
        total_cost_var=float(column("total_cost").var()),
        aoi_mean=float(column("aoi_mean").mean()),
        aoi_var=float(column("aoi_var").mean()),
        battery_final=float(column("battery_final").mean()),
        starved=int(column("starved").sum()),
        overflow=int(column("overflow").sum()),
        truncated=int(column("truncated").sum()),
        battery_trace=_slot_means(results, "battery"),
        transmission_trace=_slot_means(results, "a"),
        rows=rows,
    )
