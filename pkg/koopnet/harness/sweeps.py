""" Parameter sweeps: one aggregated row per value of the swept axis. """

import copy
import logging

from koopnet.conf import set_path
from koopnet.harness.episode import EpisodeSetup, run_episodes
from koopnet.harness.metrics import METRIC_COLUMNS, aggregate_metrics


logger = logging.getLogger("koopnet")

# axis -> config path it overrides
AXES = {
    "outage": "channel.outage_target",
    "snr": "channel.gamma0_db",
    "kappa": "channel.kappa",
    "delta": "scheduler.delta",
    "ca-failures": "episode.ca_failures",
}

SWEEP_COLUMNS = ["axis", "value", "sc_power_w", "ca_power_w"] + METRIC_COLUMNS


def sweep_config(config, axis, value):
    if axis not in AXES:
        raise ValueError("Unknown sweep axis '{}', expected one of {}".format(axis, ", ".join(sorted(AXES))))
    config = copy.deepcopy(config)
    if axis == "ca-failures":
        base = config["episode"].get("ca_failures") or {}
        value = {"start": int(base.get("start", 1)), "length": int(value), "every": base.get("every")}
    return set_path(config, AXES[axis], value)


def run_sweep(config, axis, values, model, coeffs, episodes=None, seed=None, workers=None, solution=None):
    """ Returns one row per value with the swept value, the link powers and the aggregated
        metrics. An empty value list gives an empty table.
    """
    episode = config["episode"]
    episodes = int(episodes if episodes is not None else episode["episodes"])
    seed = int(seed if seed is not None else episode["seed"])
    workers = int(workers if workers is not None else episode.get("workers", 1))

    rows = []
    for value in values:
        swept = sweep_config(config, axis, value)
        setup = EpisodeSetup.from_config(swept, model, coeffs, solution=solution)
        # The LQR does not depend on the swept axes
        solution = setup.solution
        metrics = aggregate_metrics(run_episodes(setup, episodes, seed, workers), setup.scheduler.lam)
        row = {"axis": axis, "value": value, "sc_power_w": setup.sc_power, "ca_power_w": setup.ca_power}
        row.update(metrics.as_row())
        rows.append(row)
        logger.info("Sweep %s=%s: total cost %.6g, transmissions %.2f, SC power %.4g W",
                    axis, value, metrics.total_cost, metrics.transmissions, setup.sc_power)
    return rows
