import os

from koopnet.harness.episode import EpisodeSetup, StepRecord, run_episodes
from koopnet.harness.metrics import EPISODE_COLUMNS, METRIC_COLUMNS, aggregate_metrics
from koopnet.management.base import ExperimentCommand
from koopnet.storage import load_coeffs, load_model, write_csv


class Command(ExperimentCommand):
    help = "Runs closed-loop episodes and writes per-slot traces plus summary metrics."

    seed_path = "episode.seed"
    flag_paths = {
        "episodes": "episode.episodes",
        "slots": "episode.slots",
        "workers": "episode.workers",
        "fallback": "episode.fallback",
        "model": "artifacts.model",
        "coeffs": "artifacts.coeffs",
    }

    def add_experiment_arguments(self, parser):
        parser.add_argument("--episodes", type=int)
        parser.add_argument("--slots", type=int, help="Slots T per episode")
        parser.add_argument("--workers", type=int, help="Worker processes")
        parser.add_argument("--fallback", choices=["cache", "b1-zero", "b2-hold"])
        parser.add_argument("--model", help="Model checkpoint")
        parser.add_argument("--coeffs", help="Error surrogate coefficients")

    def experiment(self, config, run_dir, options):
        episode = config["episode"]
        model = load_model(self.use_input("model", config["artifacts"]["model"]))
        coeffs = load_coeffs(self.use_input("coeffs", config["artifacts"]["coeffs"]))
        setup = EpisodeSetup.from_config(config, model, coeffs)

        seed = int(episode["seed"])
        self.seeds["episode"] = seed
        results = run_episodes(setup, int(episode["episodes"]), seed, int(episode.get("workers") or 1))

        fieldnames = StepRecord.fieldnames(setup.plant.state_dim, setup.plant.action_dim)
        for result in results:
            path = os.path.join(run_dir, "episodes", "ep_{}.csv".format(result.episode))
            write_csv(path, fieldnames, [r.as_row() for r in result.records])
            self.add_output("ep_{}".format(result.episode), path)

        metrics = aggregate_metrics(results, setup.scheduler.lam)
        self.add_output("summary", write_csv(os.path.join(run_dir, "summary.csv"), METRIC_COLUMNS, [metrics.as_row()]))
        self.add_output("episodes", write_csv(os.path.join(run_dir, "episodes.csv"), EPISODE_COLUMNS, metrics.rows))
        traces = [
            {"t": t, "battery": battery, "transmission_rate": rate}
            for t, (battery, rate) in enumerate(zip(metrics.battery_trace, metrics.transmission_trace))
        ]
        self.add_output("traces", write_csv(os.path.join(run_dir, "traces.csv"),
                                            ["t", "battery", "transmission_rate"], traces))

        self.stdout.write(
            "{episodes} episodes: total cost {total_cost:.6g}, control cost {control_cost:.6g}, "
            "transmissions {transmissions:.2f}, AoI mean {aoi_mean:.3f} var {aoi_var:.3f}".format(**metrics.as_row())
        )
        self.stdout.write("SC power {:.6g} W, CA power {:.6g} W".format(setup.sc_power, setup.ca_power))
        if metrics.truncated or metrics.starved or metrics.overflow:
            self.stderr.write("{} truncated episodes, {} starved slots, {} cache overflows".format(
                metrics.truncated, metrics.starved, metrics.overflow))
