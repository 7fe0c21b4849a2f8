import os

from koopnet.harness.sweeps import AXES, SWEEP_COLUMNS, run_sweep
from koopnet.management.base import ExperimentCommand
from koopnet.storage import load_coeffs, load_model, write_csv
from koopnet.utils import parse_float_list


class Command(ExperimentCommand):
    help = "Sweeps one parameter axis and writes one aggregated row per value."

    seed_path = "episode.seed"
    flag_paths = {
        "episodes": "episode.episodes",
        "slots": "episode.slots",
        "workers": "episode.workers",
        "model": "artifacts.model",
        "coeffs": "artifacts.coeffs",
    }

    def add_experiment_arguments(self, parser):
        parser.add_argument("--axis", required=True, choices=sorted(AXES))
        parser.add_argument("--values", default="", help="Comma separated values, e.g. 1e-4,1e-3")
        parser.add_argument("--episodes", type=int)
        parser.add_argument("--slots", type=int)
        parser.add_argument("--workers", type=int)
        parser.add_argument("--model")
        parser.add_argument("--coeffs")

    def experiment(self, config, run_dir, options):
        axis = options["axis"]
        values = parse_float_list(options["values"])
        if axis == "ca-failures":
            values = [int(v) for v in values]

        path = os.path.join(run_dir, "sweep_{}.csv".format(axis.replace("-", "_")))
        self.seeds["episode"] = int(config["episode"]["seed"])
        if not values:
            self.add_output("sweep", write_csv(path, SWEEP_COLUMNS, []))
            self.stdout.write("No values given, wrote an empty table to {}".format(path))
            return

        model = load_model(self.use_input("model", config["artifacts"]["model"]))
        coeffs = load_coeffs(self.use_input("coeffs", config["artifacts"]["coeffs"]))
        rows = run_sweep(config, axis, values, model, coeffs)
        self.add_output("sweep", write_csv(path, SWEEP_COLUMNS, rows))
        for row in rows:
            self.stdout.write("{}={}: total cost {:.6g}, transmissions {:.2f}, SC power {:.6g} W".format(
                axis, row["value"], row["total_cost"], row["transmissions"], row["sc_power_w"]))
