import os

from koopnet.dynamics import build_plant
from koopnet.koopman import generate_dataset
from koopnet.management.base import ExperimentCommand
from koopnet.storage import export_dataset_csv, save_dataset


class Command(ExperimentCommand):
    help = "Generates random-action plant trajectories for training."

    seed_path = "dataset.seed"
    flag_paths = {
        "traj": "dataset.trajectories",
        "steps": "dataset.steps",
        "output": "artifacts.dataset",
    }

    def add_experiment_arguments(self, parser):
        parser.add_argument("--traj", type=int, help="Number of trajectories")
        parser.add_argument("--steps", type=int, help="Steps per trajectory")
        parser.add_argument("--output", help="Dataset file (.npz)")
        parser.add_argument("--csv", action="store_true", help="Also export one CSV per trajectory")

    def experiment(self, config, run_dir, options):
        section = config["dataset"]
        plant = build_plant(config)
        dataset = generate_dataset(
            plant,
            int(section["trajectories"]),
            int(section["steps"]),
            seed=int(section["seed"]),
            noise_config=config["noise"],
            box=section.get("state_box"),
        )
        self.seeds["dataset"] = int(section["seed"])

        path = save_dataset(dataset, config["artifacts"]["dataset"])
        self.add_output("dataset", path)
        if options.get("csv"):
            export_dataset_csv(dataset, os.path.join(run_dir, "trajectories"))

        truncated = dataset.meta["truncated"]
        self.stdout.write("Wrote {} trajectories of {} steps to {}{}".format(
            len(dataset), section["steps"], path,
            " ({} truncated after divergence)".format(len(truncated)) if truncated else "",
        ))
