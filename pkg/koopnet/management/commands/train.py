import os

from koopnet.control import solve_for_model
from koopnet.dynamics import build_plant, cost_weights
from koopnet.errors import UnstabilizableModelError
from koopnet.koopman import (
    KoopmanModel,
    TrainingConfig,
    TrajectoryDataset,
    rollout_mse,
    take_windows,
    train_model,
)
from koopnet.management.base import ExperimentCommand
from koopnet.storage import load_dataset, save_model, write_csv, write_matrix
from koopnet.utils import rng_stream


class Command(ExperimentCommand):
    help = "Trains a deep Koopman model on a generated dataset and solves its LQR."

    seed_path = "training.seed"
    flag_paths = {
        "epochs": "training.epochs",
        "horizon": "training.horizon",
        "kind": "model.kind",
        "dataset": "artifacts.dataset",
        "output": "artifacts.model",
    }

    def add_experiment_arguments(self, parser):
        parser.add_argument("--epochs", type=int)
        parser.add_argument("--horizon", type=int, help="Prediction horizon N_p of the loss")
        parser.add_argument("--kind", choices=["proposed", "dkuc", "dkac"])
        parser.add_argument("--dataset", help="Dataset file produced by gen-data")
        parser.add_argument("--output", help="Model checkpoint file (.npz)")

    def experiment(self, config, run_dir, options):
        dataset = load_dataset(self.use_input("dataset", config["artifacts"]["dataset"]))
        training = TrainingConfig.from_config(config)
        self.seeds["training"] = training.seed

        # Last tenth of the trajectories is kept for the prediction check
        held = max(1, len(dataset) // 10) if len(dataset) > 1 else 0
        train_set = TrajectoryDataset(dataset.states[:len(dataset) - held],
                                      dataset.actions[:len(dataset) - held], dataset.meta)

        plant = build_plant(config)
        model = KoopmanModel.from_config(config, plant, rng_stream(training.seed, 1))
        model, history = train_model(model, train_set, training)

        path = save_model(model, config["artifacts"]["model"])
        self.add_output("model", path)
        loss_path = write_csv(os.path.join(run_dir, "loss.csv"), ["epoch", "loss"],
                              [{"epoch": e, "loss": loss} for e, loss in enumerate(history)])
        self.add_output("loss", loss_path)

        Q, B, _ = cost_weights(config, plant)
        try:
            solution = solve_for_model(model, Q, B, config, require_stable=False)
        except UnstabilizableModelError as exc:
            solution = None
            self.stderr.write("Warning: no LQR for the trained model: {}".format(exc))
        else:
            self.add_output("gain", write_matrix(os.path.join(run_dir, "gain.csv"), solution.gain))
            self.add_output("riccati", write_matrix(os.path.join(run_dir, "riccati.csv"), solution.P))

        self.stdout.write("Loss {:.6g} -> {:.6g} over {} epochs, model written to {}".format(
            history[0], history[-1], training.epochs, path))
        if held:
            holdout = TrajectoryDataset(dataset.states[-held:], dataset.actions[-held:], dataset.meta)
            starts = holdout.window_starts(training.horizon)
            X, U = take_windows(*holdout.stacked(), starts, training.horizon)
            model_mse, constant_mse = rollout_mse(model, X, U, training.horizon)
            self.stdout.write("Held-out {}-step prediction MSE {:.6g} (constant-state {:.6g})".format(
                training.horizon, model_mse, constant_mse))
        if solution is None:
            return
        self.stdout.write("Closed-loop spectral radius {:.6g} (DARE residual {:.3g}, {} iterations)".format(
            solution.spectral_radius, solution.residual, solution.iterations))
        if not solution.stable:
            self.stderr.write("Warning: the learned closed loop is not stable")
