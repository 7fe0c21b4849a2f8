import io
import os
import json
from unittest import mock

import numpy as np
import yaml

from koopnet.core.management import cli_main
from koopnet.harness.episode import StepRecord
from koopnet.harness.sweeps import SWEEP_COLUMNS
from koopnet.storage import load_coeffs, load_dataset, load_model, read_csv, save_coeffs, save_model
from koopnet.test import TestCase, linear_coeffs, small_model, temporary_run_root
from koopnet.utils import file_sha256


def call(*argv):
    with mock.patch("sys.stdout", new_callable=io.StringIO) as out:
        with mock.patch("sys.stderr", new_callable=io.StringIO) as err:
            code = cli_main(list(argv))
    return code, out.getvalue(), err.getvalue()


def read_manifest(run_dir):
    with open(os.path.join(run_dir, "manifest.json")) as f:
        return json.load(f)


class CommandTestCase(TestCase):
    def setUp(self):
        self._root = temporary_run_root()
        self.root = self._root.__enter__()
        self.addCleanup(self._root.__exit__, None, None, None)

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def save_settled_model(self, kind="proposed"):
        model = small_model(kind)
        model.Kx[:] = 0.9 * np.eye(model.latent_dim)
        return save_model(model, self.path("artifacts", "model.npz"))

    def save_coeffs(self):
        return save_coeffs(linear_coeffs(0.0, 0.05), self.path("artifacts", "coeffs.csv"))


class DispatchTests(CommandTestCase):
    def test_usage(self):
        self.assertEqual(call()[0], 2)
        code, out, _ = call("--help")
        self.assertEqual(code, 0)
        self.assertIn("gen-data", out)

    def test_unknown_command(self):
        code, _, err = call("migrate")
        self.assertEqual(code, 2)
        self.assertIn("Unknown command", err)

    def test_bad_choice(self):
        self.assertEqual(call("sweep", "--axis", "bandwidth")[0], 2)

    def test_bad_override(self):
        code, _, err = call("gen-data", "--set", "plants.kind=cartpole", "--run-dir", self.path("run"))
        self.assertEqual(code, 2)
        self.assertIn("Unknown config sections", err)

    def test_missing_artifact(self):
        code, _, err = call("run", "--model", self.path("nowhere.npz"), "--run-dir", self.path("run"))
        self.assertEqual(code, 2)
        self.assertIn("nowhere.npz", err)

    def test_runtime_error(self):
        model = small_model("dkuc")
        model.Kx[:] = 0.9 * np.eye(model.latent_dim)
        model.Kx[0, 0] = 1.5
        model.Ku[0, :] = 0.0
        path = save_model(model, self.path("unstable.npz"))
        code, _, err = call("fit-error", "--model", path, "--samples", "20", "--run-dir", self.path("run"))
        self.assertEqual(code, 1)
        self.assertIn("UnstabilizableModelError", err)


class GenDataTests(CommandTestCase):
    def test_writes_dataset_and_manifest(self):
        output = self.path("artifacts", "dataset.npz")
        run_dir = self.path("gen")
        code, out, _ = call("gen-data", "--traj", "3", "--steps", "12", "--seed", "7", "--output", output,
                            "--run-dir", run_dir, "--csv")
        self.assertEqual(code, 0)
        self.assertIn("Wrote 3 trajectories", out)

        manifest = read_manifest(run_dir)
        self.assertEqual(manifest["command"], "gen_data")
        self.assertEqual(manifest["seeds"], {"dataset": 7})
        self.assertEqual(manifest["outputs"]["dataset"]["sha256"], file_sha256(output))
        self.assertEqual(sorted(os.listdir(os.path.join(run_dir, "trajectories"))),
                         ["trajectory_0.csv", "trajectory_1.csv", "trajectory_2.csv"])
        with open(os.path.join(run_dir, "config.snapshot")) as f:
            self.assertEqual(yaml.safe_load(f)["dataset"]["seed"], 7)

    def test_same_seed_same_data(self):
        first, second = self.path("a.npz"), self.path("b.npz")
        call("gen-data", "--traj", "2", "--steps", "5", "--output", first, "--run-dir", self.path("r1"))
        call("gen-data", "--traj", "2", "--steps", "5", "--output", second, "--run-dir", self.path("r2"))
        a, b = load_dataset(first), load_dataset(second)
        for x, y in zip(a.states + a.actions, b.states + b.actions):
            self.assertArrayEqual(x, y)


class TrainTests(CommandTestCase):
    def test_trains_and_reports(self):
        dataset = self.path("artifacts", "dataset.npz")
        self.assertEqual(call("gen-data", "--traj", "3", "--steps", "12", "--output", dataset,
                              "--run-dir", self.path("gen"))[0], 0)
        output = self.path("artifacts", "model.npz")
        run_dir = self.path("train")
        code, out, _ = call(
            "train", "--dataset", dataset, "--output", output, "--epochs", "1", "--horizon", "2",
            "--set", "model.state_embedding=3", "--set", "model.hidden=[8]", "--set", "model.action_hidden=[8]",
            "--set", "training.batch_size=32", "--run-dir", run_dir,
        )
        self.assertEqual(code, 0)
        self.assertIn("Held-out 2-step prediction MSE", out)

        model = load_model(output)
        self.assertEqual(model.kind, "proposed")
        self.assertEqual(model.latent_dim, 7)
        self.assertEqual([row["epoch"] for row in read_csv(os.path.join(run_dir, "loss.csv"))], ["0", "1"])
        self.assertIn("dataset", read_manifest(run_dir)["inputs"])
        with open(os.path.join(run_dir, "config.snapshot")) as f:
            self.assertTrue(yaml.safe_load(f)["control"]["require_stable"])

    def test_missing_dataset(self):
        self.assertEqual(call("train", "--dataset", self.path("none.npz"), "--run-dir", self.path("r"))[0], 2)


class FitErrorTests(CommandTestCase):
    def test_fits_default_degree(self):
        model = self.save_settled_model()
        output = self.path("artifacts", "coeffs.csv")
        run_dir = self.path("fit")
        code, out, _ = call("fit-error", "--model", model, "--output", output, "--samples", "60",
                            "--beta-max", "5", "--run-dir", run_dir)
        self.assertEqual(code, 0)
        self.assertEqual(load_coeffs(output).degree, 2)
        self.assertEqual(len(read_csv(os.path.join(run_dir, "samples.csv"))), 60)
        self.assertEqual([r["degree"] for r in read_csv(os.path.join(run_dir, "residuals.csv"))], ["1", "2", "3"])
        self.assertIn("Fitted degree 2 surrogate on 60 samples", out)

    def test_single_degree(self):
        model = self.save_settled_model()
        output = self.path("coeffs.csv")
        code, _, _ = call("fit-error", "--model", model, "--output", output, "--samples", "30",
                          "--degrees", "1", "--run-dir", self.path("fit"))
        self.assertEqual(code, 0)
        self.assertEqual(load_coeffs(output).degree, 1)
        self.assertFalse(os.path.exists(self.path("fit", "residuals.csv")))


class RunTests(CommandTestCase):
    def test_writes_traces_and_summary(self):
        model, coeffs = self.save_settled_model(), self.save_coeffs()
        run_dir = self.path("run")
        code, out, _ = call("run", "--model", model, "--coeffs", coeffs, "--episodes", "2", "--slots", "10",
                            "--seed", "3", "--run-dir", run_dir)
        self.assertEqual(code, 0)
        self.assertIn("2 episodes", out)

        rows = read_csv(os.path.join(run_dir, "episodes", "ep_1.csv"))
        self.assertEqual(len(rows), 10)
        self.assertEqual(list(rows[0]), StepRecord.fieldnames(4, 2))
        summary = read_csv(os.path.join(run_dir, "summary.csv"))
        self.assertEqual(summary[0]["episodes"], "2")
        self.assertEqual(len(read_csv(os.path.join(run_dir, "episodes.csv"))), 2)
        self.assertEqual(len(read_csv(os.path.join(run_dir, "traces.csv"))), 10)

        manifest = read_manifest(run_dir)
        self.assertEqual(manifest["seeds"], {"episode": 3})
        self.assertEqual(manifest["inputs"]["model"]["sha256"], file_sha256(model))

    def test_same_seed_same_csv_bytes(self):
        model, coeffs = self.save_settled_model(), self.save_coeffs()
        outputs = []
        for name in ("first", "second"):
            run_dir = self.path(name)
            code, _, _ = call("run", "--model", model, "--coeffs", coeffs, "--episodes", "2", "--slots", "15",
                              "--seed", "11", "--run-dir", run_dir)
            self.assertEqual(code, 0)
            outputs.append({
                table: file_sha256(os.path.join(run_dir, table))
                for table in ("episodes/ep_0.csv", "episodes/ep_1.csv", "episodes.csv", "summary.csv", "traces.csv")
            })
        self.assertEqual(outputs[0], outputs[1])

    def test_controller_must_match_model(self):
        model, coeffs = self.save_settled_model("dkuc"), self.save_coeffs()
        code, _, err = call("run", "--model", model, "--coeffs", coeffs, "--episodes", "1", "--slots", "2",
                            "--run-dir", self.path("run"))
        self.assertEqual(code, 2)
        self.assertIn("episode.controller", err)


class SweepCommandTests(CommandTestCase):
    def test_rows_per_value(self):
        model, coeffs = self.save_settled_model(), self.save_coeffs()
        run_dir = self.path("sweep")
        code, _, _ = call("sweep", "--axis", "delta", "--values", "0.2,0.5", "--episodes", "1", "--slots", "5",
                          "--model", model, "--coeffs", coeffs, "--run-dir", run_dir)
        self.assertEqual(code, 0)
        rows = read_csv(os.path.join(run_dir, "sweep_delta.csv"))
        self.assertEqual([float(r["value"]) for r in rows], [0.2, 0.5])
        self.assertEqual(list(rows[0]), SWEEP_COLUMNS)

    def test_empty_values(self):
        run_dir = self.path("sweep")
        code, _, _ = call("sweep", "--axis", "ca-failures", "--run-dir", run_dir)
        self.assertEqual(code, 0)
        with open(os.path.join(run_dir, "sweep_ca_failures.csv")) as f:
            self.assertEqual(f.read(), ",".join(SWEEP_COLUMNS) + "\n")
