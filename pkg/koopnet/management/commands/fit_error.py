import os

from koopnet.control import solve_for_model
from koopnet.dynamics import build_plant, cost_weights
from koopnet.errmodel import collect_samples, fit_polynomial, holdout_residuals, select_degree
from koopnet.management.base import ExperimentCommand
from koopnet.storage import load_model, save_coeffs, save_samples, write_csv
from koopnet.utils import parse_int_list


class Command(ExperimentCommand):
    help = "Collects prediction-error samples and fits the polynomial error surrogate."

    seed_path = "errmodel.seed"
    flag_paths = {
        "samples": "errmodel.samples",
        "beta_max": "errmodel.beta_max",
        "model": "artifacts.model",
        "output": "artifacts.coeffs",
    }

    def add_experiment_arguments(self, parser):
        parser.add_argument("--samples", type=int)
        parser.add_argument("--beta-max", type=int, dest="beta_max")
        parser.add_argument("--degrees", help="Comma separated candidate degrees, e.g. 1,2,3")
        parser.add_argument("--model", help="Model checkpoint produced by train")
        parser.add_argument("--output", help="Coefficient CSV")

    def experiment(self, config, run_dir, options):
        section = config["errmodel"]
        model = load_model(self.use_input("model", config["artifacts"]["model"]))
        plant = build_plant(config)
        Q, B, x0 = cost_weights(config, plant)
        solution = solve_for_model(model, Q, B, config)

        self.seeds["errmodel"] = int(section["seed"])
        samples, discarded = collect_samples(
            model, plant, solution, int(section["samples"]), int(section["beta_max"]),
            seed=int(section["seed"]), box=section.get("state_box"), noise_config=config["noise"], x0=x0,
        )
        self.add_output("samples", save_samples(samples, os.path.join(run_dir, "samples.csv")))

        degrees = parse_int_list(options["degrees"]) if options.get("degrees") else list(section["degrees"])
        degree = section["degree"]
        if len(set(degrees)) >= 2:
            if degree == "auto":
                degree = select_degree(samples, degrees, float(section["holdout"]), int(section["seed"]))
            residuals = holdout_residuals(samples, degrees, float(section["holdout"]), int(section["seed"]))
            rows = [{"degree": d, "mean_abs_residual": r} for d, r in sorted(residuals.items())]
            self.add_output("residuals", write_csv(os.path.join(run_dir, "residuals.csv"),
                                                   ["degree", "mean_abs_residual"], rows))
            for row in rows:
                self.stdout.write("degree {degree}: held-out mean |residual| {mean_abs_residual:.6g}".format(**row))
        elif degrees:
            degree = degrees[0]
        if degree == "auto":
            degree = 2

        coeffs = fit_polynomial(samples, int(degree))
        path = save_coeffs(coeffs, config["artifacts"]["coeffs"])
        self.add_output("coeffs", path)
        self.stdout.write("Fitted degree {} surrogate on {} samples ({} discarded), written to {}".format(
            degree, len(samples), discarded, path))
