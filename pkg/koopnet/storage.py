""" Artifact persistence: datasets, model checkpoints, surrogate coefficients and CSV tables. """

import os
import csv
import json
import logging

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder

from koopnet.errmodel import ErrorPolyCoeffs, ErrorSample, FEATURE_EXPONENTS, feature_names
from koopnet.errors import DimensionMismatch, MissingArtifactError
from koopnet.koopman import KoopmanModel, TrajectoryDataset
from koopnet.nn import DenseNet
from koopnet.utils import ensure_dir, format_float


logger = logging.getLogger("koopnet")

MODEL_FORMAT_VERSION = 1
DATASET_FORMAT_VERSION = 1


def _require(path, what):
    if not os.path.exists(path):
        raise MissingArtifactError(path, what)


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return value


def write_csv(path, fieldnames, rows):
    ensure_dir(os.path.dirname(path))
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key, "")) for key in fieldnames})
    return path


def read_csv(path):
    _require(path, "CSV table")
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_matrix(path, matrix):
    matrix = np.atleast_2d(matrix)
    ensure_dir(os.path.dirname(path))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in matrix:
            writer.writerow([format_float(v) for v in row])
    return path


def read_matrix(path):
    _require(path, "matrix")
    with open(path, newline="") as f:
        return np.array([[float(v) for v in row] for row in csv.reader(f) if row])


def write_json(path, data):
    ensure_dir(os.path.dirname(path))
    with open(path, "w") as f:
        json.dump(data, f, cls=DjangoJSONEncoder, indent=2, sort_keys=True)
        f.write("\n")
    return path


def save_dataset(dataset, path):
    ensure_dir(os.path.dirname(path))
    arrays = {}
    for k, (x, u) in enumerate(zip(dataset.states, dataset.actions)):
        arrays["x_{}".format(k)] = x
        arrays["u_{}".format(k)] = u
    meta = dict(dataset.meta, format_version=DATASET_FORMAT_VERSION, count=len(dataset))
    arrays["meta"] = np.array(json.dumps(meta, cls=DjangoJSONEncoder, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_dataset(path):
    _require(path, "dataset")
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        count = int(meta.pop("count"))
        meta.pop("format_version", None)
        states = [archive["x_{}".format(k)] for k in range(count)]
        actions = [archive["u_{}".format(k)] for k in range(count)]
    return TrajectoryDataset(states, actions, meta)


def export_dataset_csv(dataset, directory):
    """ One file per trajectory, columns x1..xD,u1..uD'. """
    ensure_dir(directory)
    fieldnames = ["x{}".format(i + 1) for i in range(dataset.state_dim)]
    fieldnames += ["u{}".format(i + 1) for i in range(dataset.action_dim)]
    paths = []
    for k, (x, u) in enumerate(zip(dataset.states, dataset.actions)):
        rows = [dict(zip(fieldnames, np.concatenate([xs, us]))) for xs, us in zip(x, u)]
        paths.append(write_csv(os.path.join(directory, "trajectory_{}.csv".format(k)), fieldnames, rows))
    return paths


def save_model(model, path):
    ensure_dir(os.path.dirname(path))
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "state_dim": model.state_dim,
        "action_dim": model.action_dim,
        "latent_dim": model.latent_dim,
        "action_latent_dim": model.action_latent_dim,
        "u_max": model.u_max,
        "networks": {name: net.sizes for name, net in model.networks},
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), "Kx": model.Kx, "Ku": model.Ku}
    for name, net in model.networks:
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays["{}_W{}".format(name, i)] = w
            arrays["{}_b{}".format(name, i)] = b
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_model(path):
    _require(path, "model checkpoint")
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        if header.get("format_version") != MODEL_FORMAT_VERSION:
            raise DimensionMismatch("Unsupported model format {}".format(header.get("format_version")))
        nets = {}
        for name, sizes in header["networks"].items():
            layers = len(sizes) - 1
            weights = [archive["{}_W{}".format(name, i)] for i in range(layers)]
            biases = [archive["{}_b{}".format(name, i)] for i in range(layers)]
            net = DenseNet(weights, biases)
            if net.sizes != sizes:
                raise DimensionMismatch("Network {} has sizes {}, header says {}".format(name, net.sizes, sizes))
            nets[name] = net
        return KoopmanModel(
            header["kind"], nets["phi"], archive["Kx"], archive["Ku"],
            mu=nets.get("mu"), rho=nets.get("rho"), aux=nets.get("aux"), u_max=header["u_max"],
        )


def save_coeffs(coeffs, path):
    rows = [
        {"degree": coeffs.degree, "feature": name, "alpha": alpha}
        for name, alpha in zip(coeffs.names, coeffs.alpha)
    ]
    return write_csv(path, ["degree", "feature", "alpha"], rows)


def load_coeffs(path):
    rows = read_csv(path)
    if not rows:
        raise DimensionMismatch("Coefficient file {} is empty".format(path))
    degree = int(rows[0]["degree"])
    if degree not in FEATURE_EXPONENTS or [r["feature"] for r in rows] != feature_names(degree):
        raise DimensionMismatch("Coefficient file {} does not list the degree {} features".format(path, degree))
    return ErrorPolyCoeffs(alpha=np.array([float(r["alpha"]) for r in rows]), degree=degree)


def save_samples(samples, path):
    rows = [{"norm": s.norm, "beta": s.beta, "error": s.error} for s in samples]
    return write_csv(path, ["norm", "beta", "error"], rows)


def load_samples(path):
    return [ErrorSample(norm=float(r["norm"]), beta=int(r["beta"]), error=float(r["error"])) for r in read_csv(path)]
