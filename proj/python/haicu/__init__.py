"""Trajectory forecasting with class-probability inputs."""

import json

import torch  # noqa: F401  loads the libtorch shared libraries first

from . import _haicu
from ._haicu import (
    Divergence,
    HaicuError,
    InvalidParameter,
    InvariantViolation,
    NotFound,
    ParseError,
    ShapeMismatch,
    SimplexViolation,
    ade,
    fde,
    run_cli,
    welch_t_test,
)

__all__ = [
    "Divergence",
    "HaicuError",
    "InvalidParameter",
    "InvariantViolation",
    "NotFound",
    "ParseError",
    "Predictor",
    "ShapeMismatch",
    "SimplexViolation",
    "ade",
    "count_parameters",
    "dataset_statistics",
    "fde",
    "generate_scenes",
    "load_scenes",
    "run_cli",
    "welch_t_test",
]


def generate_scenes(spec, seed=0):
    """Synthetic scenes as dicts. `spec` holds "generator" and optionally "noise"."""
    return [json.loads(s) for s in _haicu.generate_scenes(json.dumps(spec), seed)]


def load_scenes(path):
    return [json.loads(s) for s in _haicu.load_scenes(str(path))]


def dataset_statistics(path):
    return json.loads(_haicu.dataset_statistics(str(path)))


def count_parameters(config):
    return _haicu.count_parameters(json.dumps(config))


class Predictor:
    """In-process access to the prediction service routes."""

    def __init__(self, checkpoint, data):
        self._service = _haicu.Service(str(checkpoint), str(data))

    @property
    def checkpoint_id(self):
        return self._service.checkpoint_id

    def request(self, method, path, body=None):
        status, payload = self._service.request(method, path, "" if body is None else json.dumps(body))
        return status, json.loads(payload)

    def _post(self, path, body):
        status, payload = self.request("POST", path, body)
        if status == 404:
            raise NotFound(payload["error"])
        if status != 200:
            raise InvalidParameter(payload["error"])
        return payload

    def predict(self, scene_id, timestep, horizon_s=None, **extra):
        body = {"scene_id": scene_id, "timestep": timestep, **extra}
        if horizon_s is not None:
            body["horizon_s"] = horizon_s
        return self._post("/predict", body)

    def whatif(self, scene_id, timestep, spec, horizon_s=None):
        body = {"scene_id": scene_id, "timestep": timestep, "spec": spec}
        if horizon_s is not None:
            body["horizon_s"] = horizon_s
        return self._post("/whatif", body)
