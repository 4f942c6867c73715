"""Fitting entry point and JSON persistence for both bitrate model kinds."""

from __future__ import annotations

import json
from typing import Union

from .errors import UnknownModelFile
from .forest import ForestModel, fit_forest
from .polymodel import PolyModel, fit_poly_model

MODEL_NAMES = ("Polynomial", "VCA", "MS", "MS-VCA")
FORMAT = "msbitrate-model"
FORMAT_VERSION = 1

BitrateModel = Union[PolyModel, ForestModel]


def fit_model(rows, model_name: str, seed: int = 0, preset=None, n_jobs: int = 1, **forest_params) -> BitrateModel:
    if model_name == "Polynomial":
        return fit_poly_model(rows, preset)
    if model_name in MODEL_NAMES:
        return fit_forest(rows, model_name, seed, n_jobs=n_jobs, preset=preset, **forest_params)
    raise ValueError(f"unknown model {model_name!r}; choose from {MODEL_NAMES}")


def model_name(model: BitrateModel) -> str:
    return "Polynomial" if isinstance(model, PolyModel) else model.feature_set


def dumps(model: BitrateModel) -> str:
    payload = {"format": FORMAT, "version": FORMAT_VERSION}
    payload.update(model.to_dict())
    return json.dumps(payload, indent=1) + "\n"


def loads(text: str) -> BitrateModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnknownModelFile(f"model file is not JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise UnknownModelFile("not an msbitrate model file")
    if data.get("version") != FORMAT_VERSION:
        raise UnknownModelFile(f"unsupported model version {data.get('version')}")
    kind = data.get("kind")
    if kind == PolyModel.kind:
        return PolyModel.from_dict(data)
    if kind == ForestModel.kind:
        return ForestModel.from_dict(data)
    raise UnknownModelFile(f"unknown model kind {kind!r}")


def save(model: BitrateModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model))


def load(path) -> BitrateModel:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except FileNotFoundError as exc:
        raise UnknownModelFile(f"no model file at {path}") from exc
