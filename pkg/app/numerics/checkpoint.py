"""Self-describing JSON documents for network parameters and other arrays.

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact for every finite value.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from app.errors import InvalidArgumentError
from app.numerics.mlp import MlpParameters

LOGGER = logging.getLogger("starris.numerics")

FORMAT = "starris-checkpoint"
VERSION = 1


def array_to_document(values: np.ndarray) -> Dict[str, Any]:
    array = np.asarray(values)
    if np.iscomplexobj(array):
        return {
            "shape": list(array.shape),
            "dtype": "complex128",
            "real": array.real.ravel().tolist(),
            "imag": array.imag.ravel().tolist(),
        }
    return {"shape": list(array.shape), "dtype": "float64", "data": array.astype(np.float64).ravel().tolist()}


def array_from_document(document: Dict[str, Any]) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in document["shape"])
        if document.get("dtype") == "complex128":
            real = np.asarray(document["real"], dtype=np.float64)
            imag = np.asarray(document["imag"], dtype=np.float64)
            if real.shape != imag.shape:
                raise ValueError("real and imag parts differ in shape")
            values = np.empty(real.shape, dtype=np.complex128)
            values.real = real
            values.imag = imag
            return values.reshape(shape)
        return np.asarray(document["data"], dtype=np.float64).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed array entry: {exc}") from exc


def model_to_document(model: MlpParameters) -> Dict[str, Any]:
    return {
        "kind": model.kind,
        "state_dim": model.state_dim,
        "action_dim": model.action_dim,
        "hidden": model.hidden,
        "hidden2": model.hidden2,
        "activations": dict(model.activations),
        "bn_momentum": model.bn_momentum,
        "bn_eps": model.bn_eps,
        "params": {name: array_to_document(value) for name, value in model.params.items()},
        "buffers": {name: array_to_document(value) for name, value in model.buffers.items()},
    }


def model_from_document(document: Dict[str, Any]) -> MlpParameters:
    try:
        return MlpParameters(
            kind=document["kind"],
            state_dim=int(document["state_dim"]),
            action_dim=int(document["action_dim"]),
            hidden=int(document["hidden"]),
            hidden2=int(document["hidden2"]),
            params={name: array_from_document(doc) for name, doc in document["params"].items()},
            buffers={name: array_from_document(doc) for name, doc in document["buffers"].items()},
            activations=dict(document["activations"]),
            bn_momentum=float(document["bn_momentum"]),
            bn_eps=float(document["bn_eps"]),
        )
    except KeyError as exc:
        raise InvalidArgumentError(f"network document is missing {exc}") from exc


def save_document(path: Path | str, payload: Dict[str, Any]) -> Path:
    """Write ``payload`` under a format header; the file is replaced atomically."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    document = {"format": FORMAT, "version": VERSION, **payload}
    temp = target.with_suffix(target.suffix + ".tmp")
    temp.write_text(json.dumps(document, allow_nan=False), encoding="utf-8")
    temp.replace(target)
    LOGGER.debug("Wrote %s", target)
    return target


def load_document(path: Path | str) -> Dict[str, Any]:
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"checkpoint not found: {source}")
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{source} is not a valid checkpoint: {exc}") from exc
    if not isinstance(document, dict) or document.get("format") != FORMAT:
        raise InvalidArgumentError(f"{source} is not a {FORMAT} document")
    if document.get("version") != VERSION:
        raise InvalidArgumentError(f"unsupported checkpoint version {document.get('version')}")
    return document
