"""Canonical writers for the model and dataset interchange formats.

The consumer of these files digests the exact bytes (sha256 of the model
document binds every derived artifact to one weight file), so the
serialization is fixed down to the character: object keys appear in the
order built here, floats carry 17 significant digits so any 64-bit value
round-trips, lists and objects contain no whitespace, and every document
ends in a single newline.  This module deliberately shares no code with
the consumer; the tests assert byte equality of the two writers instead.

Layer dictionaries hold weight arrays in the format's layouts: convolution
kernels are (rows, cols, in_channels, out_channels) and dense weights are
(out, in).
"""

from __future__ import annotations

import hashlib
import json
import pathlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "canonical",
    "conv2d",
    "maxpool",
    "flatten",
    "dense",
    "model_doc",
    "model_digest",
    "write_model",
    "dataset_record",
    "write_dataset",
]


def _fmt_float(x: float) -> str:
    # 17 significant digits round-trip any 64-bit float exactly.
    return format(float(x), ".17g")


def canonical(obj) -> str:
    """Render a document fragment in the canonical form described above."""
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + canonical(v)
            for k, v in obj.items()) + "}"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def conv2d(kernel, bias, stride: Sequence[int] = (1, 1), padding: str = "same",
           activation: str = "relu") -> dict:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ValueError("conv2d kernel must be (rows, cols, in, out)")
    return {"type": "conv2d", "kernel": kernel,
            "bias": np.asarray(bias, dtype=np.float64),
            "stride": [int(stride[0]), int(stride[1])],
            "padding": str(padding), "activation": str(activation)}


def maxpool(pool: Sequence[int] = (2, 2),
            stride: Sequence[int] | None = None) -> dict:
    window = [int(pool[0]), int(pool[1])]
    step = window if stride is None else [int(stride[0]), int(stride[1])]
    return {"type": "maxpool", "pool": window, "stride": step}


def flatten() -> dict:
    return {"type": "flatten"}


def dense(weights, bias, activation: str = "none") -> dict:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ValueError("dense weights must be (out, in)")
    return {"type": "dense", "weights": weights,
            "bias": np.asarray(bias, dtype=np.float64),
            "activation": str(activation)}


def model_doc(input_shape: Sequence[int], head: str,
              layers: Iterable[dict]) -> dict:
    return {"input_shape": [int(s) for s in input_shape], "head": str(head),
            "layers": list(layers)}


def model_digest(doc: dict) -> str:
    """sha256 hex digest of the canonical serialization, the same value the
    consumer computes after parsing."""
    return hashlib.sha256(canonical(doc).encode("ascii")).hexdigest()


def write_model(doc: dict, path) -> pathlib.Path:
    path = pathlib.Path(path)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical(doc))
        fh.write("\n")
    return path


def dataset_record(image_id: str, pixels, label: Iterable[int]) -> dict:
    """One labeled-image line: row-major pixels and a sorted label list."""
    return {"id": str(image_id),
            "pixels": [float(v) for v in
                       np.asarray(pixels, dtype=np.float64).ravel()],
            "label": sorted(int(v) for v in label)}


def write_dataset(records: Iterable[dict], path) -> pathlib.Path:
    path = pathlib.Path(path)
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(canonical(rec))
            fh.write("\n")
    return path
