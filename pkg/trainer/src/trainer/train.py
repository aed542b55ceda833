"""Trains the reference digit classifier and exports it for verification.

The architecture is fixed: one 3x3 convolution (1 filter, stride 1, same
padding, relu), 2x2 max pooling, flatten, a 128-unit relu layer, and a
4-way softmax.  Digit labels collapse to three obstacle types plus a
trailing "no obstacle" class: digits 0, 1, 2 become types 1, 2, 3 and
every other digit maps to the empty label set.

Training runs in float32 under tensorflow with deterministic ops enabled,
so a fixed seed reproduces the weight file byte for byte on one framework
version.  The export embeds the float32 weights into float64 exactly;
the consumer's float64 forward pass therefore agrees with the framework's
predictions to float32 round-off (about 1e-6), not bit-exactly.

tensorflow is imported lazily: everything except training itself works
without it installed.
"""

from __future__ import annotations

import dataclasses
import json
import pathlib
from typing import Iterable

import numpy as np

from . import emit
from .errors import ConfigError, TrainingDataError, TrainerError, \
    UnsupportedModel

__all__ = [
    "TrainConfig",
    "TrainResult",
    "keras_model_doc",
    "train_and_export",
]

_INPUT_SHAPE = (28, 28, 1)
_NUM_CLASSES = 4
# digits below this keep their identity as obstacle types 1..3; the rest
# collapse to the trailing "no obstacle" class
_NUM_OBSTACLE_DIGITS = 3

_ACTIVATION_NAMES = {"linear": "none", "relu": "relu", "sigmoid": "sigmoid",
                     "tanh": "tanh", "softmax": "softmax"}


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Where to write the artifacts and how to train.

    ``model_path`` receives the canonical model document and
    ``metadata_path`` (default: ``model_path`` with a ``.meta.json``
    suffix) a small sidecar recording the achieved accuracy, seed, epoch
    count, and framework version.  ``train_path``/``val_path``/
    ``test_path``, when set, receive the corpus splits as labeled-image
    lines; the held-out images serve as both validation and test split, so
    those two files differ only in their record ids.  ``export_limit``
    caps the number of lines per split because a full export is hundreds
    of megabytes of text.
    """

    model_path: pathlib.Path
    metadata_path: pathlib.Path | None = None
    train_path: pathlib.Path | None = None
    val_path: pathlib.Path | None = None
    test_path: pathlib.Path | None = None
    epochs: int = 50
    batch_size: int = 32
    seed: int = 20240811
    export_limit: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(
                f"batch_size must be at least 1, got {self.batch_size}")
        if self.export_limit is not None and self.export_limit < 1:
            raise ConfigError("export_limit must be positive or None, "
                              f"got {self.export_limit}")

    def resolved_metadata_path(self) -> pathlib.Path:
        if self.metadata_path is not None:
            return pathlib.Path(self.metadata_path)
        return pathlib.Path(self.model_path).with_suffix(".meta.json")


@dataclasses.dataclass(frozen=True)
class TrainResult:
    """Paths written plus the headline numbers from the final evaluation."""

    model_path: pathlib.Path
    metadata_path: pathlib.Path
    train_path: pathlib.Path | None
    val_path: pathlib.Path | None
    test_path: pathlib.Path | None
    digest: str
    val_accuracy: float
    val_loss: float


def _import_tf():
    try:
        import tensorflow as tf
    except ImportError as exc:
        raise TrainerError(
            "training needs tensorflow; install the 'train' extra "
            "(pip install artifact-trainer[train])") from exc
    return tf, tf.keras


def _load_mnist():
    """The digit corpus as ((x_train, y_train), (x_test, y_test)) uint8."""
    _, keras = _import_tf()
    try:
        return keras.datasets.mnist.load_data()
    except Exception as exc:
        raise TrainingDataError(
            f"could not load the MNIST archive: {exc}. The loader reads "
            "~/.keras/datasets/mnist.npz before trying the network, so "
            "either retry once the download can reach storage.googleapis"
            ".com or copy mnist.npz into that directory from a machine "
            "that has it.") from exc


def _build_model(keras):
    model = keras.Sequential([
        keras.layers.Input(shape=_INPUT_SHAPE),
        keras.layers.Conv2D(1, (3, 3), strides=(1, 1), padding="same",
                            activation="relu"),
        keras.layers.MaxPooling2D(pool_size=(2, 2), strides=(2, 2)),
        keras.layers.Flatten(),
        keras.layers.Dense(128, activation="relu"),
        keras.layers.Dense(_NUM_CLASSES, activation="softmax"),
    ])
    model.compile(optimizer="adam", loss="sparse_categorical_crossentropy",
                  metrics=["accuracy"])
    return model


def _class_indices(digits: np.ndarray) -> np.ndarray:
    """0-based training classes: digits 0..2 keep their index, the rest
    share the trailing class."""
    digits = np.asarray(digits)
    return np.where(digits < _NUM_OBSTACLE_DIGITS, digits,
                    _NUM_OBSTACLE_DIGITS).astype(np.int64)


def _label_set(digit: int) -> list[int]:
    """Exported label list: type index for an obstacle digit, else empty."""
    return [int(digit) + 1] if digit < _NUM_OBSTACLE_DIGITS else []


def _pixels(images: np.ndarray) -> np.ndarray:
    return images.astype(np.float64)[..., np.newaxis] / 255.0


def _activation_name(layer) -> str:
    name = getattr(layer.activation, "__name__", None)
    mapped = _ACTIVATION_NAMES.get(name)
    if mapped is None:
        raise UnsupportedModel(f"cannot export activation {name!r}")
    return mapped


def _model_input_shape(model) -> list[int]:
    shape = getattr(model, "input_shape", None)
    if shape is None:
        raise UnsupportedModel("model has no defined input shape; "
                               "build or call it first")
    dims = list(shape[1:])
    if len(dims) != 3 or any(d is None for d in dims):
        raise UnsupportedModel(f"input shape {shape} is not a fixed "
                               "rows x cols x channels tensor")
    return [int(d) for d in dims]


def keras_model_doc(model) -> dict:
    """Convert a keras model of supported layers to a model document.

    Dense kernels transpose from the framework's (in, out) layout to the
    format's (out, in); convolution kernels already share the
    (rows, cols, in, out) layout and pass through.  float32 weights embed
    into float64 exactly, so the document is a faithful copy.
    """
    layers = []
    for layer in model.layers:
        kind = type(layer).__name__
        if kind == "Conv2D":
            kernel, bias = layer.get_weights()
            layers.append(emit.conv2d(kernel, bias, stride=layer.strides,
                                      padding=layer.padding,
                                      activation=_activation_name(layer)))
        elif kind == "MaxPooling2D":
            if layer.padding != "valid":
                raise UnsupportedModel(
                    "max pooling must use valid padding, got "
                    f"{layer.padding!r}")
            layers.append(emit.maxpool(layer.pool_size, layer.strides))
        elif kind == "Flatten":
            layers.append(emit.flatten())
        elif kind == "Dense":
            kernel, bias = layer.get_weights()
            layers.append(emit.dense(np.asarray(kernel).T, bias,
                                     activation=_activation_name(layer)))
        else:
            raise UnsupportedModel(f"cannot export layer type {kind}")
    if not layers or layers[-1]["type"] != "dense" \
            or layers[-1]["activation"] not in ("softmax", "sigmoid"):
        raise UnsupportedModel("the final layer must be dense with a "
                               "softmax or sigmoid head")
    return emit.model_doc(_model_input_shape(model),
                          layers[-1]["activation"], layers)


def _export_records(split: str, images: np.ndarray, digits: np.ndarray,
                    limit: int | None) -> Iterable[dict]:
    count = len(images) if limit is None else min(limit, len(images))
    for i in range(count):
        yield emit.dataset_record(
            f"{split}-{i:05d}", images[i].astype(np.float64) / 255.0,
            _label_set(int(digits[i])))


def train_and_export(config: TrainConfig, data=None) -> TrainResult:
    """Train from scratch, export the model document, and write a sidecar.

    ``data`` defaults to the MNIST digits and exists so tests and
    alternative corpora can inject ((x_train, y_train), (x_test, y_test))
    arrays of the same dtype and shape.  The held-out split doubles as the
    validation set; its accuracy is what the sidecar records.  With a
    fixed seed and framework version the exported model file is
    reproducible byte for byte.
    """
    tf, keras = _import_tf()
    keras.utils.set_random_seed(config.seed)
    tf.config.experimental.enable_op_determinism()
    if data is None:
        data = _load_mnist()
    (x_train, y_train), (x_test, y_test) = data

    model = _build_model(keras)
    model.fit(_pixels(x_train), _class_indices(y_train),
              epochs=config.epochs, batch_size=config.batch_size,
              validation_data=(_pixels(x_test), _class_indices(y_test)),
              verbose=0)
    val_loss, val_acc = model.evaluate(_pixels(x_test),
                                       _class_indices(y_test), verbose=0)

    doc = keras_model_doc(model)
    model_path = emit.write_model(doc, config.model_path)
    digest = emit.model_digest(doc)

    metadata_path = config.resolved_metadata_path()
    meta = {
        "framework": f"tensorflow {tf.__version__}",
        "keras": str(keras.__version__),
        "seed": config.seed,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "train_images": int(len(x_train)),
        "test_images": int(len(x_test)),
        "val_accuracy": float(val_acc),
        "val_loss": float(val_loss),
        "model_digest": digest,
    }
    with open(metadata_path, "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    train_path = val_path = test_path = None
    if config.train_path is not None:
        train_path = emit.write_dataset(
            _export_records("train", x_train, y_train, config.export_limit),
            config.train_path)
    if config.val_path is not None:
        val_path = emit.write_dataset(
            _export_records("val", x_test, y_test, config.export_limit),
            config.val_path)
    if config.test_path is not None:
        test_path = emit.write_dataset(
            _export_records("test", x_test, y_test, config.export_limit),
            config.test_path)

    return TrainResult(model_path=model_path, metadata_path=metadata_path,
                       train_path=train_path, val_path=val_path,
                       test_path=test_path, digest=digest,
                       val_accuracy=float(val_acc), val_loss=float(val_loss))
