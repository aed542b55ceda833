"""Training and fixture-export companion for the verification toolkit.

This package produces the files the verification side consumes (model
documents and labeled-image datasets) without importing it: the two sides
meet only at the interchange format, and the tests pin that meeting point
byte for byte.
"""

from .emit import (canonical, conv2d, dataset_record, dense, flatten,
                   maxpool, model_digest, model_doc, write_dataset,
                   write_model)
from .errors import (ConfigError, TrainerError, TrainingDataError,
                     UnsupportedModel)
from .fixtures import (conv_mixed_doc, export_fixture_nets, flagflip_doc,
                       identity_doc, kink_doc, quadrant_doc,
                       sigmoid_pair_doc)
from .train import TrainConfig, TrainResult, keras_model_doc, \
    train_and_export

__version__ = "0.1.0"

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
    "TrainerError",
    "ConfigError",
    "TrainingDataError",
    "UnsupportedModel",
    "quadrant_doc",
    "flagflip_doc",
    "identity_doc",
    "kink_doc",
    "conv_mixed_doc",
    "sigmoid_pair_doc",
    "export_fixture_nets",
    "TrainConfig",
    "TrainResult",
    "keras_model_doc",
    "train_and_export",
    "__version__",
]
