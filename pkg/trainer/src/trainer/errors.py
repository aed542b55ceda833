"""Exception types for training and export failures."""


class TrainerError(Exception):
    """Base type for everything this package raises on purpose."""


class ConfigError(TrainerError):
    """A training configuration field is outside its allowed range."""


class TrainingDataError(TrainerError):
    """The training corpus could not be obtained or read."""


class UnsupportedModel(TrainerError):
    """The framework model uses a layer, padding mode, or activation the
    interchange format cannot express."""
