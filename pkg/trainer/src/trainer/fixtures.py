"""Analytic toy networks with hand-checkable decision geometry.

Each builder returns a model document for :func:`trainer.emit.write_model`.
The decision boundaries quoted below are exact in 64-bit floats because
every boundary case reduces to relu of an exactly representable
difference, so consumers can assert on them with equality rather than a
tolerance.  The exported files double as conformance vectors: a consumer
that parses them and reproduces the digests is reading the format
correctly.
"""

from __future__ import annotations

import pathlib

import numpy as np

from . import emit

__all__ = [
    "quadrant_doc",
    "flagflip_doc",
    "identity_doc",
    "kink_doc",
    "conv_mixed_doc",
    "sigmoid_pair_doc",
    "export_fixture_nets",
]


def quadrant_doc() -> dict:
    """Two inputs, two classes.  The type-1 logit is
    relu(x - 0.5) + relu(y - 0.5) against a constant 0 logit for
    "no obstacle", so the prediction is "no obstacle" exactly on the closed
    quadrant x <= 0.5, y <= 0.5 (the boundary ties and ties resolve to the
    trailing class) and type 1 strictly outside it."""
    return emit.model_doc((1, 1, 2), "softmax", [
        emit.dense([[1.0, 0.0], [0.0, 1.0]], [-0.5, -0.5], activation="relu"),
        emit.dense([[1.0, 1.0], [0.0, 0.0]], [0.0, 0.0],
                   activation="softmax"),
    ])


def flagflip_doc() -> dict:
    """One effective input, three classes.  The type-1 logit stays a tied
    maximum everywhere, yet the predicted set flips from {2} (x < 0.5) to
    empty (x >= 0.5): a constancy check along a segment across x = 0.5 has
    to fail on the observed outcome even though the type-1 activation
    distance never leaves zero."""
    return emit.model_doc((1, 1, 2), "softmax", [
        emit.dense([[1.0, 0.0], [-1.0, 0.0]], [-0.5, 0.5], activation="relu"),
        emit.dense([[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0, 0.0],
                   activation="softmax"),
    ])


def identity_doc() -> dict:
    """Softmax of the raw two-pixel input; the forward pass equals softmax
    of the image exactly."""
    return emit.model_doc((1, 1, 2), "softmax", [
        emit.dense([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0],
                   activation="softmax"),
    ])


def kink_doc(at_one: bool) -> dict:
    """Single pixel, two classes, with the hidden relu kink sitting exactly
    at pixel value 0 (``at_one=False``, pre-activation x) or 1
    (``at_one=True``, pre-activation 1 - x).  The no-obstacle activation
    distance vanishes only at the kink pixel itself."""
    if at_one:
        first = emit.dense([[-1.0]], [1.0], activation="relu")
    else:
        first = emit.dense([[1.0]], [0.0], activation="relu")
    return emit.model_doc((1, 1, 1), "softmax", [
        first,
        emit.dense([[2.0], [0.0]], [0.0, 0.0], activation="softmax"),
    ])


def conv_mixed_doc() -> dict:
    """6x6 grayscale input through conv/maxpool/flatten/dense with weights
    drawn once from a fixed seed; exercises every layer kind in one file.
    The draw order below is part of the fixture's identity and must not be
    reordered."""
    gen = np.random.default_rng(20240811)
    kernel = gen.uniform(-1.0, 1.0, size=(3, 3, 1, 2))
    kbias = gen.uniform(-0.1, 0.1, size=2)
    weights = gen.uniform(-1.0, 1.0, size=(4, 18))
    bias = gen.uniform(-0.1, 0.1, size=4)
    return emit.model_doc((6, 6, 1), "softmax", [
        emit.conv2d(kernel, kbias, stride=(1, 1), padding="same",
                    activation="relu"),
        emit.maxpool((2, 2)),
        emit.flatten(),
        emit.dense(weights, bias, activation="softmax"),
    ])


def sigmoid_pair_doc() -> dict:
    """Two independent sigmoid detectors reading one pixel each for the
    multi-label head: type j is reported present iff pixel j is at least
    0.5 (the logit 8 * (x - 0.5) crosses 0 there)."""
    return emit.model_doc((1, 1, 2), "sigmoid", [
        emit.dense([[8.0, 0.0], [0.0, 8.0]], [-4.0, -4.0],
                   activation="sigmoid"),
    ])


_BUILDERS = {
    "quadrant_net": quadrant_doc,
    "flagflip_net": flagflip_doc,
    "identity_net": identity_doc,
    "relu_kink0_net": lambda: kink_doc(at_one=False),
    "relu_kink1_net": lambda: kink_doc(at_one=True),
    "conv_mixed_net": conv_mixed_doc,
    "sigmoid_pair_net": sigmoid_pair_doc,
}


def export_fixture_nets(out_dir) -> dict[str, pathlib.Path]:
    """Write every fixture net to ``out_dir`` as ``<name>.json``.

    Returns name -> path.  Re-running over the same directory rewrites
    byte-identical files; nothing here depends on the environment."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {name: emit.write_model(builder(), out_dir / f"{name}.json")
            for name, builder in _BUILDERS.items()}
