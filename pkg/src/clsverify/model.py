"""Network representation, weight-file IO, forward evaluation, and the
class-activation functions used by the partitioning and campaign layers.

A network is an explicit chain of layer maps

    input tensor (L, B, d) -> conv2d / maxpool / flatten / dense ... -> p,

each layer an affine map (conv2d, dense), a window maximum (maxpool), or a
row-major reshape (flatten), optionally followed by a pointwise activation.
The final layer must be dense and carries the probability head:

* ``softmax`` head: p has length k, sums to 1; index k (1-based) means
  "no obstacle", indices 1..k-1 are obstacle types.
* ``sigmoid`` head: p has length m with independent per-type probabilities;
  type j is reported present iff p_j >= 0.5.

For a class index j the activation distance

    omega(p, j) = sum_{i != j} relu(p_i - p_j)

is exactly 0 iff p_j is a (possibly tied) maximum; under the sigmoid head the
per-type analogue is relu(0.5 - p_j).  ``lambda_value`` composes the forward
pass with these, so its zero set is the input region the network maps to
outcome j.  Zero is attainable exactly in floating point because relu of a
nonpositive float is exactly 0.0; an optional tolerance (default 0) widens
the test for callers that need an epsilon band.

All operations are pure; a loaded network is immutable and safe to share
across threads.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ShapeError, UnsupportedLayer

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "LabeledImage",
    "conv2d_layer",
    "maxpool_layer",
    "flatten_layer",
    "dense_layer",
    "build_network",
    "load_network",
    "save_network",
    "network_to_canonical_json",
    "load_dataset",
    "save_dataset",
    "forward",
    "forward_batch",
    "forward_trace",
    "omega",
    "omega_sigmoid",
    "lambda_value",
    "lambda_for_labels",
    "argmax_last",
    "outcome_of_probs",
    "as_image_tensor",
]

_LAYER_KINDS = ("conv2d", "maxpool", "flatten", "dense")
_ACTIVATIONS = ("none", "relu", "softplus", "sigmoid", "tanh", "softmax")
_HEADS = ("softmax", "sigmoid")


@dataclasses.dataclass(frozen=True, eq=False)
class LayerSpec:
    """One layer of the chain.

    Exactly the fields relevant to ``kind`` are populated:

    * conv2d:  kernel (a, b, c_in, c_out), bias (c_out,), stride, padding,
      activation
    * maxpool: pool (ph, pw), stride
    * flatten: nothing
    * dense:   weights (out, in), bias (out,), activation

    ``softplus_k`` is the sharpness parameter of the softplus activation
    ln(1 + exp(k*x)) / k and must be >= 1.
    """

    kind: str
    kernel: np.ndarray | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: tuple[int, int] | None = None
    padding: str | None = None
    pool: tuple[int, int] | None = None
    activation: str = "none"
    softplus_k: float = 1.0


@dataclasses.dataclass(frozen=True, eq=False)
class NetworkSpec:
    """A validated layer chain.

    ``layer_input_shapes[i]`` is the shape entering layer i;
    ``layer_input_shapes[-1]`` is the output shape (k,).  ``digest`` is the
    sha256 of the canonical JSON serialization and binds derived artifacts
    (tau maps, reports) to one specific weight file.
    """

    input_shape: tuple[int, int, int]
    head: str
    layers: tuple[LayerSpec, ...]
    num_classes: int
    layer_input_shapes: tuple[tuple[int, ...], ...]
    digest: str


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledImage:
    """A normalized image with its ground-truth obstacle label set.

    ``label`` is a frozenset of obstacle-type indices; the empty set means
    "no obstacle present".  Pixels are a float64 tensor of the network's
    input shape with all values in [0, 1].
    """

    id: str
    pixels: np.ndarray
    label: frozenset[int]


def conv2d_layer(kernel, bias, stride=(1, 1), padding="same",
                 activation="relu", softplus_k=1.0) -> LayerSpec:
    return LayerSpec(kind="conv2d",
                     kernel=np.asarray(kernel, dtype=np.float64),
                     bias=np.asarray(bias, dtype=np.float64),
                     stride=(int(stride[0]), int(stride[1])),
                     padding=str(padding), activation=activation,
                     softplus_k=float(softplus_k))


def maxpool_layer(pool=(2, 2), stride=None) -> LayerSpec:
    pool = (int(pool[0]), int(pool[1]))
    if stride is None:
        stride = pool
    return LayerSpec(kind="maxpool", pool=pool,
                     stride=(int(stride[0]), int(stride[1])))


def flatten_layer() -> LayerSpec:
    return LayerSpec(kind="flatten")


def dense_layer(weights, bias, activation="none", softplus_k=1.0) -> LayerSpec:
    return LayerSpec(kind="dense",
                     weights=np.asarray(weights, dtype=np.float64),
                     bias=np.asarray(bias, dtype=np.float64),
                     activation=activation, softplus_k=float(softplus_k))


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{what} contains non-finite values")


def _validate_layer(layer: LayerSpec, index: int) -> None:
    if layer.kind not in _LAYER_KINDS:
        raise UnsupportedLayer(f"layer {index}: unknown kind {layer.kind!r}")
    if layer.activation not in _ACTIVATIONS:
        raise UnsupportedLayer(
            f"layer {index}: unknown activation {layer.activation!r}")
    if layer.kind in ("maxpool", "flatten") and layer.activation != "none":
        raise UnsupportedLayer(
            f"layer {index}: {layer.kind} does not take an activation")
    if layer.activation == "softplus" and layer.softplus_k < 1.0:
        raise UnsupportedLayer(
            f"layer {index}: softplus sharpness must be >= 1, "
            f"got {layer.softplus_k}")
    if layer.kind == "conv2d":
        if layer.kernel is None or layer.kernel.ndim != 4:
            raise ShapeError(f"layer {index}: conv2d kernel must be 4-D")
        if layer.bias is None or layer.bias.shape != (layer.kernel.shape[3],):
            raise ShapeError(f"layer {index}: conv2d bias must match "
                             "the kernel's output channels")
        if layer.padding not in ("same", "valid"):
            raise UnsupportedLayer(
                f"layer {index}: padding must be 'same' or 'valid'")
        _require_finite(layer.kernel, f"layer {index} kernel")
        _require_finite(layer.bias, f"layer {index} bias")
    elif layer.kind == "dense":
        if layer.weights is None or layer.weights.ndim != 2:
            raise ShapeError(f"layer {index}: dense weights must be 2-D")
        if layer.bias is None or layer.bias.shape != (layer.weights.shape[0],):
            raise ShapeError(f"layer {index}: dense bias must match "
                             "the weight matrix's output rows")
        _require_finite(layer.weights, f"layer {index} weights")
        _require_finite(layer.bias, f"layer {index} bias")
    elif layer.kind == "maxpool":
        if layer.pool is None or layer.pool[0] < 1 or layer.pool[1] < 1:
            raise ShapeError(f"layer {index}: maxpool window must be positive")


def _conv_out_dims(size: int, window: int, stride: int,
                   padding: str) -> tuple[int, int, int]:
    """Output length plus (before, after) zero padding for one spatial axis.

    'same' pads with zeros so that output length = ceil(size / stride),
    split as evenly as possible with the extra zero at the trailing edge.
    """
    if padding == "same":
        out = -(-size // stride)
        needed = max((out - 1) * stride + window - size, 0)
        before = needed // 2
        after = needed - before
        return out, before, after
    out = (size - window) // stride + 1
    if out < 1:
        raise ShapeError(f"window {window} does not fit input of size {size}")
    return out, 0, 0


def _layer_output_shape(layer: LayerSpec, shape: tuple[int, ...],
                        index: int) -> tuple[int, ...]:
    if layer.kind == "conv2d":
        if len(shape) != 3:
            raise ShapeError(f"layer {index}: conv2d needs a 3-D input, "
                             f"got shape {shape}")
        if layer.kernel.shape[2] != shape[2]:
            raise ShapeError(f"layer {index}: kernel expects "
                             f"{layer.kernel.shape[2]} input channels, "
                             f"input has {shape[2]}")
        lo, _, _ = _conv_out_dims(shape[0], layer.kernel.shape[0],
                                  layer.stride[0], layer.padding)
        bo, _, _ = _conv_out_dims(shape[1], layer.kernel.shape[1],
                                  layer.stride[1], layer.padding)
        return (lo, bo, layer.kernel.shape[3])
    if layer.kind == "maxpool":
        if len(shape) != 3:
            raise ShapeError(f"layer {index}: maxpool needs a 3-D input, "
                             f"got shape {shape}")
        lo = (shape[0] - layer.pool[0]) // layer.stride[0] + 1
        bo = (shape[1] - layer.pool[1]) // layer.stride[1] + 1
        if lo < 1 or bo < 1:
            raise ShapeError(f"layer {index}: pool window does not fit "
                             f"input shape {shape}")
        return (lo, bo, shape[2])
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    # dense consumes its input in row-major order, whatever its shape
    count = int(np.prod(shape))
    if layer.weights.shape[1] != count:
        raise ShapeError(f"layer {index}: dense expects input width "
                         f"{layer.weights.shape[1]}, got {count} "
                         f"(shape {shape})")
    return (layer.weights.shape[0],)


def build_network(input_shape: Sequence[int], layers: Iterable[LayerSpec],
                  head: str) -> NetworkSpec:
    """Validate a layer chain and compute its digest.

    Raises ShapeError when consecutive shapes do not chain,
    UnsupportedLayer for unknown kinds/activations or a softmax anywhere
    but the final dense layer, ParseError for structurally bad fields.
    """
    if head not in _HEADS:
        raise ParseError(f"head must be one of {_HEADS}, got {head!r}")
    input_shape = tuple(int(s) for s in input_shape)
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise ShapeError(f"input_shape must be three positive integers, "
                         f"got {input_shape}")
    layers = tuple(layers)
    if not layers:
        raise ParseError("network needs at least one layer")

    shapes: list[tuple[int, ...]] = [input_shape]
    for i, layer in enumerate(layers):
        _validate_layer(layer, i)
        if layer.activation == "softmax" and i != len(layers) - 1:
            raise UnsupportedLayer(
                f"layer {i}: softmax is allowed on the final layer only")
        shapes.append(_layer_output_shape(layer, shapes[-1], i))

    last = layers[-1]
    if last.kind != "dense":
        raise UnsupportedLayer("the final layer must be dense and carry "
                               "the probability head")
    if last.activation != head:
        raise UnsupportedLayer(
            f"final activation {last.activation!r} does not match "
            f"head {head!r}")

    spec = NetworkSpec(input_shape=input_shape, head=head, layers=layers,
                       num_classes=shapes[-1][0],
                       layer_input_shapes=tuple(shapes), digest="")
    digest = hashlib.sha256(
        network_to_canonical_json(spec).encode("ascii")).hexdigest()
    return dataclasses.replace(spec, digest=digest)


# ---------------------------------------------------------------------------
# Serialization

def _fmt_float(x: float) -> str:
    # 17 significant digits round-trip any 64-bit float exactly.
    return format(float(x), ".17g")


def _canonical_value(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _canonical_value(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical_value(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + _canonical_value(v)
            for k, v in obj.items()) + "}"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def _layer_to_dict(layer: LayerSpec) -> dict:
    if layer.kind == "conv2d":
        d = {"type": "conv2d", "kernel": layer.kernel, "bias": layer.bias,
             "stride": list(layer.stride), "padding": layer.padding,
             "activation": layer.activation}
    elif layer.kind == "maxpool":
        d = {"type": "maxpool", "pool": list(layer.pool),
             "stride": list(layer.stride)}
    elif layer.kind == "flatten":
        d = {"type": "flatten"}
    else:
        d = {"type": "dense", "weights": layer.weights, "bias": layer.bias,
             "activation": layer.activation}
    if layer.activation == "softplus":
        d["softplus_k"] = layer.softplus_k
    return d


def network_to_canonical_json(net: NetworkSpec) -> str:
    """Serialize with fixed field order and 17-significant-digit floats.

    The canonical form is the digest input, so byte stability across
    load/save round trips is part of the format contract.
    """
    doc = {"input_shape": list(net.input_shape), "head": net.head,
           "layers": [_layer_to_dict(layer) for layer in net.layers]}
    return _canonical_value(doc)


def save_network(net: NetworkSpec, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(network_to_canonical_json(net))
        fh.write("\n")


def _layer_from_dict(obj: dict, index: int) -> LayerSpec:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError(f"layer {index}: expected an object with a 'type'")
    kind = obj["type"]
    try:
        if kind == "conv2d":
            return conv2d_layer(obj["kernel"], obj["bias"],
                                stride=obj.get("stride", (1, 1)),
                                padding=obj.get("padding", "same"),
                                activation=obj.get("activation", "none"),
                                softplus_k=obj.get("softplus_k", 1.0))
        if kind == "maxpool":
            return maxpool_layer(obj["pool"], obj.get("stride"))
        if kind == "flatten":
            return flatten_layer()
        if kind == "dense":
            return dense_layer(obj["weights"], obj["bias"],
                               activation=obj.get("activation", "none"),
                               softplus_k=obj.get("softplus_k", 1.0))
    except KeyError as exc:
        raise ParseError(f"layer {index}: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"layer {index}: malformed field ({exc})") from exc
    raise UnsupportedLayer(f"layer {index}: unknown kind {kind!r}")


def load_network(path) -> NetworkSpec:
    """Parse and shape-validate a model file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    for field in ("input_shape", "head", "layers"):
        if field not in doc:
            raise ParseError(f"model document lacks {field!r}")
    if not isinstance(doc["layers"], list):
        raise ParseError("'layers' must be a list")
    layers = [_layer_from_dict(obj, i) for i, obj in enumerate(doc["layers"])]
    try:
        return build_network(doc["input_shape"], layers, doc["head"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc


def as_image_tensor(pixels, input_shape: Sequence[int]) -> np.ndarray:
    """Reshape flat row-major pixels to the network input shape."""
    arr = np.asarray(pixels, dtype=np.float64)
    expected = int(np.prod(input_shape))
    if arr.size != expected:
        raise ShapeError(f"expected {expected} pixels for shape "
                         f"{tuple(input_shape)}, got {arr.size}")
    return arr.reshape(tuple(input_shape))


def load_dataset(path, input_shape: Sequence[int]) -> list[LabeledImage]:
    """Read a labeled dataset: one JSON object per line.

    Each record is {"id": str, "pixels": [row-major floats], "label":
    [type ints]}.  Pixel values must already be normalized to [0, 1];
    out-of-range values are a load error, not clamped.
    """
    images: list[LabeledImage] = []
    seen: set[str] = set()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(
                        f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if not isinstance(obj, dict) or not {"id", "pixels",
                                                     "label"} <= obj.keys():
                    raise ParseError(f"{path}:{lineno}: record needs "
                                     "id/pixels/label")
                img_id = str(obj["id"])
                if img_id in seen:
                    raise ParseError(f"{path}:{lineno}: duplicate id "
                                     f"{img_id!r}")
                seen.add(img_id)
                pixels = as_image_tensor(obj["pixels"], input_shape)
                if not np.all(np.isfinite(pixels)):
                    raise ParseError(f"{path}:{lineno}: non-finite pixel")
                if pixels.min() < 0.0 or pixels.max() > 1.0:
                    raise ParseError(f"{path}:{lineno}: pixel outside [0,1]")
                label = frozenset(int(v) for v in obj["label"])
                if any(v < 1 for v in label):
                    raise ParseError(f"{path}:{lineno}: labels are 1-based "
                                     "positive type indices")
                images.append(LabeledImage(id=img_id, pixels=pixels,
                                           label=label))
    except OSError as exc:
        raise ParseError(f"cannot read dataset {path}: {exc}") from exc
    return images


def save_dataset(images: Iterable[LabeledImage], path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for img in images:
            doc = {"id": img.id,
                   "pixels": [float(v) for v in img.pixels.ravel()],
                   "label": sorted(img.label)}
            fh.write(_canonical_value(doc))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Forward evaluation

def _apply_activation(z: np.ndarray, layer: LayerSpec) -> np.ndarray:
    act = layer.activation
    if act == "none":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "softplus":
        k = layer.softplus_k
        return np.logaddexp(0.0, k * z) / k
    if act == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if act == "tanh":
        return np.tanh(z)
    if act == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise UnsupportedLayer(f"activation {act!r}")


def _conv_padded(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    a, b = layer.kernel.shape[0], layer.kernel.shape[1]
    _, pt, pb = _conv_out_dims(x.shape[1], a, layer.stride[0], layer.padding)
    _, pl, pr = _conv_out_dims(x.shape[2], b, layer.stride[1], layer.padding)
    if pt == pb == pl == pr == 0:
        return x
    padded = np.zeros((x.shape[0], x.shape[1] + pt + pb,
                       x.shape[2] + pl + pr, x.shape[3]), dtype=np.float64)
    padded[:, pt:pt + x.shape[1], pl:pl + x.shape[2], :] = x
    return padded


def _conv2d_linear(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Linear part of the convolution for a batch (N, L, B, c_in).

    Accumulation order is fixed: kernel rows, kernel columns, then input
    channels, so results are bit-reproducible.
    """
    kernel = layer.kernel
    a, b, cin, cout = kernel.shape
    sr, sc = layer.stride
    lo, _, _ = _conv_out_dims(x.shape[1], a, sr, layer.padding)
    bo, _, _ = _conv_out_dims(x.shape[2], b, sc, layer.padding)
    padded = _conv_padded(x, layer)
    out = np.zeros((x.shape[0], lo, bo, cout), dtype=np.float64)
    for ki in range(a):
        for kj in range(b):
            window = padded[:, ki:ki + (lo - 1) * sr + 1:sr,
                            kj:kj + (bo - 1) * sc + 1:sc, :]
            for ci in range(cin):
                patch = window[:, :, :, ci]
                for co in range(cout):
                    out[:, :, :, co] += patch * kernel[ki, kj, ci, co]
    return out


def _conv2d_pre(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    return _conv2d_linear(x, layer) + layer.bias


def _maxpool_pre(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    ph, pw = layer.pool
    sr, sc = layer.stride
    lo = (x.shape[1] - ph) // sr + 1
    bo = (x.shape[2] - pw) // sc + 1
    out = np.full((x.shape[0], lo, bo, x.shape[3]), -np.inf, dtype=np.float64)
    for wi in range(ph):
        for wj in range(pw):
            np.maximum(out, x[:, wi:wi + (lo - 1) * sr + 1:sr,
                              wj:wj + (bo - 1) * sc + 1:sc, :], out=out)
    return out


def _layer_pre(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Pre-activation output of one layer for a batch with leading axis N."""
    if layer.kind == "conv2d":
        return _conv2d_pre(x, layer)
    if layer.kind == "maxpool":
        return _maxpool_pre(x, layer)
    if layer.kind == "flatten":
        return x.reshape(x.shape[0], -1)
    return x.reshape(x.shape[0], -1) @ layer.weights.T + layer.bias


def _check_input(net: NetworkSpec, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != net.input_shape:
        raise ShapeError(f"image shape {image.shape} does not match network "
                         f"input shape {net.input_shape}")
    return image


def forward_batch(net: NetworkSpec, images: np.ndarray) -> np.ndarray:
    """Evaluate a batch with leading axis N; returns (N, k) probabilities."""
    x = np.asarray(images, dtype=np.float64)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"batch item shape {x.shape[1:]} does not match "
                         f"network input shape {net.input_shape}")
    for layer in net.layers:
        x = _apply_activation(_layer_pre(x, layer), layer)
    return x


def forward(net: NetworkSpec, image: np.ndarray) -> np.ndarray:
    """Evaluate one image; returns the probability vector p of length k."""
    image = _check_input(net, image)
    return forward_batch(net, image[None, ...])[0]


@dataclasses.dataclass(eq=False)
class ForwardTrace:
    """Per-layer records of one forward pass (single image, no batch axis).

    inputs[i] feeds layer i; pres[i] is its pre-activation output;
    outputs[i] the post-activation output.  probs is outputs[-1].
    """

    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    outputs: list[np.ndarray]

    @property
    def probs(self) -> np.ndarray:
        return self.outputs[-1]


def forward_trace(net: NetworkSpec, image: np.ndarray) -> ForwardTrace:
    image = _check_input(net, image)
    x = image[None, ...]
    inputs, pres, outputs = [], [], []
    for layer in net.layers:
        inputs.append(x[0])
        pre = _layer_pre(x, layer)
        pres.append(pre[0])
        x = _apply_activation(pre, layer)
        outputs.append(x[0])
    return ForwardTrace(inputs=inputs, pres=pres, outputs=outputs)


# ---------------------------------------------------------------------------
# Class activation functions

def _check_class_index(net: NetworkSpec, j: int) -> int:
    j = int(j)
    if not 1 <= j <= net.num_classes:
        raise IndexError(f"class index {j} outside 1..{net.num_classes}")
    return j


def omega(p: np.ndarray, j: int) -> float:
    """sum_{i != j} relu(p_i - p_j) for a probability vector (1-based j)."""
    p = np.asarray(p, dtype=np.float64)
    diffs = np.maximum(p - p[j - 1], 0.0)
    diffs[j - 1] = 0.0
    return float(diffs.sum())


def omega_sigmoid(y: np.ndarray, labels: frozenset[int] | set[int]) -> float:
    """Distance of a multi-label output from reporting exactly ``labels``.

    For a nonempty set: sum over j in labels of relu(0.5 - y_j) (zero iff
    every named type clears the 0.5 threshold).  For the empty set:
    sum over all j of relu(y_j - 0.5) (zero iff no type clears it).
    """
    y = np.asarray(y, dtype=np.float64)
    if labels:
        idx = np.array(sorted(labels), dtype=int) - 1
        if idx.min() < 0 or idx.max() >= y.size:
            raise IndexError(f"label set {set(labels)} outside 1..{y.size}")
        return float(np.maximum(0.5 - y[idx], 0.0).sum())
    return float(np.maximum(y - 0.5, 0.0).sum())


def lambda_value(net: NetworkSpec, j: int, image: np.ndarray) -> float:
    """Activation distance of ``image`` from outcome j; 0 iff the network
    reports j (softmax head: p_j is a possibly tied maximum; sigmoid head:
    y_j >= 0.5)."""
    j = _check_class_index(net, j)
    p = forward(net, image)
    if net.head == "softmax":
        return omega(p, j)
    return float(max(0.5 - p[j - 1], 0.0))


def lambda_for_labels(net: NetworkSpec, labels: frozenset[int],
                      image: np.ndarray) -> float:
    """Activation distance from a full outcome set.

    Under the softmax head the outcome set must be empty (mapped to the
    trailing "no obstacle" class) or a single type.
    """
    if net.head == "softmax":
        return lambda_value(net, _softmax_index(net, labels), image)
    p = forward(net, image)
    return omega_sigmoid(p, labels)


def _softmax_index(net: NetworkSpec, labels: frozenset[int]) -> int:
    if not labels:
        return net.num_classes
    if len(labels) > 1:
        raise IndexError("a softmax head reports at most one obstacle type, "
                         f"got outcome set {set(labels)}")
    return next(iter(labels))


def argmax_last(values: np.ndarray) -> int:
    """0-based index of the maximum, ties resolved to the last occurrence.

    This matches the derivative routing of the window-maximum decomposition,
    so the reported outcome and the calculus agree at ties; for a softmax
    head a full tie therefore resolves toward the trailing class.
    """
    values = np.asarray(values)
    return int(values.size - 1 - np.argmax(values[::-1]))


def outcome_of_probs(net: NetworkSpec, p: np.ndarray) -> frozenset[int]:
    """Network outcome as a label set: empty means "no obstacle"."""
    p = np.asarray(p, dtype=np.float64)
    if net.head == "softmax":
        winner = argmax_last(p) + 1
        return frozenset() if winner == net.num_classes else frozenset(
            {winner})
    return frozenset(int(i) + 1 for i in np.nonzero(p >= 0.5)[0])
