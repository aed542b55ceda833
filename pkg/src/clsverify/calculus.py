"""Derivatives of the layer chain and of the class-activation functions,
defined everywhere, including points where the chain is not differentiable.

Non-differentiable points arise from relu kinks and from window-maximum
ties.  The derivative used here is total by convention:

* relu gets derivative 0 at a pre-activation of exactly 0;
* the window maximum is read as the nested decomposition
  max(x, y) = y + relu(x - y) over the window in row-major order, which
  routes the derivative to the LAST maximal element at ties.

With these conventions the chain rule yields one well-defined Jacobian per
layer (``layer_jacobian``) and one gradient of the class activation at every
input (``gradient_lambda``, computed as a reverse sweep; its agreement with
the explicit Jacobian product is a tested invariant).

At the boundary of the pixel domain [0, 1]^n two-sided derivatives do not
exist, so ``boundary_gradient`` combines, per coordinate, the one-sided
derivative pointing into the domain (from above at 0, from below at 1) with
the ordinary convention derivative at interior coordinates.  One-sided
derivatives follow the actual limit: a relu kink passes the tangent exactly
when the propagated tangent is positive, and a tied window maximum takes the
largest tangent among the tied elements.  Values are reported in standard
slope orientation, so at a pixel sitting at 1 the entry is the limit of
difference quotients from below (the negative of the derivative taken along
the inward direction).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .model import (LayerSpec, NetworkSpec, _check_class_index, _check_input,
                    _conv_out_dims, _conv2d_linear, _layer_pre, _softmax_index,
                    forward_trace)

__all__ = [
    "layer_jacobian",
    "network_jacobian",
    "omega_gradient",
    "gradient_lambda",
    "gradient_for_labels",
    "boundary_gradient",
    "boundary_gradient_for_labels",
    "network_jvp",
]


# ---------------------------------------------------------------------------
# Per-layer Jacobians (dense matrices)

def _maxpool_selection(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Flat input index selected by each pooled output element.

    x has shape (L, B, ch); the result has the pooled output shape and
    holds flat row-major indices into x.  Ties select the last maximal
    window element in row-major window order.
    """
    ph, pw = layer.pool
    sr, sc = layer.stride
    lo = (x.shape[0] - ph) // sr + 1
    bo = (x.shape[1] - pw) // sc + 1
    ch = x.shape[2]
    strides_flat = np.array([x.shape[1] * ch, ch, 1])
    best_val = np.full((lo, bo, ch), -np.inf)
    best_idx = np.zeros((lo, bo, ch), dtype=np.int64)
    oi = np.arange(lo)[:, None, None]
    oj = np.arange(bo)[None, :, None]
    och = np.arange(ch)[None, None, :]
    for wi in range(ph):
        for wj in range(pw):
            vals = x[wi:wi + (lo - 1) * sr + 1:sr,
                     wj:wj + (bo - 1) * sc + 1:sc, :]
            flat = ((oi * sr + wi) * strides_flat[0]
                    + (oj * sc + wj) * strides_flat[1] + och)
            take = vals >= best_val  # ties go to the later window element
            best_val = np.where(take, vals, best_val)
            best_idx = np.where(take, flat, best_idx)
    return best_idx


def _conv_linear_matrix(layer: LayerSpec, in_shape: tuple[int, ...]) -> np.ndarray:
    length, width, cin = in_shape
    a, b, _, cout = layer.kernel.shape
    sr, sc = layer.stride
    lo, pt, _ = _conv_out_dims(length, a, sr, layer.padding)
    bo, pl, _ = _conv_out_dims(width, b, sc, layer.padding)
    mat = np.zeros((lo * bo * cout, length * width * cin))
    oi = np.arange(lo)[:, None]
    oj = np.arange(bo)[None, :]
    for ki in range(a):
        for kj in range(b):
            ri = oi * sr + ki - pt
            cj = oj * sc + kj - pl
            valid = (ri >= 0) & (ri < length) & (cj >= 0) & (cj < width)
            if not valid.any():
                continue
            out_rc = np.broadcast_to((oi * bo + oj), (lo, bo))[valid]
            in_rc = (ri * width + cj)[valid]
            for ci in range(cin):
                cols = in_rc * cin + ci
                for co in range(cout):
                    rows = out_rc * cout + co
                    mat[rows, cols] += layer.kernel[ki, kj, ci, co]
    return mat


def _activation_jacobian(layer: LayerSpec, pre: np.ndarray,
                         linear: np.ndarray) -> np.ndarray:
    """Compose the activation derivative onto the linear Jacobian."""
    act = layer.activation
    z = pre.ravel()
    if act == "none":
        return linear
    if act == "relu":
        return linear * (z > 0.0)[:, None]
    if act == "softplus":
        k = layer.softplus_k
        return linear * (0.5 * (1.0 + np.tanh(0.5 * k * z)))[:, None]
    if act == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return linear * (s * (1.0 - s))[:, None]
    if act == "tanh":
        return linear * (1.0 - np.tanh(z) ** 2)[:, None]
    # softmax
    shifted = z - z.max()
    e = np.exp(shifted)
    p = e / e.sum()
    return (np.diag(p) - np.outer(p, p)) @ linear


def layer_jacobian(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    """Dense Jacobian of one full layer (affine or pooling part plus
    activation) at input x, under the conventions stated above.

    Rows index the flattened layer output, columns the flattened input.
    """
    x = np.asarray(x, dtype=np.float64)
    if layer.kind == "dense":
        if layer.weights.shape[1] != x.size:
            raise ShapeError(f"dense layer expects an input of width "
                             f"{layer.weights.shape[1]}, got shape {x.shape}")
        linear = layer.weights
    elif layer.kind == "flatten":
        linear = np.eye(x.size)
    elif layer.kind == "maxpool":
        if x.ndim != 3:
            raise ShapeError(f"maxpool expects a 3-D input, got {x.shape}")
        sel = _maxpool_selection(x, layer).ravel()
        linear = np.zeros((sel.size, x.size))
        linear[np.arange(sel.size), sel] = 1.0
    elif layer.kind == "conv2d":
        if x.ndim != 3 or x.shape[2] != layer.kernel.shape[2]:
            raise ShapeError(f"conv2d expects (L, B, {layer.kernel.shape[2]}),"
                             f" got {x.shape}")
        linear = _conv_linear_matrix(layer, x.shape)
    else:
        raise ShapeError(f"unknown layer kind {layer.kind!r}")
    pre = _layer_pre(x[None, ...], layer)[0]
    return _activation_jacobian(layer, pre, linear)


def network_jacobian(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """Dense Jacobian of the whole network at x, rows indexing the output
    classes and columns the flattened input.

    Chains the explicit per-layer matrices, so it costs memory quadratic
    in the widest layer; meant for small networks and as a cross check of
    the reverse sweep.
    """
    x = _check_input(net, x)
    trace = forward_trace(net, x)
    jac = None
    for layer, x_in in zip(net.layers, trace.inputs):
        step = layer_jacobian(layer, x_in)
        jac = step if jac is None else step @ jac
    return jac


# ---------------------------------------------------------------------------
# Gradient of the class activation (reverse sweep)

def omega_gradient(net: NetworkSpec, j: int, p: np.ndarray) -> np.ndarray:
    """Gradient of the class-j activation distance with respect to the
    network output, with relu'(0) = 0 at threshold ties."""
    j = _check_class_index(net, j)
    p = np.asarray(p, dtype=np.float64)
    g = np.zeros_like(p)
    if net.head == "softmax":
        active = (p - p[j - 1]) > 0.0
        active[j - 1] = False
        g[active] = 1.0
        g[j - 1] = -float(active.sum())
        return g
    if (0.5 - p[j - 1]) > 0.0:
        g[j - 1] = -1.0
    return g


def _omega_gradient_labels(net: NetworkSpec, labels: frozenset[int],
                           p: np.ndarray) -> np.ndarray:
    if net.head == "softmax":
        return omega_gradient(net, _softmax_index(net, labels), p)
    g = np.zeros_like(np.asarray(p, dtype=np.float64))
    if labels:
        for j in labels:
            if (0.5 - p[j - 1]) > 0.0:
                g[j - 1] = -1.0
        return g
    g[(p - 0.5) > 0.0] = 1.0
    return g


def _activation_vjp(layer: LayerSpec, pre: np.ndarray, out: np.ndarray,
                    g: np.ndarray) -> np.ndarray:
    act = layer.activation
    if act == "none":
        return g
    if act == "relu":
        return g * (pre > 0.0)
    if act == "softplus":
        return g * (0.5 * (1.0 + np.tanh(0.5 * layer.softplus_k * pre)))
    if act == "sigmoid":
        return g * (out * (1.0 - out))
    if act == "tanh":
        return g * (1.0 - out ** 2)
    # softmax; its Jacobian diag(p) - p p^T is symmetric
    return out * g - out * float(out @ g)


def _conv2d_adjoint(g_out: np.ndarray, layer: LayerSpec,
                    in_shape: tuple[int, ...]) -> np.ndarray:
    length, width, cin = in_shape
    a, b, _, cout = layer.kernel.shape
    sr, sc = layer.stride
    lo, pt, pb = _conv_out_dims(length, a, sr, layer.padding)
    bo, pl, pr = _conv_out_dims(width, b, sc, layer.padding)
    g_pad = np.zeros((length + pt + pb, width + pl + pr, cin))
    for ki in range(a):
        for kj in range(b):
            window = g_pad[ki:ki + (lo - 1) * sr + 1:sr,
                           kj:kj + (bo - 1) * sc + 1:sc, :]
            for ci in range(cin):
                for co in range(cout):
                    window[:, :, ci] += g_out[:, :, co] * layer.kernel[
                        ki, kj, ci, co]
    return g_pad[pt:pt + length, pl:pl + width, :]


def _layer_vjp(layer: LayerSpec, x_in: np.ndarray, pre: np.ndarray,
               out: np.ndarray, g: np.ndarray) -> np.ndarray:
    g = _activation_vjp(layer, pre, out, g)
    if layer.kind == "dense":
        return (layer.weights.T @ g).reshape(x_in.shape)
    if layer.kind == "flatten":
        return g.reshape(x_in.shape)
    if layer.kind == "maxpool":
        sel = _maxpool_selection(x_in, layer).ravel()
        g_in = np.zeros(x_in.size)
        np.add.at(g_in, sel, g.ravel())
        return g_in.reshape(x_in.shape)
    return _conv2d_adjoint(g, layer, x_in.shape)


def gradient_lambda(net: NetworkSpec, j: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the class-j activation distance at x, shaped like x.

    At inner points of the zero set every relu argument of the activation
    distance is nonpositive, so the result is exactly the zero vector.
    """
    j = _check_class_index(net, j)
    return _reverse_sweep(net, x, lambda p: omega_gradient(net, j, p))


def gradient_for_labels(net: NetworkSpec, labels: frozenset[int],
                        x: np.ndarray) -> np.ndarray:
    """Gradient of the activation distance for a full outcome set."""
    return _reverse_sweep(
        net, x, lambda p: _omega_gradient_labels(net, labels, p))


def _reverse_sweep(net: NetworkSpec, x: np.ndarray, seed_grad) -> np.ndarray:
    x = _check_input(net, x)
    trace = forward_trace(net, x)
    g = seed_grad(trace.probs)
    for i in range(len(net.layers) - 1, -1, -1):
        g = _layer_vjp(net.layers[i], trace.inputs[i], trace.pres[i],
                       trace.outputs[i], g)
    return g.reshape(net.input_shape)


# ---------------------------------------------------------------------------
# Forward-mode tangents (shared by boundary handling and null-space checks)

def _maxpool_jvp(x: np.ndarray, tans: np.ndarray, layer: LayerSpec,
                 onesided: np.ndarray) -> np.ndarray:
    """Tangents through the window maximum; x is (L, B, ch), tans is
    (cols, L, B, ch), onesided is a (cols,) bool mask."""
    ph, pw = layer.pool
    sr, sc = layer.stride
    lo = (x.shape[0] - ph) // sr + 1
    bo = (x.shape[1] - pw) // sc + 1
    cols = tans.shape[0]
    best_val = np.full((lo, bo, x.shape[2]), -np.inf)
    for wi in range(ph):
        for wj in range(pw):
            vals = x[wi:wi + (lo - 1) * sr + 1:sr,
                     wj:wj + (bo - 1) * sc + 1:sc, :]
            np.maximum(best_val, vals, out=best_val)
    last_tan = np.zeros((cols, lo, bo, x.shape[2]))
    max_tan = np.full((cols, lo, bo, x.shape[2]), -np.inf)
    for wi in range(ph):
        for wj in range(pw):
            vals = x[wi:wi + (lo - 1) * sr + 1:sr,
                     wj:wj + (bo - 1) * sc + 1:sc, :]
            tvals = tans[:, wi:wi + (lo - 1) * sr + 1:sr,
                         wj:wj + (bo - 1) * sc + 1:sc, :]
            tie = (vals == best_val)[None, ...]
            last_tan = np.where(tie, tvals, last_tan)
            max_tan = np.where(tie, np.maximum(max_tan, tvals), max_tan)
    side = onesided[:, None, None, None]
    return np.where(side, max_tan, last_tan)


def _layer_jvp(layer: LayerSpec, x_in: np.ndarray, pre: np.ndarray,
               out: np.ndarray, tans: np.ndarray,
               onesided: np.ndarray) -> np.ndarray:
    if layer.kind == "dense":
        tans = tans.reshape(tans.shape[0], -1) @ layer.weights.T
    elif layer.kind == "flatten":
        tans = tans.reshape(tans.shape[0], -1)
    elif layer.kind == "conv2d":
        tans = _conv2d_linear(tans, layer)
    else:
        return _maxpool_jvp(x_in, tans, layer, onesided)

    act = layer.activation
    if act == "none":
        return tans
    if act == "relu":
        passed = np.where(pre > 0.0, tans, 0.0)
        if onesided.any():
            side = onesided.reshape((-1,) + (1,) * (tans.ndim - 1))
            at_kink = (pre == 0.0)
            passed = np.where(at_kink & side, np.maximum(tans, 0.0), passed)
        return passed
    if act == "softplus":
        return tans * (0.5 * (1.0 + np.tanh(0.5 * layer.softplus_k * pre)))
    if act == "sigmoid":
        return tans * (out * (1.0 - out))
    if act == "tanh":
        return tans * (1.0 - out ** 2)
    # softmax
    return out * tans - (tans @ out)[:, None] * out


def _network_jvp_trace(net: NetworkSpec, x: np.ndarray, tangents: np.ndarray,
                       onesided: np.ndarray):
    trace = forward_trace(net, x)
    tans = tangents
    for i, layer in enumerate(net.layers):
        tans = _layer_jvp(layer, trace.inputs[i], trace.pres[i],
                          trace.outputs[i], tans, onesided)
    return trace, tans


def network_jvp(net: NetworkSpec, x: np.ndarray,
                tangents: np.ndarray) -> np.ndarray:
    """Convention-Jacobian of the network applied to a batch of tangents.

    tangents has shape (cols, *input_shape); the result is (cols, k).
    Directions in the Jacobian's null space return exactly zero rows.
    """
    x = _check_input(net, x)
    tangents = np.asarray(tangents, dtype=np.float64)
    if tangents.shape[1:] != net.input_shape:
        raise ShapeError(f"tangent item shape {tangents.shape[1:]} does not "
                         f"match network input shape {net.input_shape}")
    _, out = _network_jvp_trace(net, x, tangents,
                                np.zeros(tangents.shape[0], dtype=bool))
    return out


def _omega_jvp(net: NetworkSpec, labels: frozenset[int], p: np.ndarray,
               w: np.ndarray, onesided: np.ndarray) -> np.ndarray:
    """Tangent of the activation-distance for output tangents w (cols, k)."""
    def relu_branch(arg: float, tan: np.ndarray) -> np.ndarray:
        if arg > 0.0:
            return tan
        if arg < 0.0:
            return np.zeros_like(tan)
        return np.where(onesided, np.maximum(tan, 0.0), 0.0)

    cols = w.shape[0]
    total = np.zeros(cols)
    if net.head == "softmax":
        j = _softmax_index(net, labels)
        for i in range(net.num_classes):
            if i == j - 1:
                continue
            total += relu_branch(float(p[i] - p[j - 1]),
                                 w[:, i] - w[:, j - 1])
        return total
    if labels:
        for j in sorted(labels):
            total += relu_branch(float(0.5 - p[j - 1]), -w[:, j - 1])
        return total
    for i in range(p.size):
        total += relu_branch(float(p[i] - 0.5), w[:, i])
    return total


def boundary_gradient(net: NetworkSpec, j: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the class-j activation distance with boundary pixels
    handled by inward one-sided derivatives; see the module docstring for
    orientation.  Interior pixels get the ordinary convention derivative,
    so for an all-interior image this equals ``gradient_lambda``.
    """
    j = _check_class_index(net, j)
    return _boundary_sweep(net, frozenset({j}) if j < net.num_classes
                           or net.head == "sigmoid" else frozenset(), x)


def boundary_gradient_for_labels(net: NetworkSpec, labels: frozenset[int],
                                 x: np.ndarray) -> np.ndarray:
    return _boundary_sweep(net, labels, x)


def _boundary_sweep(net: NetworkSpec, labels: frozenset[int],
                    x: np.ndarray) -> np.ndarray:
    x = _check_input(net, x)
    n = x.size
    flat = x.ravel()
    at_zero = flat == 0.0
    at_one = flat == 1.0
    signs = np.where(at_one, -1.0, 1.0)
    tangents = (np.eye(n) * signs).reshape((n,) + net.input_shape)
    onesided = at_zero | at_one
    trace, w = _network_jvp_trace(net, x, tangents, onesided)
    deriv = _omega_jvp(net, labels, trace.probs, w, onesided)
    # Columns probed along -e_i report the slope in standard orientation.
    return (deriv * signs).reshape(net.input_shape)
