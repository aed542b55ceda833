"""Independent oracles for the test suite.

Everything here is written as plain loops against the layer definitions,
sharing no code path with the package, so agreement between the two is
evidence and not tautology.  Keep it slow and obvious.
"""

from __future__ import annotations

import math

import numpy as np


def relu(v: float) -> float:
    return v if v > 0.0 else 0.0


def relu_prime(v: float) -> float:
    # derivative 0 at the kink, by the package-wide convention
    return 1.0 if v > 0.0 else 0.0


def softmax_reference(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.array([math.exp(v - max(z)) for v in z])
    return e / e.sum()


def conv2d_reference(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                     stride: tuple[int, int]) -> np.ndarray:
    """Zero-padded ("same") convolution with explicit loops."""
    rows, cols, chans = x.shape
    kh, kw, _, out_ch = kernel.shape
    sr, sc = stride
    out_r = -(-rows // sr)
    out_c = -(-cols // sc)
    pad_r = max((out_r - 1) * sr + kh - rows, 0)
    pad_c = max((out_c - 1) * sc + kw - cols, 0)
    top, left = pad_r // 2, pad_c // 2
    out = np.zeros((out_r, out_c, out_ch))
    for i in range(out_r):
        for j in range(out_c):
            for o in range(out_ch):
                acc = bias[o]
                for di in range(kh):
                    for dj in range(kw):
                        ri = i * sr + di - top
                        cj = j * sc + dj - left
                        if 0 <= ri < rows and 0 <= cj < cols:
                            for c in range(chans):
                                acc += x[ri, cj, c] * kernel[di, dj, c, o]
                out[i, j, o] = acc
    return out


def maxpool_reference(x: np.ndarray, pool: tuple[int, int],
                      stride: tuple[int, int]) -> np.ndarray:
    rows, cols, chans = x.shape
    ph, pw = pool
    sr, sc = stride
    out_r = (rows - ph) // sr + 1
    out_c = (cols - pw) // sc + 1
    out = np.zeros((out_r, out_c, chans))
    for i in range(out_r):
        for j in range(out_c):
            for c in range(chans):
                out[i, j, c] = max(x[i * sr + di, j * sc + dj, c]
                                   for di in range(ph) for dj in range(pw))
    return out


def forward_reference(net, image: np.ndarray) -> np.ndarray:
    """Layer-by-layer forward pass against the loop kernels above."""
    x = np.asarray(image, dtype=np.float64)
    for layer in net.layers:
        if layer.kind == "conv2d":
            x = conv2d_reference(x, layer.kernel, layer.bias, layer.stride)
        elif layer.kind == "maxpool":
            x = maxpool_reference(x, layer.pool, layer.stride)
        elif layer.kind == "flatten":
            x = x.reshape(-1)
        else:
            x = layer.weights @ x.reshape(-1) + layer.bias
        if layer.activation == "relu":
            x = np.vectorize(relu)(x)
        elif layer.activation == "softplus":
            k = layer.softplus_k
            x = np.array([math.log1p(math.exp(-abs(k * v))) / k
                          + max(v, 0.0) for v in x.reshape(-1)]
                         ).reshape(x.shape)
        elif layer.activation == "sigmoid":
            x = np.array([1.0 / (1.0 + math.exp(-v))
                          for v in x.reshape(-1)]).reshape(x.shape)
        elif layer.activation == "tanh":
            x = np.tanh(x)
        elif layer.activation == "softmax":
            x = softmax_reference(x.reshape(-1))
    return x


def omega_reference(p: np.ndarray, j: int) -> float:
    """Softmax-head activation distance of class j, direct loop."""
    return math.fsum(relu(p[i] - p[j - 1])
                     for i in range(len(p)) if i != j - 1)


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return g


def nested_max_gradient(window: np.ndarray) -> np.ndarray:
    """Gradient of max over a flat window via the nested decomposition
    max(x, y) = y + relu(x - y), folded left to right, with relu'(0) = 0.

    Folding in flat order makes the running maximum the LAST maximal
    element seen so far, which is the tie convention under test.
    """
    w = np.asarray(window, dtype=np.float64).reshape(-1)
    grad = np.zeros(len(w))
    grad[0] = 1.0
    acc = w[0]
    for i in range(1, len(w)):
        # max(acc, w_i) = w_i + relu(acc - w_i)
        d = relu_prime(acc - w[i])
        grad *= d
        grad[i] = 1.0 - d
        # the identity is exact in reals, but evaluating w_i + (acc - w_i)
        # in floats rounds and can misroute the next tie; keep the branch
        # value itself
        acc = acc if d == 1.0 else w[i]
    return grad


def harmonic_expected_draws(count: int) -> float:
    """Closed form for the uniform coupon problem."""
    return count * math.fsum(1.0 / k for k in range(1, count + 1))


def miss_probability(p: float, draws: int) -> float:
    """Chance that a category of probability p is absent from a sample."""
    return (1.0 - p) ** draws
