"""Layer primitives with explicit backward passes.

Tensors are float64 numpy arrays in NHWC layout.  Convolutions are stride-1
cross-correlations with "same" zero padding: for a kernel of size (kh, kw)
the output is

    out[n, h, w, o] = b[o] + sum_{i,j,c} x[n, h + i - kh//2, w + j - kw//2, c] * K[i, j, c, o]
"""
from __future__ import annotations

import numpy as np


class NumericError(FloatingPointError):
    """A NaN or Inf appeared in parameters, activations or gradients."""


def check_finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


def _same_pads(kh: int, kw: int):
    return (kh // 2, kh - 1 - kh // 2), (kw // 2, kw - 1 - kw // 2)


def _expand_width(xh: np.ndarray, kh: int, kw: int, pads) -> np.ndarray:
    """Zero-padded, width-expanded copy E[r, n, w, (j, c)] = x_pad[r, n, w + j, c].

    ``xh`` is height-major [H, N, W, C], so any run of kernel rows
    ``E[i:i + H]`` is a contiguous block that reshapes to a GEMM operand
    without copying.
    """
    h, n, w, c = xh.shape
    (pt, pb), (pl, _) = pads
    e = np.zeros((h + pt + pb, n, w, kw, c), dtype=xh.dtype)
    for j in range(kw):
        lo, hi = max(0, pl - j), min(w, w + pl - j)
        if lo < hi:
            e[pt:pt + h, :, lo:hi, j, :] = xh[:, :, lo + j - pl:hi + j - pl, :]
    return e.reshape(h + pt + pb, n, w, kw * c)


def _correlate(xh: np.ndarray, kernels: np.ndarray, pads) -> np.ndarray:
    """Stride-1 correlation in height-major layout, [H, N, W, Cout], no bias."""
    h, n, w, _ = xh.shape
    kh, kw, c_in, c_out = kernels.shape
    e = _expand_width(xh, kh, kw, pads)
    kr = kernels.reshape(kh, kw * c_in, c_out)
    out = e[0:h].reshape(-1, kw * c_in) @ kr[0]
    for i in range(1, kh):
        out += e[i:i + h].reshape(-1, kw * c_in) @ kr[i]
    return out.reshape(h, n, w, c_out)


def _height_major(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3))


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 4 or kernels.ndim != 4:
        raise ValueError("conv2d expects x [N,H,W,C] and kernels [kh,kw,Cin,Cout]")
    kh, kw, c_in, c_out = kernels.shape
    if x.shape[3] != c_in:
        raise ValueError(f"input has {x.shape[3]} channels, kernels expect {c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"bias shape {bias.shape} does not match {c_out} filters")
    out = _correlate(_height_major(x), kernels, _same_pads(kh, kw))
    out += bias
    return out.transpose(1, 0, 2, 3)


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernels: np.ndarray):
    """Gradients (d_input, d_kernels, d_bias) of :func:`conv2d_forward`."""
    kh, kw, c_in, c_out = kernels.shape
    n, h, w, _ = x.shape
    if grad_out.shape != (n, h, w, c_out):
        raise ValueError(f"grad_out shape {grad_out.shape} != {(n, h, w, c_out)}")
    pads = _same_pads(kh, kw)
    gh = _height_major(grad_out)
    g2 = gh.reshape(-1, c_out)
    e = _expand_width(_height_major(x), kh, kw, pads)
    d_kernels = np.empty((kh, kw * c_in, c_out), dtype=e.dtype)
    for i in range(kh):
        d_kernels[i] = e[i:i + h].reshape(-1, kw * c_in).T @ g2
    d_bias = g2.sum(axis=0)
    # d_input is a correlation of grad_out with the flipped, transposed kernel;
    # the padding mirrors the forward offsets.
    flipped = np.ascontiguousarray(kernels[::-1, ::-1].transpose(0, 1, 3, 2))
    back_pads = ((pads[0][1], pads[0][0]), (pads[1][1], pads[1][0]))
    d_input = _correlate(gh, flipped, back_pads).transpose(1, 0, 2, 3)
    return d_input, d_kernels.reshape(kh, kw, c_in, c_out), d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient 0 at x == 0
    return grad * (x > 0)


def maxpool2d_forward(x: np.ndarray, size=(2, 1)):
    """Non-overlapping max pooling; returns (output, argmax mask)."""
    ph, pw = size
    n, h, w, c = x.shape
    if h % ph or w % pw:
        raise ValueError(f"pool size {size} does not tile input {h}x{w}")
    blocks = x.reshape(n, h // ph, ph, w // pw, pw, c)
    out = blocks.max(axis=(2, 4))
    mask = blocks == out[:, :, None, :, None, :]
    # first maximum only, so ties route the gradient to a single input
    flat = mask.transpose(0, 1, 3, 5, 2, 4).reshape(n, h // ph, w // pw, c, ph * pw)
    first = np.zeros_like(flat)
    np.put_along_axis(first, flat.argmax(axis=-1)[..., None], True, axis=-1)
    mask = first.reshape(n, h // ph, w // pw, c, ph, pw).transpose(0, 1, 4, 2, 5, 3)
    return out, mask


def maxpool2d_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n, hp, ph, wp, pw, c = mask.shape
    return (mask * grad_out[:, :, None, :, None, :]).reshape(n, hp * ph, wp * pw, c)


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """logits = x @ W + b for a batch of flattened inputs x [N, n_in]."""
    x2 = x.reshape(x.shape[0], -1)
    if weights.shape[0] != x2.shape[1] or bias.shape != (weights.shape[1],):
        raise ValueError(f"weights {weights.shape} / bias {bias.shape} incompatible with input {x2.shape}")
    return x2 @ weights + bias


def fully_connected_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray):
    x2 = x.reshape(x.shape[0], -1)
    d_w = x2.T @ grad_out
    d_b = grad_out.sum(axis=0)
    d_x = (grad_out @ weights.T).reshape(x.shape)
    return d_x, d_w, d_b


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    A single 1-D logit vector with an integer label gives the per-sample loss
    ``-log p[label]`` and gradient ``p - onehot(label)``.
    """
    single = np.ndim(logits) == 1
    z = np.atleast_2d(np.asarray(logits, dtype=float))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = z.shape
    if y.shape != (n,) or y.min() < 0 or y.max() >= k:
        raise ValueError("labels must be integers in [0, n_classes)")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_norm[:, None]
    loss = -log_p[np.arange(n), y].mean()
    grad = np.exp(log_p)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return (loss, grad[0]) if single else (loss, grad)


def sgd_step(params, grads, lr: float):
    """Plain gradient descent, p <- p - lr * g; returns new arrays."""
    if not lr >= 0:
        raise ValueError("learning rate must be non-negative")
    out = []
    for p, g in zip(params, grads):
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
        out.append(p - lr * g)
    return out
