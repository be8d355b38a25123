from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops

N_CLASSES = 3


@dataclass(frozen=True)
class NetworkSpec:
    """Stacked (conv -> ReLU [-> max-pool]) blocks, then one FC layer to 3 logits.

    The default kernel is 13 x W/4: 13x2 for 64x8x2 range images and 13x4 for
    64x16x2 range-angle images.
    """
    input_shape: tuple = (64, 8, 2)
    conv_blocks: int = 2
    filters: int = 16
    kernel: tuple | None = None
    pool: tuple | None = None

    def __post_init__(self):
        h, w, c = self.input_shape
        if self.kernel is None:
            object.__setattr__(self, "kernel", (13, max(w // 4, 1)))
        kh, kw = self.kernel
        if kh > h or kw > w or kh < 1 or kw < 1:
            raise ValueError(f"kernel {self.kernel} does not fit input {self.input_shape}")
        if self.filters < 1 or self.conv_blocks < 1:
            raise ValueError("need at least one conv block with at least one filter")

    @classmethod
    def for_input(cls, input_shape, **kw) -> "NetworkSpec":
        return cls(input_shape=tuple(int(v) for v in input_shape), **kw)

    def feature_shape(self) -> tuple:
        h, w, _ = self.input_shape
        if self.pool:
            for _ in range(self.conv_blocks):
                h //= self.pool[0]
                w //= self.pool[1]
        return h, w, self.filters

    def param_shapes(self) -> dict:
        kh, kw = self.kernel
        shapes = {}
        c_in = self.input_shape[2]
        for i in range(self.conv_blocks):
            shapes[f"conv{i}.w"] = (kh, kw, c_in, self.filters)
            shapes[f"conv{i}.b"] = (self.filters,)
            c_in = self.filters
        shapes["fc.w"] = (int(np.prod(self.feature_shape())), N_CLASSES)
        shapes["fc.b"] = (N_CLASSES,)
        return shapes


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> dict:
    """He (fan-in) scaled normal weights, zero biases."""
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return params


class Network:
    def __init__(self, spec: NetworkSpec, params: dict | None = None, seed: int = 0):
        self.spec = spec
        if params is None:
            params = init_params(spec, np.random.default_rng(seed))
        shapes = spec.param_shapes()
        if set(params) != set(shapes):
            raise ValueError(f"parameter names {sorted(params)} do not match {sorted(shapes)}")
        for name, shape in shapes.items():
            if tuple(params[name].shape) != tuple(shape):
                raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.params = {k: np.array(params[k], dtype=np.float64) for k in shapes}

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()})

    def _check_input(self, x):
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ValueError(f"input shape {x.shape[1:]} does not match network {self.spec.input_shape}")

    def forward(self, x: np.ndarray, keep: bool = False):
        """Logits [N, 3]; with ``keep`` also returns the cache for :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        cache = []
        a = x
        for i in range(self.spec.conv_blocks):
            z = ops.conv2d_forward(a, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])
            r = ops.relu(z)
            mask = None
            if self.spec.pool:
                r, mask = ops.maxpool2d_forward(r, self.spec.pool)
            if keep:
                cache.append((a, z, mask))
            a = r
        logits = ops.fully_connected(a, self.params["fc.w"], self.params["fc.b"])
        ops.check_finite("logits", logits)
        if keep:
            cache.append(a)
            return logits, cache
        return logits

    def backward(self, grad_logits: np.ndarray, cache) -> dict:
        grads = {}
        feat = cache[-1]
        d, grads["fc.w"], grads["fc.b"] = ops.fully_connected_backward(grad_logits, feat, self.params["fc.w"])
        for i in reversed(range(self.spec.conv_blocks)):
            a, z, mask = cache[i]
            if mask is not None:
                d = ops.maxpool2d_backward(d, mask)
            d = ops.relu_backward(d, z)
            d, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = ops.conv2d_backward(d, a, self.params[f"conv{i}.w"])
        return grads

    def loss_and_grads(self, x, labels):
        logits, cache = self.forward(x, keep=True)
        loss, g = ops.softmax_cross_entropy(logits, labels)
        return loss, logits, self.backward(g, cache)

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])
