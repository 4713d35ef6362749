"""Layers and parameter containers built on the autodiff engine."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    """Tiny module container: tracks sub-modules, parameters and buffers
    by attribute name, supports train/eval mode and state dicts."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and not isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for _, child in self._children():
            yield from child.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def state_dict(self) -> dict:
        out = {}
        for name, p in self.named_parameters():
            out[name] = p.data
        for name, b in self.named_buffers():
            out[name] = b.data
        return out

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        own.update(dict(self.named_buffers()))
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()

    def astype(self, dtype):
        for _, t in list(self.named_parameters()) + list(self.named_buffers()):
            t.data = t.data.astype(dtype)
        return self


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator,
                 kernel: int = 3, stride: int = 1, pad_mode: str = "reflect",
                 bias: bool = True, gain: float = 2.0):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2
        self.pad_mode = pad_mode
        fan_in = in_ch * kernel * kernel
        std = np.sqrt(gain / fan_in)
        self.weight = Parameter(rng.normal(0.0, std, (out_ch, in_ch, kernel, kernel)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_ch, dtype=np.float32)) if bias else None

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride,
                         padding=self.padding, pad_mode=self.pad_mode)


class Linear(Module):
    def __init__(self, in_f: int, out_f: int, rng: np.random.Generator):
        super().__init__()
        std = np.sqrt(1.0 / in_f)
        self.weight = Parameter(rng.normal(0.0, std, (in_f, out_f)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_f, dtype=np.float32))

    def forward(self, x):
        return ad.matmul(x, self.weight) + self.bias


class InstanceNorm2d(Module):
    def __init__(self, ch: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones((1, ch, 1, 1), dtype=np.float32))
        self.beta = Parameter(np.zeros((1, ch, 1, 1), dtype=np.float32))

    def forward(self, x):
        mu = ad.mean(x, axis=(2, 3), keepdims=True)
        xc = x - mu
        var = ad.mean(xc * xc, axis=(2, 3), keepdims=True)
        xhat = xc * (var + self.eps) ** -0.5
        return xhat * self.gamma + self.beta


class BatchNorm2d(Module):
    def __init__(self, ch: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.frozen = False  # when True, behaves like eval mode regardless of training flag
        self.gamma = Parameter(np.ones((1, ch, 1, 1), dtype=np.float32))
        self.beta = Parameter(np.zeros((1, ch, 1, 1), dtype=np.float32))
        self.running_mean = Tensor(np.zeros((1, ch, 1, 1), dtype=np.float32))
        self.running_var = Tensor(np.ones((1, ch, 1, 1), dtype=np.float32))

    def forward(self, x):
        if self.training and not self.frozen:
            mu = ad.mean(x, axis=(0, 2, 3), keepdims=True)
            xc = x - mu
            var = ad.mean(xc * xc, axis=(0, 2, 3), keepdims=True)
            m = self.momentum
            rdt = self.running_mean.data.dtype
            self.running_mean.data = (1 - m) * self.running_mean.data + m * mu.data.astype(rdt)
            self.running_var.data = (1 - m) * self.running_var.data + m * var.data.astype(rdt)
            xhat = xc * (var + self.eps) ** -0.5
        else:
            xhat = (x - self.running_mean) * Tensor((self.running_var.data + self.eps) ** -0.5)
        return xhat * self.gamma + self.beta


class ReLU(Module):
    def forward(self, x):
        return ad.relu(x)


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        return ad.leaky_relu(x, self.slope)


class Tanh(Module):
    def forward(self, x):
        return ad.tanh(x)


class Upsample2x(Module):
    def forward(self, x):
        return ad.upsample_nearest2d(x, 2)
