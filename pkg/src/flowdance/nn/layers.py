"""Parameterized layers on top of the autodiff Tensor.

Modules register parameters through attribute order, which makes
state_dict() layouts deterministic: the same construction code always
produces the same parameter names and ordering (required for byte-stable
checkpoints).
"""

from __future__ import annotations

import numpy as np

from flowdance.core.rng import RngStream
from flowdance.nn import autodiff as ad
from flowdance.nn.autodiff import Tensor


class Module:
    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()
            p.grad = None

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _he_normal(rng: RngStream, shape, fan_in: int, scale: float = 1.0, dtype=np.float32):
    std = scale * np.sqrt(2.0 / fan_in)
    return (rng.normal(shape, dtype=np.float64) * std).astype(dtype)


class Linear(Module):
    def __init__(self, rng: RngStream, d_in: int, d_out: int, bias: bool = True,
                 init_scale: float = 1.0, dtype=np.float32):
        self.weight = Tensor(_he_normal(rng, (d_out, d_in), d_in, init_scale, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, ad.transpose(self.weight))
        if self.bias is not None:
            y = ad.add(y, self.bias)
        return y


class Conv2d(Module):
    def __init__(self, rng: RngStream, c_in: int, c_out: int, k: int = 3, stride: int = 1,
                 bias: bool = True, init_scale: float = 1.0, dtype=np.float32):
        fan_in = c_in * k * k
        self.stride = stride
        self.weight = Tensor(_he_normal(rng, (c_out, c_in, k, k), fan_in, init_scale, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride)


class Conv3d(Module):
    def __init__(self, rng: RngStream, c_in: int, c_out: int, k: int = 3, stride=(1, 1, 1),
                 bias: bool = True, init_scale: float = 1.0, dtype=np.float32):
        fan_in = c_in * k * k * k
        self.stride = stride if isinstance(stride, tuple) else (stride,) * 3
        self.weight = Tensor(_he_normal(rng, (c_out, c_in, k, k, k), fan_in, init_scale, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv3d(x, self.weight, self.bias, stride=self.stride)


class GroupNorm(Module):
    """Normalize over channel groups and all spatial dims; batch-independent."""

    def __init__(self, channels: int, groups: int = 8, eps: float = 1e-5, dtype=np.float32):
        if channels % groups != 0:
            groups = 1
        self.groups = groups
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        b, c = x.shape[0], x.shape[1]
        spatial = x.shape[2:]
        g = self.groups
        xg = ad.reshape(x, (b, g, -1))
        mean = xg.mean(axis=2, keepdims=True)
        centered = ad.sub(xg, mean)
        var = ad.reduce_mean(ad.mul(centered, centered), axis=2, keepdims=True)
        xhat = ad.div(centered, ad.sqrt(ad.add(var, self.eps)))
        xhat = ad.reshape(xhat, (b, c) + spatial)
        shape = (1, c) + (1,) * len(spatial)
        return ad.add(ad.mul(xhat, ad.reshape(self.gamma, shape)),
                      ad.reshape(self.beta, shape))


class Sequential(Module):
    def __init__(self, *modules):
        self.items = list(modules)

    def forward(self, x: Tensor) -> Tensor:
        for m in self.items:
            x = m(x)
        return x


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


class Relu(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ad.relu(x)


class Silu(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ad.silu(x)
