"""Layers and module containers built on the Tensor autodiff core.

Modules register Parameters and sub-modules by attribute assignment.
named_parameters() walks the tree and yields dotted names in a stable
order, which the checkpoint format and the optimizers both depend on.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Parameter, Tensor, gaussian_init


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ShapeError(f"state dict mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ShapeError(f"state dict entry {name}: shape {arr.shape} vs parameter {p.data.shape}")
            p.data = arr.copy()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


@contextlib.contextmanager
def frozen_params(module: Module):
    """Temporarily drop requires_grad on a module's parameters.

    Gradients still flow *through* the module to its inputs; they are just
    not accumulated into its own weights. This is exactly what the
    confusion step of adversarial training needs.
    """
    params = module.parameters()
    prev = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, r in zip(params, prev):
            p.requires_grad = r


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        idx = len(self._items)
        self._items.append(module)
        self._modules[str(idx)] = module

    def __getitem__(self, idx: int) -> Module:
        return self._items[idx]

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = ModuleList(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def _kaiming_std(fan_in: int) -> float:
    return float(np.sqrt(2.0 / fan_in))


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, dilation=1, rng=None, bias=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        rng = T.make_rng(0, "conv2d") if rng is None else rng
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            gaussian_init((out_channels, in_channels, kernel_size, kernel_size), rng, _kaiming_std(fan_in))
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, dilation=self.dilation, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, rng=None, bias=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = T.make_rng(0, "convT") if rng is None else rng
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            gaussian_init((in_channels, out_channels, kernel_size, kernel_size), rng, _kaiming_std(fan_in))
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None

    def forward(self, x):
        return T.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, in_features, out_features, rng=None, bias=True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = T.make_rng(0, "linear") if rng is None else rng
        self.weight = Parameter(gaussian_init((in_features, out_features), rng, _kaiming_std(in_features)))
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x):
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            b = T.reshape(self.bias, (1, self.out_features))
            # row-broadcast add: replicate bias over the batch
            out = T.add(out, _broadcast_rows(b, out.shape[0]))
        return out


def _broadcast_rows(row: Tensor, n: int) -> Tensor:
    """(1, F) -> (N, F) with gradient summed back over rows."""
    if row.shape[0] != 1:
        raise ShapeError(f"_broadcast_rows expects a single row, got {row.shape}")
    data = np.broadcast_to(row.data, (n, row.shape[1]))
    return T._from_op(np.ascontiguousarray(data), (row,), lambda g: (g.sum(axis=0, keepdims=True),))


class LeakyReLU(Module):
    def __init__(self, negative_slope: float = 0.1):
        super().__init__()
        self.negative_slope = negative_slope

    def forward(self, x):
        return T.leaky_relu(x, self.negative_slope)


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class PixelShuffle(Module):
    def __init__(self, upscale_factor: int):
        super().__init__()
        self.upscale_factor = upscale_factor

    def forward(self, x):
        return T.pixel_shuffle(x, self.upscale_factor)
