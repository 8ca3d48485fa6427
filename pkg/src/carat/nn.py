"""Parameter containers and shared layers (linear maps, MLPs, layer norm)."""

import numpy as np

from .precision import active_dtype
from .tensor import Tensor


class Module:
    """Base class with recursive, declaration-ordered parameter discovery."""

    def named_params(self, prefix=""):
        for name, obj in vars(self).items():
            if isinstance(obj, Tensor):
                if obj.requires_grad:
                    yield f"{prefix}{name}", obj
            elif isinstance(obj, Module):
                yield from obj.named_params(f"{prefix}{name}.")
            elif isinstance(obj, (list, tuple)):
                for i, item in enumerate(obj):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{name}.{i}", item

    def params(self):
        return [p for _, p in self.named_params()]


TANH_GAIN = 5.0 / 3.0   # variance-preserving gain for tanh layers


def glorot(rng, fan_in, fan_out, shape=None, gain=1.0):
    """Glorot-scaled normal init in the active precision."""
    std = gain * np.sqrt(2.0 / (fan_in + fan_out))
    shape = shape if shape is not None else (fan_out, fan_in)
    return Tensor((rng.standard_normal(shape) * std).astype(active_dtype()), requires_grad=True)


class Linear(Module):
    """Affine map ``x @ W.T + b`` applied to the trailing axis."""

    def __init__(self, d_in, d_out, rng, zero_init=False, gain=1.0):
        if zero_init:
            self.weight = Tensor(np.zeros((d_out, d_in), dtype=active_dtype()), requires_grad=True)
        else:
            self.weight = glorot(rng, d_in, d_out, gain=gain)
        self.bias = Tensor(np.zeros(d_out, dtype=active_dtype()), requires_grad=True)

    def __call__(self, x):
        return x @ self.weight.transpose((1, 0)) + self.bias


class MLP(Module):
    """Two-layer perceptron with a tanh hidden nonlinearity.

    Both layers use the tanh gain so sample variance survives stacked MLPs;
    with plain Glorot the reconstruction pipeline squashes batch variance
    enough to stall the downstream heads.
    """

    def __init__(self, d_in, d_hidden, d_out, rng):
        self.fc1 = Linear(d_in, d_hidden, rng, gain=TANH_GAIN)
        self.fc2 = Linear(d_hidden, d_out, rng, gain=TANH_GAIN)

    def __call__(self, x):
        return self.fc2(self.fc1(x).tanh())


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gain = Tensor(np.ones(d, dtype=active_dtype()), requires_grad=True)
        self.shift = Tensor(np.zeros(d, dtype=active_dtype()), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gain + self.shift
