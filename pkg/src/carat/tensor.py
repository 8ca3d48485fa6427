"""Dense tensors with reverse-mode differentiation on top of numpy.

Every downstream computation is expressed through the operations here.  A
Tensor wraps a numpy array in the active precision (see precision.py) and,
when gradients are enabled, records a backward closure so that calling
``backward()`` on a scalar result accumulates ``.grad`` on every
requires-grad leaf.  All reductions are single-threaded numpy reductions,
so results are bit-deterministic for a fixed seed, precision mode and
thread count.
"""

import contextlib

import numpy as np

from .errors import InputError
from .precision import active_dtype

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (value-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A dense array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_grad_owned")

    # make ndarray <op> Tensor defer to the reflected Tensor operator
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=active_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()
        self._grad_owned = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = True
        out._backward = backward
        out._prev = parents
        out._grad_owned = False
        return out

    @staticmethod
    def _result(data, parents, backward_factory):
        """Wrap an op result; records the graph only if needed."""
        if _grad_enabled:
            parents = tuple(p for p in parents if isinstance(p, Tensor) and p.requires_grad)
            if parents:
                return Tensor._from_op(data, parents, backward_factory())
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out._backward = None
        out._prev = ()
        out._grad_owned = False
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        # first gradient is borrowed (no copy); a second one forces a fresh
        # buffer so shared/viewed arrays are never mutated in place
        if g.dtype != self.data.dtype:
            g = g.astype(self.data.dtype)
        if self.grad is None:
            self.grad = g
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data

        def make():
            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g, other.data.shape))
            return backward

        return Tensor._result(out_data, (self, other), make)

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data

        def make():
            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g * self.data, other.data.shape))
            return backward

        return Tensor._result(out_data, (self, other), make)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data

        def make():
            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(-g * self.data / (other.data * other.data),
                                              other.data.shape))
            return backward

        return Tensor._result(out_data, (self, other), make)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise InputError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def make():
            def backward(g):
                if self.requires_grad:
                    self._accum(g * exponent * self.data ** (exponent - 1))
            return backward

        return Tensor._result(out_data, (self,), make)

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise InputError("matmul requires operands with ndim >= 2")
        out_data = self.data @ other.data

        def make():
            def backward(g):
                if self.requires_grad:
                    ga = g @ other.data.swapaxes(-1, -2)
                    self._accum(_unbroadcast(ga, self.data.shape))
                if other.requires_grad:
                    gb = self.data.swapaxes(-1, -2) @ g
                    other._accum(_unbroadcast(gb, other.data.shape))
            return backward

        return Tensor._result(out_data, (self, other), make)

    # -- elementwise functions ------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def make():
            def backward(g):
                self._accum(g * out_data)
            return backward

        return Tensor._result(out_data, (self,), make)

    def log(self):
        out_data = np.log(self.data)

        def make():
            def backward(g):
                self._accum(g / self.data)
            return backward

        return Tensor._result(out_data, (self,), make)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def make():
            def backward(g):
                self._accum(g * 0.5 / out_data)
            return backward

        return Tensor._result(out_data, (self,), make)

    def tanh(self):
        out_data = np.tanh(self.data)

        def make():
            def backward(g):
                self._accum(g * (1.0 - out_data * out_data))
            return backward

        return Tensor._result(out_data, (self,), make)

    def sigmoid(self):
        # exp(-|x|) never overflows; both branches share it
        e = np.exp(-np.abs(self.data))
        out_data = np.where(self.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        out_data = out_data.astype(self.data.dtype, copy=False)

        def make():
            def backward(g):
                self._accum(g * out_data * (1.0 - out_data))
            return backward

        return Tensor._result(out_data, (self,), make)

    def softplus(self):
        """log(1 + exp(x)) in the overflow-safe form; gradient is sigmoid(x)."""
        x = self.data
        out_data = (np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))).astype(x.dtype, copy=False)

        def make():
            e = np.exp(-np.abs(x))
            sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

            def backward(g):
                self._accum(g * sig)
            return backward

        return Tensor._result(out_data, (self,), make)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def make():
            def backward(g):
                if axis is None:
                    grad = np.broadcast_to(g, self.data.shape)
                elif keepdims:
                    grad = np.broadcast_to(g, self.data.shape)
                else:
                    grad = np.broadcast_to(np.expand_dims(g, axis), self.data.shape)
                self._accum(grad.astype(self.data.dtype, copy=False))
            return backward

        return Tensor._result(np.asarray(out_data), (self,), make)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def max(self, axis, keepdims=False):
        """Maximum along one axis; gradient routes to the first argmax only."""
        idx = np.argmax(self.data, axis=axis)
        out_data = np.max(self.data, axis=axis, keepdims=keepdims)

        def make():
            def backward(g):
                grad = np.zeros_like(self.data)
                g_exp = g if keepdims else np.expand_dims(g, axis)
                np.put_along_axis(grad, np.expand_dims(idx, axis), g_exp, axis=axis)
                self._accum(grad)
            return backward

        return Tensor._result(out_data, (self,), make)

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        src_shape = self.data.shape

        def make():
            def backward(g):
                self._accum(g.reshape(src_shape))
            return backward

        return Tensor._result(out_data, (self,), make)

    def transpose(self, axes):
        out_data = self.data.transpose(axes)
        inv = np.argsort(axes)

        def make():
            def backward(g):
                self._accum(g.transpose(inv))
            return backward

        return Tensor._result(out_data, (self,), make)

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def make():
            def backward(g):
                grad = np.zeros_like(self.data)
                np.add.at(grad, idx, g)
                self._accum(grad)
            return backward

        return Tensor._result(out_data, (self,), make)

    def broadcast_to(self, shape):
        out_data = np.ascontiguousarray(np.broadcast_to(self.data, shape))
        src_shape = self.data.shape

        def make():
            def backward(g):
                self._accum(_unbroadcast(g, src_shape))
            return backward

        return Tensor._result(out_data, (self,), make)

    def take_along_axis(self, indices, axis):
        """Gather along ``axis`` with an integer index array (same ndim as data)."""
        indices = np.asarray(indices)
        out_data = np.take_along_axis(self.data, indices, axis=axis)

        def make():
            def backward(g):
                grad = np.zeros_like(self.data)
                grids = np.ogrid[tuple(slice(0, s) for s in indices.shape)]
                index = list(grids)
                index[axis] = indices
                np.add.at(grad, tuple(index), g)
                self._accum(grad)
            return backward

        return Tensor._result(out_data, (self,), make)

    # -- autodiff driver --------------------------------------------------------

    def backward(self, grad=None):
        """Backpropagate from this tensor (scalar unless ``grad`` is given)."""
        if grad is None:
            if self.data.size != 1:
                raise InputError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        # fresh gradient buffers for every interior node of this graph; leaves
        # (no parents) keep accumulating across backward calls
        for node in topo:
            if node._prev:
                node.grad = None
        self._accum(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis=-1):
    """Concatenate tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make():
        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    t._accum(g[tuple(sl)])
        return backward

    return Tensor._result(out_data, tuple(tensors), make)


def stack(tensors, axis=0):
    """Stack tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def make():
        def backward(g):
            slices = np.moveaxis(g, axis, 0)
            for t, gs in zip(tensors, slices):
                if t.requires_grad:
                    t._accum(gs)
        return backward

    return Tensor._result(out_data, tuple(tensors), make)
