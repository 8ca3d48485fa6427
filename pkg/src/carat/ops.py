"""Numerically careful building blocks on top of the tensor engine."""

import numpy as np

from .errors import DegenerateVectorError, InputError, NumericError
from .tensor import Tensor, as_tensor

# Large finite bias used to exclude positions from a softmax.  exp() of it
# underflows to exactly 0.0 in both precisions, so excluded positions carry
# zero weight and zero gradient while the input stays finite.
MASK_BIAS = -1e30

NORM_EPS = 1e-12


def softmax(x, axis=-1):
    """Softmax along ``axis``, computed with max-subtraction for stability."""
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    shifted = x - x.data.max(axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(x, axis=-1, keepdims=False):
    """log(sum(exp(x))) along ``axis`` with the shift trick; exact gradients."""
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    s = (x - m).exp().sum(axis=axis, keepdims=True).log() + m
    if not keepdims:
        s = s.reshape(tuple(d for i, d in enumerate(s.shape) if i != (axis % x.ndim)))
    return s


def bce_with_logits(logits, targets):
    """Mean binary cross entropy between logits and 0/1 targets.

    Evaluated as mean(t * softplus(-z) + (1 - t) * softplus(z)), which is the
    log-sum-exp form of -[t log sigma(z) + (1 - t) log(1 - sigma(z))].
    """
    logits = as_tensor(logits)
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if not np.all((t == 0) | (t == 1)):
        raise InputError("bce_with_logits targets must be 0 or 1")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("bce_with_logits logits contain non-finite values")
    if t.shape != logits.shape:
        raise InputError(f"targets shape {t.shape} does not match logits shape {logits.shape}")
    t = t.astype(logits.data.dtype)
    loss = t * (-logits).softplus() + (1.0 - t) * logits.softplus()
    return loss.mean()


def l2_normalize(x, axis=-1):
    """Scale vectors along ``axis`` to unit Euclidean norm."""
    x = as_tensor(x)
    norms_sq = (x.data * x.data).sum(axis=axis, keepdims=True)
    if np.any(np.sqrt(norms_sq) <= NORM_EPS):
        raise DegenerateVectorError("cannot normalize a (near-)zero vector")
    return x / (x * x).sum(axis=axis, keepdims=True).sqrt()


def maxpool_stack(stack):
    """Column-wise maximum over the leading axis of a stack of rows.

    Under differentiation the gradient is routed only to the argmax entry of
    each column; ties go to the lowest index along the pooled axis.
    """
    stack = as_tensor(stack)
    if stack.ndim < 1 or stack.shape[0] < 1:
        raise InputError("maxpool_stack requires a non-empty stack")
    return stack.max(axis=0)


def frobenius_norm(x, axis=None):
    """Frobenius norm, optionally per-matrix over the trailing ``axis`` dims.

    With ``axis=(-2, -1)`` and a batched input the per-sample matrix norms
    are returned; ``axis=None`` reduces everything to one scalar.  At an
    exactly-zero input the (sub)gradient 0 is used instead of dividing by
    the vanishing norm.
    """
    x = as_tensor(x)
    data = x.data
    axes = tuple(range(data.ndim)) if axis is None else tuple(a % data.ndim for a in axis)
    norm = np.sqrt((data * data).sum(axis=axes))

    def make():
        def backward(g):
            denom = np.maximum(norm, np.finfo(data.dtype).tiny)
            scale = g / denom
            for a in sorted(axes):
                scale = np.expand_dims(scale, a)
            x._accum((scale * data).astype(data.dtype, copy=False))
        return backward

    return Tensor._result(np.asarray(norm, dtype=data.dtype), (x,), make)


def sigmoid(x):
    return as_tensor(x).sigmoid()
