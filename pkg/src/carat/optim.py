"""Adam with a linear warmup / linear decay learning-rate schedule."""

import numpy as np

from .errors import InputError


def lr_at(step, peak_lr, warmup_steps, total_steps):
    """Learning rate at ``step``: linear 0->peak over the warmup, then linear
    peak->0 at ``total_steps`` (clamped to 0 beyond)."""
    if warmup_steps >= total_steps:
        raise InputError("warmup_steps must be smaller than total_steps")
    if step < 0:
        raise InputError("step must be non-negative")
    if step <= warmup_steps:
        return peak_lr * step / warmup_steps if warmup_steps > 0 else peak_lr
    if step >= total_steps:
        return 0.0
    return peak_lr * (total_steps - step) / (total_steps - warmup_steps)


class Adam:
    """Bias-corrected Adam over a fixed list of parameter tensors.

    The step counter is 1-based inside the update, so the learning rate for
    the first call is ``lr_at(1, ...)`` (one warmup increment, not zero).
    """

    def __init__(self, params, peak_lr, warmup_steps, total_steps,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.total_steps = total_steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        lr = lr_at(t, self.peak_lr, self.warmup_steps, self.total_steps)
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise InputError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** t)
            v_hat = self.v[i] / (1.0 - b2 ** t)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def state_arrays(self):
        """Moment buffers in parameter order, for checkpointing."""
        return list(self.m), list(self.v)

    def load_state(self, m_list, v_list, step_count):
        if len(m_list) != len(self.params) or len(v_list) != len(self.params):
            raise InputError("optimizer state does not match parameter count")
        self.m = [np.array(a, dtype=p.data.dtype) for a, p in zip(m_list, self.params)]
        self.v = [np.array(a, dtype=p.data.dtype) for a, p in zip(v_list, self.params)]
        self.step_count = int(step_count)


def adam_step(state, params, grads):
    """Functional single Adam update: assigns grads then calls ``state.step()``."""
    if len(params) != len(grads):
        raise InputError("params and grads length mismatch")
    for p, g in zip(params, grads):
        g = np.asarray(g, dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        p.grad = g
    state.step()
    return params
