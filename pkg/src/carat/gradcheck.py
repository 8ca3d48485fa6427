"""Finite-difference verification of analytic gradients.

Runs in verification precision (float64): central differences with a fixed
step are compared entry by entry against the gradients produced by one
backward pass.  ``f`` must be deterministic; any internal randomness has to
be frozen before checking.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GradCheckFailure
from .precision import get_mode
from .tensor import no_grad

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    """Worst relative error seen, and where."""
    max_rel_err: float = 0.0
    worst_param: str = ""
    worst_index: tuple = ()
    analytic: float = 0.0
    fd: float = 0.0
    n_checked: int = 0
    per_target: dict = field(default_factory=dict)

    def __str__(self):
        loc = f"{self.worst_param}{list(self.worst_index)}" if self.worst_param else "-"
        return (f"grad check: {self.n_checked} entries, max rel err {self.max_rel_err:.3e} "
                f"at {loc} (analytic {self.analytic:.6e}, fd {self.fd:.6e})")


def _rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def _noise_floor(f0, h):
    """Absolute uncertainty of a central-difference derivative estimate.

    Each evaluation of a function of magnitude |f0| carries round-off of
    order eps*|f0|, so the quotient has irreducible absolute error around
    eps*|f0|/(2h); the safety factor covers accumulation over many ops.
    Analytic/fd differences below this floor are unverifiable, not wrong.
    """
    eps = np.finfo(np.float64).eps
    return max(1e-12, 50.0 * eps * max(1.0, abs(f0)) / (2.0 * h))


def grad_check(f, params, rel_tol=1e-5, h=FD_STEP):
    """Compare the analytic gradient of scalar ``f()`` with central differences.

    ``params`` is a dict name -> Tensor; every entry of every parameter is
    perturbed by +-h.  Raises GradCheckFailure on the first coordinate whose
    relative error exceeds ``rel_tol``, otherwise returns a GradCheckReport.
    """
    if get_mode() != "verify":
        raise GradCheckFailure("grad_check must run in verification precision")

    for p in params.values():
        p.grad = None
    out = f()
    out.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    floor = _noise_floor(out.item(), h)

    report = GradCheckReport()
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            with no_grad():
                f_plus = f().item()
            flat[k] = orig - h
            with no_grad():
                f_minus = f().item()
            flat[k] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            report.n_checked += 1
            if abs(a_flat[k] - fd) <= floor:
                continue   # agreement within central-difference round-off
            err = _rel_err(a_flat[k], fd)
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst_param = name
                report.worst_index = np.unravel_index(k, p.data.shape)
                report.analytic = float(a_flat[k])
                report.fd = fd
            if err > rel_tol:
                raise GradCheckFailure(
                    f"gradient mismatch at {name}{list(np.unravel_index(k, p.data.shape))}: "
                    f"analytic {a_flat[k]:.8e} vs fd {fd:.8e} (rel err {err:.3e} > {rel_tol:g})",
                    param=name, index=np.unravel_index(k, p.data.shape),
                    analytic=float(a_flat[k]), fd=fd, rel_err=err)
    return report


def grad_check_multi(f_multi, params, rel_tol=1e-5, h=FD_STEP):
    """Check several scalar targets sharing one forward pass.

    ``f_multi()`` returns an ordered dict name -> scalar Tensor.  Finite
    differences for all targets are read off the same two perturbed
    evaluations, so the cost is that of checking a single target.  Returns a
    GradCheckReport with per-target maxima; raises on the first failure.
    """
    if get_mode() != "verify":
        raise GradCheckFailure("grad_check must run in verification precision")

    outs = f_multi()
    targets = list(outs.keys())
    analytic = {}
    for tname in targets:
        for p in params.values():
            p.grad = None
        outs[tname].backward()
        analytic[tname] = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                           for name, p in params.items()}
    floors = {t: _noise_floor(outs[t].item(), h) for t in targets}

    report = GradCheckReport(per_target={t: 0.0 for t in targets})
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            with no_grad():
                plus = {t: v.item() for t, v in f_multi().items()}
            flat[k] = orig - h
            with no_grad():
                minus = {t: v.item() for t, v in f_multi().items()}
            flat[k] = orig
            report.n_checked += 1
            for tname in targets:
                fd = (plus[tname] - minus[tname]) / (2.0 * h)
                a = analytic[tname][name].reshape(-1)[k]
                if abs(a - fd) <= floors[tname]:
                    continue
                err = _rel_err(a, fd)
                report.per_target[tname] = max(report.per_target[tname], err)
                if err > report.max_rel_err:
                    report.max_rel_err = err
                    report.worst_param = name
                    report.worst_index = np.unravel_index(k, p.data.shape)
                    report.analytic = float(a)
                    report.fd = fd
                if err > rel_tol:
                    raise GradCheckFailure(
                        f"[{tname}] gradient mismatch at "
                        f"{name}{list(np.unravel_index(k, p.data.shape))}: "
                        f"analytic {a:.8e} vs fd {fd:.8e} (rel err {err:.3e} > {rel_tol:g})",
                        param=name, index=np.unravel_index(k, p.data.shape),
                        analytic=float(a), fd=fd, rel_err=err)
    return report
