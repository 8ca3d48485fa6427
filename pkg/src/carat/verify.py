"""End-to-end gradient verification of the training objective.

Builds the tiny geometry in float64, freezes queue/prototype state and the
shuffle permutations, then checks every parameter entry of every loss
component (and the total) against central differences.  The finite
differences for all components are read off the same two perturbed
evaluations, so the sweep costs the same as checking a single scalar.
"""

import numpy as np

from .config import build_config
from .gradcheck import grad_check_multi
from .model import forward_train, train_step_state_update
from .precision import mode
from .synth import pad_batch
from .train import Trainer

_GRADCHECK_SHUFFLE_SEED = 424243


def pipeline_gradcheck(cfg=None, rel_tol=1e-4, log=None):
    """Run the component-wise gradient check; returns the report (raises on failure)."""
    with mode("verify"):
        if cfg is None:
            cfg = build_config({}, preset="tiny")
        cfg.precision = "verify"   # finite differences need float64 throughout
        trainer = Trainer(cfg, datasets=None)
        batch = pad_batch(trainer.datasets["train"].records[:cfg.batch_size],
                          cfg.model.seq_lens)

        # one absorbed batch so the contrastive pool includes queue constants
        warm_rng = np.random.default_rng([cfg.seed, 0, 7])
        _, caches = forward_train(trainer.model, trainer.state, batch, cfg.loss,
                                  cfg.ablation, warm_rng)
        train_step_state_update(trainer.state, caches)

        def f_multi():
            rng = np.random.default_rng(_GRADCHECK_SHUFFLE_SEED)
            losses, _ = forward_train(trainer.model, trainer.state, batch, cfg.loss,
                                      cfg.ablation, rng)
            return {k: losses[k] for k in ("agg", "lsr", "scl", "rec", "total")}

        named = dict(trainer.model.named_params())
        report = grad_check_multi(f_multi, named, rel_tol=rel_tol)
        if log:
            for target, err in report.per_target.items():
                log(f"  {target:<6} max rel err {err:.3e}  [tol {rel_tol:g}]  PASS")
            log(f"  checked {report.n_checked} parameter entries across "
                f"{len(named)} tensors")
        return report
