"""Multi-modal multi-label emotion recognition at desk scale.

Library layout:
  tensor / ops / optim / gradcheck   numpy-backed autodiff core
  extraction                         per-modality transformer + label attention
  contrastive                        latent space, queue, prototypes, SCL loss
  reconstruction                     two-level cross-modal reconstruction, heads
  shuffle                            sample-/modality-wise shuffles, aggregation
  model / train / experiments        full pipeline, ablations, fusion baselines
  synth / metrics                    planted-signal data, multi-label metrics
  config / checkpoint / cli          run configuration, persistence, commands
"""

import os as _os

# Thread count must be pinned before numpy first configures its BLAS pools;
# bit-determinism is only guaranteed at CARAT_THREADS=1.
_threads = _os.environ.get("CARAT_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from . import precision
from .errors import (CaratError, ConfigError, DegenerateVectorError, FormatError,
                     GradCheckFailure, InputError, NumericError)
from .tensor import Tensor, concat, no_grad, stack
from .ops import bce_with_logits, l2_normalize, maxpool_stack, sigmoid, softmax
from .optim import Adam, adam_step, lr_at
from .gradcheck import grad_check, grad_check_multi

__version__ = "0.1.0"
