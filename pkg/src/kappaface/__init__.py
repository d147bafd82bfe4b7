"""Adaptive additive angular margin loss with vMF class statistics.

A numpy toolkit for concentration-aware margin losses: directional
statistics on the hypersphere, an EMA memory of class embeddings, the
per-class margin calibration, margin-softmax losses with analytic
gradients, a small MLP trainer and verification metrics.
"""

__version__ = "0.1.0"

from .sphere import (VmfParams, estimate_kappa, normalize, resultant_length, sample_vmf,
                     vmf_log_density)
from .class_stats import ClassConcentrations, MemoryBuffer, init_buffer
from .scheduler import (ClassWeights, SchedulerConfig, compute_psi, concentration_weight,
                        population_weight, standardize_kappas)
from .losses import LossBatchResult, MarginLossConfig, backward, forward, plain_softmax_forward
from .model import ClassifierParams, MlpParams, init_mlp, mlp_backward, mlp_forward, sgd_step
from .synth import SyntheticDataset, SyntheticSpec, generate, make_pairs
from .trainer import EpochRecord, TrainConfig, lr_at, train
from .evaluation import VerificationReport, evaluate_pairs
