"""Online knowledge distillation with entropy-balanced KL divergences.

The package co-trains a teacher/student pair where each sample's
forward and reverse KL terms are weighted by the sign of the
student-teacher entropy gap, and ships the calibration tooling used to
evaluate the resulting students.
"""

from .calibration import (
    CalibrationReport,
    bin_predictions,
    confidence_histogram,
    ece,
)
from .data import Dataset, gen_gaussian_blobs, gen_spirals, load_csv, save_csv, split, standardize
from .divergence import (
    BalanceWeights,
    EntropyVector,
    ProbBatch,
    balance_weights,
    entropy,
    forward_kl,
    reverse_kl,
    softmax_tau,
)
from .estimators import (
    DistilledStudentClassifier,
    MlpClassifier,
    OnlineDistillationClassifier,
)
from .models import Mlp, MlpSpec
from .objectives import (
    DistillConfig,
    LossBreakdown,
    bdkd_student_loss,
    bdkd_teacher_loss,
    cross_entropy,
    dml_pair_losses,
    multinet_losses_1t2s,
    multinet_losses_2t1s,
    net_distillation_loss,
    vanilla_kd_loss,
)
from .optim import SgdMomentum, StepDecaySchedule
from .tensor import Tensor, zero_grad
from .training import (
    RunRecord,
    TrainingDiverged,
    cotrain_epoch,
    evaluate,
    multinet_epoch,
    offline_distill_epoch,
    scratch_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "BalanceWeights",
    "CalibrationReport",
    "Dataset",
    "DistillConfig",
    "DistilledStudentClassifier",
    "EntropyVector",
    "LossBreakdown",
    "Mlp",
    "MlpClassifier",
    "MlpSpec",
    "OnlineDistillationClassifier",
    "ProbBatch",
    "RunRecord",
    "SgdMomentum",
    "StepDecaySchedule",
    "Tensor",
    "TrainingDiverged",
    "balance_weights",
    "bdkd_student_loss",
    "bdkd_teacher_loss",
    "bin_predictions",
    "confidence_histogram",
    "cotrain_epoch",
    "cross_entropy",
    "dml_pair_losses",
    "ece",
    "entropy",
    "evaluate",
    "forward_kl",
    "gen_gaussian_blobs",
    "gen_spirals",
    "load_csv",
    "multinet_epoch",
    "multinet_losses_1t2s",
    "multinet_losses_2t1s",
    "net_distillation_loss",
    "offline_distill_epoch",
    "reverse_kl",
    "save_csv",
    "scratch_epoch",
    "softmax_tau",
    "split",
    "standardize",
    "vanilla_kd_loss",
    "zero_grad",
]
