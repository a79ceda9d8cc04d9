"""Scikit-learn compatible estimators wrapping the training loops.

These follow the usual conventions: ``__init__`` stores hyperparameters
verbatim (so ``get_params``/``set_params``/``clone`` work), ``fit``
validates inputs and does the work, fitted state lives in trailing-
underscore attributes, and ``predict_proba`` exposes temperature-1
softmax probabilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calibration import softmax_probs
from .data import Dataset
from .models import Mlp, MlpSpec
from .objectives import DistillConfig
from .optim import SgdMomentum, StepDecaySchedule
from .tensor import Tensor
from .training import (
    ROLE_BATCHES,
    ROLE_STUDENT,
    ROLE_TEACHER,
    cotrain_epoch,
    derive_seed,
    offline_distill_epoch,
    scratch_epoch,
)


class _FittedMixin:
    """Prediction plumbing shared by the classifiers below."""

    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.classes_)}")
        self.n_features_in_ = X.shape[1]
        return X, y_idx

    def _predict_net(self) -> Mlp:
        raise NotImplementedError

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._predict_net().forward(Tensor(X)).data

    def predict_proba(self, X) -> np.ndarray:
        return softmax_probs(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]


class MlpClassifier(_FittedMixin, ClassifierMixin, BaseEstimator):
    """Seeded MLP trained from scratch with cross-entropy."""

    def __init__(
        self,
        hidden_widths=(16,),
        epochs=30,
        base_lr=0.05,
        momentum=0.9,
        milestones=(),
        decay_factor=0.1,
        weight_decay=0.0,
        batch_size=32,
        seed=0,
    ):
        self.hidden_widths = hidden_widths
        self.epochs = epochs
        self.base_lr = base_lr
        self.momentum = momentum
        self.milestones = milestones
        self.decay_factor = decay_factor
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        X, y_idx = self._validate_fit(X, y)
        train = Dataset(features=X, labels=y_idx, num_classes=len(self.classes_))
        spec = MlpSpec(
            input_dim=self.n_features_in_,
            hidden_widths=tuple(self.hidden_widths),
            num_classes=len(self.classes_),
            seed=derive_seed(self.seed, ROLE_STUDENT),
        )
        self.net_ = Mlp(spec)
        opt = SgdMomentum(self.net_.parameters(), lr=self.base_lr,
                          momentum=self.momentum, weight_decay=self.weight_decay)
        schedule = StepDecaySchedule(self.base_lr, tuple(self.milestones), self.decay_factor)
        rng = np.random.default_rng(derive_seed(self.seed, ROLE_BATCHES))
        self.history_ = []
        for epoch in range(self.epochs):
            opt.lr = schedule.lr_at(epoch)
            stats = scratch_epoch(self.net_, train, opt, self.batch_size, rng)
            self.history_.append(stats.losses["net"])
        return self

    def _predict_net(self) -> Mlp:
        return self.net_


class OnlineDistillationClassifier(_FittedMixin, ClassifierMixin, BaseEstimator):
    """Co-trained teacher/student pair; predicts with the student.

    ``method`` picks the objective family: ``"bd-kd"`` (entropy-balanced
    forward/reverse KL), ``"dml"`` (mutual forward KL) or ``"scratch"``
    (no coupling, both nets plain CE). After fitting, ``teacher_`` and
    ``student_`` hold the trained networks.
    """

    def __init__(
        self,
        method="bd-kd",
        teacher_hidden=(64, 64),
        student_hidden=(8,),
        alpha_t=1.0,
        alpha_s=1.0,
        beta_t=1.0,
        beta_s=1.0,
        tau=2.0,
        v=2.0,
        student_kl="balanced",
        teacher_kl="reverse",
        epochs=60,
        base_lr=0.05,
        momentum=0.9,
        milestones=(30, 45),
        decay_factor=0.1,
        weight_decay=0.0,
        batch_size=32,
        seed=0,
    ):
        self.method = method
        self.teacher_hidden = teacher_hidden
        self.student_hidden = student_hidden
        self.alpha_t = alpha_t
        self.alpha_s = alpha_s
        self.beta_t = beta_t
        self.beta_s = beta_s
        self.tau = tau
        self.v = v
        self.student_kl = student_kl
        self.teacher_kl = teacher_kl
        self.epochs = epochs
        self.base_lr = base_lr
        self.momentum = momentum
        self.milestones = milestones
        self.decay_factor = decay_factor
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.seed = seed

    def _distill_config(self) -> DistillConfig:
        if self.method == "dml":
            return DistillConfig(alpha_t=1.0, alpha_s=1.0, beta_t=1.0, beta_s=1.0,
                                 tau=self.tau, v=self.v, student_kl="forward",
                                 teacher_kl="forward", reduction="mean")
        cfg = DistillConfig(
            alpha_t=self.alpha_t, alpha_s=self.alpha_s,
            beta_t=self.beta_t if self.method != "scratch" else 0.0,
            beta_s=self.beta_s if self.method != "scratch" else 0.0,
            tau=self.tau, v=self.v,
            student_kl=self.student_kl, teacher_kl=self.teacher_kl,
        )
        if self.method not in ("bd-kd", "scratch", "dml"):
            raise ValueError(f"unknown method {self.method!r}")
        return cfg

    def fit(self, X, y):
        cfg = self._distill_config()
        X, y_idx = self._validate_fit(X, y)
        train = Dataset(features=X, labels=y_idx, num_classes=len(self.classes_))
        self.teacher_ = Mlp(MlpSpec(
            input_dim=self.n_features_in_, hidden_widths=tuple(self.teacher_hidden),
            num_classes=len(self.classes_), seed=derive_seed(self.seed, ROLE_TEACHER),
        ))
        self.student_ = Mlp(MlpSpec(
            input_dim=self.n_features_in_, hidden_widths=tuple(self.student_hidden),
            num_classes=len(self.classes_), seed=derive_seed(self.seed, ROLE_STUDENT),
        ))
        opt_t = SgdMomentum(self.teacher_.parameters(), lr=self.base_lr,
                            momentum=self.momentum, weight_decay=self.weight_decay)
        opt_s = SgdMomentum(self.student_.parameters(), lr=self.base_lr,
                            momentum=self.momentum, weight_decay=self.weight_decay)
        schedule = StepDecaySchedule(self.base_lr, tuple(self.milestones), self.decay_factor)
        rng = np.random.default_rng(derive_seed(self.seed, ROLE_BATCHES))
        self.history_ = []
        for epoch in range(self.epochs):
            opt_t.lr = opt_s.lr = schedule.lr_at(epoch)
            stats = cotrain_epoch(self.teacher_, self.student_, train, cfg,
                                  opt_t, opt_s, self.batch_size, rng)
            self.history_.append({
                "teacher": stats.losses["teacher"],
                "student": stats.losses["student"],
                "delta_r_fraction": stats.delta_r_fraction,
            })
        return self

    def _predict_net(self) -> Mlp:
        return self.student_


class DistilledStudentClassifier(_FittedMixin, ClassifierMixin, BaseEstimator):
    """Offline distillation: CE-pretrains a teacher, then distills a student.

    ``alpha`` blends the student's hard-label CE against the softened
    forward KL toward the frozen teacher.
    """

    def __init__(
        self,
        teacher_hidden=(64, 64),
        student_hidden=(8,),
        alpha=0.5,
        tau=2.0,
        epochs=60,
        base_lr=0.05,
        momentum=0.9,
        milestones=(30, 45),
        decay_factor=0.1,
        weight_decay=0.0,
        batch_size=32,
        seed=0,
    ):
        self.teacher_hidden = teacher_hidden
        self.student_hidden = student_hidden
        self.alpha = alpha
        self.tau = tau
        self.epochs = epochs
        self.base_lr = base_lr
        self.momentum = momentum
        self.milestones = milestones
        self.decay_factor = decay_factor
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        X, y_idx = self._validate_fit(X, y)
        train = Dataset(features=X, labels=y_idx, num_classes=len(self.classes_))
        self.teacher_ = Mlp(MlpSpec(
            input_dim=self.n_features_in_, hidden_widths=tuple(self.teacher_hidden),
            num_classes=len(self.classes_), seed=derive_seed(self.seed, ROLE_TEACHER),
        ))
        self.student_ = Mlp(MlpSpec(
            input_dim=self.n_features_in_, hidden_widths=tuple(self.student_hidden),
            num_classes=len(self.classes_), seed=derive_seed(self.seed, ROLE_STUDENT),
        ))
        schedule = StepDecaySchedule(self.base_lr, tuple(self.milestones), self.decay_factor)
        rng = np.random.default_rng(derive_seed(self.seed, ROLE_BATCHES))

        opt_t = SgdMomentum(self.teacher_.parameters(), lr=self.base_lr,
                            momentum=self.momentum, weight_decay=self.weight_decay)
        for epoch in range(self.epochs):
            opt_t.lr = schedule.lr_at(epoch)
            scratch_epoch(self.teacher_, train, opt_t, self.batch_size, rng, name="teacher")
        self.teacher_.freeze()

        opt_s = SgdMomentum(self.student_.parameters(), lr=self.base_lr,
                            momentum=self.momentum, weight_decay=self.weight_decay)
        self.history_ = []
        for epoch in range(self.epochs):
            opt_s.lr = schedule.lr_at(epoch)
            stats = offline_distill_epoch(self.teacher_, self.student_, train,
                                          self.alpha, self.tau, opt_s, self.batch_size, rng)
            self.history_.append(stats.losses["student"])
        return self

    def _predict_net(self) -> Mlp:
        return self.student_
