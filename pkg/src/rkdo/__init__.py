"""Recursive KL divergence optimisation over explicit response fields."""

from .fields import (
    SupervisorSpec,
    TemperatureSchedule,
    build_supervisor,
    check_field,
    debiased_target,
    field_loss,
    kernel_field,
    kl_row,
    normalize_rows,
    supervisor_update,
    temperature_at,
)
from .gradients import finite_diff_grad, loss_and_grad
from .optimizer import RKDOConfig, TrainingAborted, TrainingTrace, train_icon, train_rkdo

__version__ = "0.1.0"

__all__ = [
    "RKDOConfig",
    "SupervisorSpec",
    "TemperatureSchedule",
    "TrainingAborted",
    "TrainingTrace",
    "build_supervisor",
    "check_field",
    "debiased_target",
    "field_loss",
    "finite_diff_grad",
    "kernel_field",
    "kl_row",
    "loss_and_grad",
    "normalize_rows",
    "supervisor_update",
    "temperature_at",
    "train_icon",
    "train_rkdo",
]
