"""Training loops over a directly optimised, sphere-projected embedding table.

``train_rkdo`` refreshes the supervisor with an EMA of the model's own kernel
field before every gradient step; ``train_icon`` keeps a fixed, debiased
target.  Both loops are deterministic functions of their inputs.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import (
    TemperatureSchedule,
    check_embeddings,
    check_field,
    debiased_target,
    field_loss,
    kernel_field,
    normalize_rows,
    supervisor_update,
    temperature_at,
)
from .gradients import grad_from_fields, loss_and_grad

OPTIMIZERS = ("adam", "sgd")
TRACE_COLUMNS = ("step", "loss", "loss_vs_common_target", "tau", "elapsed_ms")


@dataclass(frozen=True)
class RKDOConfig:
    """Hyperparameters shared by both training loops.

    ``alpha`` and ``recursion_depth`` only affect RKDO; ``debias`` only I-Con,
    which also ignores ``beta`` and trains at the constant ``tau0``.
    """

    alpha: float = 0.2
    recursion_depth: int = 3
    steps: int = 100
    tau0: float = 0.5
    beta: float = 0.1
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 1e-5
    debias: float = 0.2
    seed: int = 42

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.recursion_depth < 1:
            raise ValueError("recursion_depth must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be non-negative")
        if not (0.0 <= self.debias < 1.0):
            raise ValueError("debias must lie in [0, 1)")
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        # Validates tau0 and beta.
        self.schedule

    @property
    def schedule(self):
        return TemperatureSchedule(self.tau0, self.beta, self.steps)

    def as_dict(self):
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


class TrainingAborted(RuntimeError):
    """Raised when a loss turns non-finite; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainingTrace:
    """Per-step records of one run.

    ``records`` has one entry per outer step ``t = 1..steps``; the state
    before any update is kept separately in ``initial``.
    """

    method: str
    config: RKDOConfig
    initial: dict
    records: list = field(default_factory=list)
    final_embeddings: np.ndarray | None = None
    checkpoints: dict = field(default_factory=dict)

    @property
    def losses(self):
        return np.array([r["loss"] for r in self.records])

    @property
    def common_losses(self):
        return np.array([r["loss_vs_common_target"] for r in self.records])

    @property
    def final_loss(self):
        return self.records[-1]["loss"]

    def to_csv(self, timing=True):
        """CSV with one row per step, starting at step 0.

        With ``timing=False`` the ``elapsed_ms`` cells are left empty so the
        file depends only on the inputs.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in [self.initial, *self.records]:
            elapsed = f"{r['elapsed_ms']:.3f}" if timing else ""
            w.writerow(
                [
                    r["step"],
                    f"{r['loss']:.17g}",
                    f"{r['loss_vs_common_target']:.17g}",
                    f"{r['tau']:.17g}",
                    elapsed,
                ]
            )
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Optimizer steps
# ---------------------------------------------------------------------------


def sgd_step(E, grad, lr, weight_decay=0.0):
    return E - lr * (grad + weight_decay * E)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, E):
        return cls(np.zeros_like(E), np.zeros_like(E), 0)


def adam_step(state, E, grad, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update with L2 weight decay folded into the
    gradient.  Returns ``(new_E, new_state)``; ``state`` is not modified."""
    b1, b2 = betas
    g = grad + weight_decay * E
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    return E - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


class _Stepper:
    def __init__(self, config, E):
        self.config = config
        self.state = AdamState.zeros_like(E) if config.optimizer == "adam" else None

    def __call__(self, E, grad):
        c = self.config
        if self.state is None:
            E = sgd_step(E, grad, c.learning_rate, c.weight_decay)
        else:
            E, self.state = adam_step(
                self.state, E, grad, c.learning_rate, c.adam_betas, c.adam_eps, c.weight_decay
            )
        return normalize_rows(E)


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------


def _prepare(config, P0, E0):
    P0 = check_field(P0, "P0")
    E = normalize_rows(check_embeddings(E0, "E0"))
    if E.shape[0] != P0.shape[0]:
        raise ValueError(f"E0 has {E.shape[0]} rows but P0 is {P0.shape}")
    return P0, E


def _record(trace, step, loss, common, tau, start):
    rec = {
        "step": step,
        "loss": loss,
        "loss_vs_common_target": common,
        "tau": tau,
        "elapsed_ms": 1000.0 * (time.perf_counter() - start),
    }
    if not (np.isfinite(loss) and np.isfinite(common)):
        raise TrainingAborted(f"non-finite loss at step {step}", trace)
    return rec


def _check_finite(E, step, trace):
    if not np.all(np.isfinite(E)):
        raise TrainingAborted(f"non-finite embeddings at step {step}", trace)


def train_rkdo(config, P0, E0, common_target=None, checkpoints=()):
    """RKDO: per outer step, ``recursion_depth`` cycles of
    (kernel field -> EMA supervisor update -> gradient step -> projection).

    The recorded loss is measured after the last cycle against the current
    supervisor.  ``common_target`` (default: the debiased ``P0``) gives a
    second loss curve comparable across methods.  Embeddings at the steps
    listed in ``checkpoints`` are kept in ``trace.checkpoints``.
    """
    P, E = _prepare(config, P0, E0)
    common = debiased_target(P, config.debias) if common_target is None else common_target
    sched = config.schedule
    step = _Stepper(config, E)
    start = time.perf_counter()

    tau = temperature_at(sched, 0)
    Q = kernel_field(E, tau)
    trace = TrainingTrace("rkdo", config, {})
    trace.initial = _record(trace, 0, field_loss(P, Q), field_loss(common, Q), tau, start)

    for t in range(1, config.steps + 1):
        tau = temperature_at(sched, t)
        for _ in range(config.recursion_depth):
            Q = kernel_field(E, tau)
            P = supervisor_update(P, Q, config.alpha)
            E = step(E, grad_from_fields(E, P, Q, tau))
            _check_finite(E, t, trace)
        Q = kernel_field(E, tau)
        trace.records.append(
            _record(trace, t, field_loss(P, Q), field_loss(common, Q), tau, start)
        )
        if t in checkpoints:
            trace.checkpoints[t] = E.copy()
    trace.final_embeddings = E
    return trace


def train_icon(config, P0, E0, common_target=None, checkpoints=()):
    """Static baseline: fixed target ``debiased_target(P0, config.debias)``,
    one gradient step per outer step at constant temperature ``tau0``."""
    P0, E = _prepare(config, P0, E0)
    target = debiased_target(P0, config.debias)
    common = target if common_target is None else common_target
    tau = config.tau0
    step = _Stepper(config, E)
    start = time.perf_counter()

    Q = kernel_field(E, tau)
    trace = TrainingTrace("icon", config, {})
    trace.initial = _record(trace, 0, field_loss(target, Q), field_loss(common, Q), tau, start)

    for t in range(1, config.steps + 1):
        _, grad = loss_and_grad(E, target, tau)
        E = step(E, grad)
        _check_finite(E, t, trace)
        Q = kernel_field(E, tau)
        trace.records.append(
            _record(trace, t, field_loss(target, Q), field_loss(common, Q), tau, start)
        )
        if t in checkpoints:
            trace.checkpoints[t] = E.copy()
    trace.final_embeddings = E
    return trace
