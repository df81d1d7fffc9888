"""Analytic gradient of the field loss w.r.t. the embedding table.

With logits ``s_ij = e_i . e_j / tau`` and a softmax over ``j != i``, the
derivative of the mean row KL is ``dL/ds_ij = (q_ij - p_ij) / n``.  Each
logit depends on both ``e_i`` and ``e_j``, so the chain rule gives::

    dL/dE = (G + G.T) @ E / tau,   G = (Q - P) / n  (zero diagonal)

The sphere projection is not differentiated; callers apply it after a step.
"""

from __future__ import annotations

import numpy as np

from .fields import check_embeddings, field_loss, kernel_field


def loss_and_grad(E, P, tau):
    """Return ``(loss, grad)`` for ``field_loss(P, kernel_field(E, tau))``."""
    E = check_embeddings(E)
    P = np.asarray(P, dtype=np.float64)
    n = E.shape[0]
    if P.shape != (n, n):
        raise ValueError(f"target shape {P.shape} does not match {n} embeddings")
    Q = kernel_field(E, tau)
    return field_loss(P, Q), grad_from_fields(E, P, Q, tau)


def grad_from_fields(E, P, Q, tau):
    """Gradient given an already computed ``Q = kernel_field(E, tau)``."""
    G = (Q - P) / E.shape[0]
    np.fill_diagonal(G, 0.0)
    return ((G + G.T) @ E) / tau


def finite_diff_grad(E, P, tau, h=1e-5):
    """Central-difference gradient of ``field_loss(P, kernel_field(E, tau))``."""
    if not h > 0.0:
        raise ValueError("h must be positive")
    E = check_embeddings(E)
    P = np.asarray(P, dtype=np.float64)
    grad = np.empty_like(E)
    work = E.copy()
    for idx in np.ndindex(*E.shape):
        orig = work[idx]
        work[idx] = orig + h
        f_plus = field_loss(P, kernel_field(work, tau))
        work[idx] = orig - h
        f_minus = field_loss(P, kernel_field(work, tau))
        work[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic, reference, floor=1e-8):
    """Largest absolute discrepancy scaled by the reference's largest entry."""
    analytic = np.asarray(analytic)
    reference = np.asarray(reference)
    scale = max(float(np.max(np.abs(reference))), floor)
    return float(np.max(np.abs(analytic - reference))) / scale
