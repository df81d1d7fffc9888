"""Response fields, the field loss and the recursion that updates them.

A response field is an ``(n, n)`` row-stochastic matrix with a zero diagonal.
Row ``i`` holds a conditional distribution over the other ``n - 1`` points,
either a supervisory target ``p(.|i)`` or a learned kernel ``q(.|i)``.
Fields are plain ``numpy.ndarray`` objects; :func:`check_field` validates them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9
Q_FLOOR = 1e-12

__all__ = [
    "ROW_SUM_TOL",
    "Q_FLOOR",
    "TemperatureSchedule",
    "SupervisorSpec",
    "check_field",
    "check_embeddings",
    "normalize_rows",
    "uniform_field",
    "kl_row",
    "row_kls",
    "field_loss",
    "supervisor_update",
    "similarity_logits",
    "kernel_field",
    "temperature_at",
    "debiased_target",
    "build_supervisor",
]


def check_field(P, name="field"):
    """Validate a response field and return it as a float64 array.

    Raises ``ValueError`` if the matrix is not square, has non-finite or
    out-of-range entries, a non-zero diagonal, or rows that do not sum to one
    within ``ROW_SUM_TOL``.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {P.shape}")
    if P.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 points")
    if not np.all(np.isfinite(P)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(P < 0.0) or np.any(P > 1.0):
        raise ValueError(f"{name} has entries outside [0, 1]")
    if np.any(np.diag(P) != 0.0):
        raise ValueError(f"{name} must have a zero diagonal")
    err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if err > ROW_SUM_TOL:
        raise ValueError(f"{name} rows must sum to 1 (max error {err:.3e})")
    return P


def check_embeddings(E, name="embeddings"):
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (n, d) array, got shape {E.shape}")
    if not np.all(np.isfinite(E)):
        raise ValueError(f"{name} has non-finite entries")
    return E


def normalize_rows(E):
    """Project every row of ``E`` onto the unit sphere."""
    E = np.asarray(E, dtype=np.float64)
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero embedding row")
    return E / norms


def uniform_field(n):
    """Field whose rows are uniform over the ``n - 1`` off-diagonal entries."""
    if n < 2:
        raise ValueError("uniform field needs n >= 2")
    U = np.full((n, n), 1.0 / (n - 1))
    np.fill_diagonal(U, 0.0)
    return U


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------


def kl_row(p_row, q_row):
    """KL divergence ``sum_j p_j ln(p_j / q_j)`` in nats.

    Terms with ``p_j == 0`` contribute nothing. ``q`` is floored at ``Q_FLOOR``
    before the logarithm, so a vanishing ``q_j`` gives a large but finite value.

    Examples
    --------
    >>> round(kl_row([0.5, 0.5], [0.25, 0.75]), 6)
    0.143841
    """
    p = np.asarray(p_row, dtype=np.float64)
    q = np.asarray(q_row, dtype=np.float64)
    if p.ndim != 1 or p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("kl_row inputs must be finite")
    return float(max(_kl_terms(p, q).sum(), 0.0))


def _kl_terms(p, q):
    mask = p > 0.0
    out = np.zeros_like(p)
    out[mask] = p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], Q_FLOOR)))
    return out


def row_kls(P, Q):
    """Per-row KL divergences ``KL(P_i || Q_i)`` as a length-``n`` array."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape or P.ndim != 2:
        raise ValueError(f"field shapes differ: {P.shape} vs {Q.shape}")
    # Each row is summed left to right on its own, independent of n.
    return np.maximum(_kl_terms(P, Q).sum(axis=1), 0.0)


def field_loss(P, Q):
    """Mean row-wise KL divergence between supervisor ``P`` and model ``Q``."""
    return float(np.mean(row_kls(P, Q)))


# ---------------------------------------------------------------------------
# Recursion and kernels
# ---------------------------------------------------------------------------


def supervisor_update(P_prev, Q_prev, alpha):
    """EMA step on the whole field: ``(1 - alpha) * P_prev + alpha * Q_prev``."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    P_prev = np.asarray(P_prev, dtype=np.float64)
    Q_prev = np.asarray(Q_prev, dtype=np.float64)
    if P_prev.shape != Q_prev.shape:
        raise ValueError(f"field shapes differ: {P_prev.shape} vs {Q_prev.shape}")
    if alpha == 1.0:
        return Q_prev.copy()
    return (1.0 - alpha) * P_prev + alpha * Q_prev


def similarity_logits(E, tau):
    """Scaled dot products ``e_i . e_j / tau``."""
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    E = check_embeddings(E)
    return (E @ E.T) / tau


def kernel_field(E, tau):
    """Temperature softmax over dot products, excluding ``k == i``.

    Rows are shifted by their off-diagonal maximum before exponentiation.
    """
    E = check_embeddings(E)
    n = E.shape[0]
    if n < 2:
        raise ValueError("kernel_field needs at least 2 points")
    return _softmax_offdiag(similarity_logits(E, tau))


def _softmax_offdiag(S):
    S = np.array(S, dtype=np.float64)
    np.fill_diagonal(S, -np.inf)
    S -= S.max(axis=1, keepdims=True)
    W = np.exp(S)
    return W / W.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class TemperatureSchedule:
    """Linear temperature decay ``tau0 * (1 - beta * t / total_steps)``."""

    tau0: float = 0.5
    beta: float = 0.1
    total_steps: int = 1

    def __post_init__(self):
        if not self.tau0 > 0.0:
            raise ValueError("tau0 must be positive")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise ValueError("total_steps must be a positive integer")


def temperature_at(sched, t):
    if not (0 <= t <= sched.total_steps):
        raise ValueError(f"step {t} outside [0, {sched.total_steps}]")
    return sched.tau0 * (1.0 - sched.beta * t / sched.total_steps)


def debiased_target(P, alpha_debias):
    """Mix a fixed target with the uniform off-diagonal field."""
    if not (0.0 <= alpha_debias < 1.0):
        raise ValueError(f"alpha_debias must lie in [0, 1), got {alpha_debias}")
    P = check_field(P)
    if alpha_debias == 0.0:
        return P.copy()
    return (1.0 - alpha_debias) * P + alpha_debias * uniform_field(P.shape[0])


# ---------------------------------------------------------------------------
# Supervisors
# ---------------------------------------------------------------------------

SUPERVISOR_KINDS = ("knn_gaussian", "label_uniform", "positive_pairs")


@dataclass(frozen=True)
class SupervisorSpec:
    """How to build the initial supervisory field from a dataset.

    ``knn_gaussian`` uses ``k`` and ``sigma``; ``label_uniform`` needs labels;
    ``positive_pairs`` takes ``pairs`` or falls back to the dataset's pair map.
    """

    kind: str = "positive_pairs"
    k: int = 5
    sigma: float = 1.0
    pairs: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in SUPERVISOR_KINDS:
            raise ValueError(f"unknown supervisor kind {self.kind!r}")


def build_supervisor(spec, dataset):
    """Initial supervisor field for ``dataset`` (a ``PointDataset`` or array)."""
    points = getattr(dataset, "points", dataset)
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise ValueError("supervisor needs at least 2 points")

    if spec.kind == "knn_gaussian":
        return _knn_gaussian(points, spec.k, spec.sigma)
    if spec.kind == "label_uniform":
        labels = getattr(dataset, "labels", None)
        if labels is None:
            raise ValueError("label_uniform supervisor needs dataset labels")
        return _label_uniform(np.asarray(labels))
    pairs = spec.pairs
    if not pairs:
        pair_map = getattr(dataset, "pair_map", None)
        if pair_map is None:
            raise ValueError("positive_pairs supervisor needs pairs or a pair map")
        pairs = [(i, int(j)) for i, j in enumerate(pair_map)]
    return _positive_pairs(n, pairs)


def _knn_gaussian(points, k, sigma):
    n = points.shape[0]
    if not (1 <= k < n):
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    P = np.zeros((n, n))
    for i in range(n):
        order = np.lexsort((np.arange(n), d2[i]))
        nbrs = [j for j in order if j != i][:k]
        w = np.exp(-d2[i, nbrs] / (2.0 * sigma**2))
        if w.sum() == 0.0:
            # All neighbours underflowed; fall back to uniform weights.
            w = np.ones(k)
        P[i, nbrs] = w / w.sum()
    return P


def _label_uniform(labels):
    n = labels.shape[0]
    P = np.zeros((n, n))
    for i in range(n):
        same = np.flatnonzero(labels == labels[i])
        same = same[same != i]
        if same.size == 0:
            raise ValueError(f"point {i} has no other member in its class")
        P[i, same] = 1.0 / same.size
    return P


def _positive_pairs(n, pairs):
    P = np.zeros((n, n))
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid pair ({i}, {j}) for n={n}")
        P[i, :] = 0.0
        P[i, j] = 1.0
        P[j, :] = 0.0
        P[j, i] = 1.0
    # Unpaired points get no preferred partner.
    unpaired = np.flatnonzero(P.sum(axis=1) == 0.0)
    P[unpaired] = uniform_field(n)[unpaired]
    return P
