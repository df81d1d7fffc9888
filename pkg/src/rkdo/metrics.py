"""Evaluation of frozen embeddings: k-means, NMI, ARI, neighbourhood accuracy
and a linear probe."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .rng import substream

PROBE_TRAIN_FRAC = 0.8
PROBE_ITERS = 500
PROBE_LR = 0.1


@dataclass(frozen=True)
class MetricsReport:
    linear_accuracy: float
    nmi: float
    ari: float
    neighborhood_accuracy: float
    k_used: int
    seed: int

    def __post_init__(self):
        checks = {
            "linear_accuracy": (0.0, 1.0),
            "nmi": (0.0, 1.0),
            "ari": (-1.0, 1.0),
            "neighborhood_accuracy": (0.0, 1.0),
        }
        for name, (lo, hi) in checks.items():
            v = getattr(self, name)
            if not (np.isfinite(v) and lo - 1e-12 <= v <= hi + 1e-12):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    def as_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _sq_dists(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0.0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # Remaining points duplicate existing centers.
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def kmeans_fit(E, k, seed=0, max_iters=100):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(labels, centers, inertia_history)``.  The history holds the
    inertia after each assignment step.  Assignment ties go to the lowest
    centroid index; an empty cluster is re-seeded at the point farthest from
    its current centroid.
    """
    X = np.asarray(E, dtype=np.float64)
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    rng = substream(seed, "metrics")
    C = _kmeans_pp(X, k, rng)
    history = []
    labels = None
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[np.arange(n), new]))
            C[c] = X[far]
            d2 = _sq_dists(X, C)
            new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = X[labels == c]
            if len(members):
                C[c] = members.mean(axis=0)
    return labels, C, history


def kmeans(E, k, seed=0, max_iters=100):
    return kmeans_fit(E, k, seed, max_iters)[0]


# ---------------------------------------------------------------------------
# Partition agreement
# ---------------------------------------------------------------------------


def contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"label arrays differ in shape: {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    return np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(a, b):
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(a, b)
    n = table.sum()
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    nz = table > 0
    mi = float((table[nz] / n * np.log(table[nz] * n / (rows @ cols)[nz])).sum())
    denom = 0.5 * (ha + hb)
    return float(min(max(mi / denom, 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(a, b):
    """Hubert-Arabie adjusted Rand index."""
    table = contingency(a, b)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # Both partitions trivial (all singletons or a single block).
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


# ---------------------------------------------------------------------------
# Embedding-space metrics
# ---------------------------------------------------------------------------


def neighborhood_accuracy(E, labels, m=5):
    """Mean fraction of each point's ``m`` nearest neighbours sharing its label.

    Euclidean distance, self excluded, ties broken by lower index.
    """
    X = np.asarray(E, dtype=np.float64)
    labels = np.asarray(labels)
    n = X.shape[0]
    if not (1 <= m < n):
        raise ValueError(f"m must satisfy 1 <= m < n, got m={m}, n={n}")
    d2 = _sq_dists(X, X)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :m]
    return float((labels[order] == labels[:, None]).mean())


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    W = np.exp(Z)
    return W / W.sum(axis=1, keepdims=True)


def linear_probe(
    E, labels, split_seed=0, train_frac=PROBE_TRAIN_FRAC, iters=PROBE_ITERS, lr=PROBE_LR
):
    """Held-out accuracy of multinomial logistic regression on frozen features.

    Trained by full-batch gradient descent on the mean cross-entropy, with a
    bias and no regularisation.
    """
    X = np.asarray(E, dtype=np.float64)
    _, y = np.unique(np.asarray(labels), return_inverse=True)
    n = X.shape[0]
    n_train = int(round(train_frac * n))
    if not (0 < n_train < n):
        raise ValueError(f"train_frac={train_frac} leaves an empty split for n={n}")
    perm = substream(split_seed, "metrics").permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    if np.unique(y[tr]).size < 2:
        raise ValueError("training split contains fewer than 2 classes")
    C = int(y.max()) + 1
    Xtr = np.column_stack([X[tr], np.ones(len(tr))])
    Y = np.eye(C)[y[tr]]
    W = np.zeros((Xtr.shape[1], C))
    for _ in range(iters):
        grad = Xtr.T @ (_softmax(Xtr @ W) - Y) / len(tr)
        W -= lr * grad
    Xte = np.column_stack([X[te], np.ones(len(te))])
    pred = np.argmax(Xte @ W, axis=1)
    return float((pred == y[te]).mean())


def evaluate_embeddings(E, labels, seed=0, k=None, m=5):
    """Full metric suite on one embedding table."""
    labels = np.asarray(labels)
    k_used = int(np.unique(labels).size) if k is None else int(k)
    clusters = kmeans(E, k_used, seed=seed)
    return MetricsReport(
        linear_accuracy=linear_probe(E, labels, split_seed=seed),
        nmi=nmi(labels, clusters),
        ari=ari(labels, clusters),
        neighborhood_accuracy=neighborhood_accuracy(E, labels, m=m),
        k_used=k_used,
        seed=int(seed),
    )
