"""
Response fields and the EMA supervisor
======================================

A response field is an n x n row-stochastic matrix with a zero diagonal:
row i is a distribution over the other points.  This script builds the
three supervisors, a learned kernel field, and shows how the EMA update
pulls the supervisor toward the model.
"""

import numpy as np

from rkdo.datasets import augment_pairs, make_blobs
from rkdo.fields import (
    SupervisorSpec,
    build_supervisor,
    debiased_target,
    field_loss,
    kernel_field,
    kl_row,
    normalize_rows,
    supervisor_update,
)

np.set_printoptions(precision=3, suppress=True)

# A single-row divergence, natural log, 0 log 0 = 0.
print("KL([.5,.5] || [.25,.75]) =", kl_row([0.5, 0.5], [0.25, 0.75]))

# Six points in two blobs, each seen twice (paired augmentation -> 12 rows).
ds = augment_pairs(make_blobs(k=2, n_per=3, seed=0), jitter_sigma=0.1, seed=0)
print("points:", ds.points.shape, "labels:", ds.labels)

for kind in ("positive_pairs", "label_uniform", "knn_gaussian"):
    P = build_supervisor(SupervisorSpec(kind, k=3, sigma=1.0), ds)
    print(f"\n{kind} supervisor, first two rows:\n{P[:2]}")

# The model field: softmax of cosine similarities over the other points.
P = build_supervisor(SupervisorSpec("positive_pairs"), ds)
E = normalize_rows(np.random.default_rng(0).normal(size=(ds.n, 4)))
Q = kernel_field(E, tau=0.5)
print("\nrandom embeddings: L(P, Q) =", field_loss(P, Q))

# I-Con keeps a fixed target, slightly mixed with uniform.
print("debiased target row 0:", debiased_target(P, 0.2)[0])

# RKDO moves the target itself: every EMA step contracts the loss by at
# least a factor (1 - alpha), here without touching the model at all.
for alpha in (0.1, 0.5, 1.0):
    Pt, losses = P, []
    for _ in range(5):
        Pt = supervisor_update(Pt, Q, alpha)
        losses.append(field_loss(Pt, Q))
    print(f"alpha={alpha}: " + " ".join(f"{v:.4f}" for v in losses))
