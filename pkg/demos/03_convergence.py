"""
Convergence of the recursion
============================

Four numerical checks of the contraction argument:

1. exact inner step: L(t) <= (1 - alpha)^t L(0);
2. the Jensen step L(mix, Q) <= (1 - alpha) L(P, Q) on random triples;
3. a finite-capacity model (1-D embeddings) that cannot reach every field;
4. an inner step that misses by eps_t, summable vs constant.
"""

import numpy as np

from rkdo import theory
from rkdo.harness.runs import capacity_fixture, imperfect_fixture

rng = np.random.default_rng(0)
P0, Q0 = theory.random_field(16, rng), theory.random_field(16, rng)
for alpha in (0.1, 0.5, 1.0):
    rep = theory.run_ideal_recursion(P0, Q0, alpha, T=10)
    print(f"alpha={alpha}: L = {rep.L[:4].round(6)} ...  two-stage ok: {theory.two_stage_ok(rep)}")

slacks = theory.jensen_sweep(1000, seed=0)
print(f"\nJensen sweep: min slack {slacks.min():.2e} over {slacks.size} triples")

# Skipping the EMA update breaks the argument, and the checks notice.
bad = theory.run_ideal_recursion(P0, Q0, 0.5, 10, inner=lambda P: Q0, update=lambda P, Q, a: P)
print("without the EMA update: passed =", bad.passed, "first violation at t =", bad.failed_at)

cap = theory.run_capacity_limited(capacity_fixture(), alpha=0.5, T=10, d=1, seed=42)
print("\nfinite capacity, d=1:")
for t in range(0, 11, 2):
    print(f"  t={t:2d}  L={cap.L[t]:.3e}  L*={cap.L_star[t]:.3e}  slack={cap.slack[t]:.2e}")

P0, Q0 = imperfect_fixture(42)
for label, sched, need in (
    ("eps = 0.1/t^2", theory.EpsSchedule(0.1, 2.0), True),
    ("eps = 0.05   ", theory.EpsSchedule(0.05, 0.0), False),
):
    rep = theory.run_imperfect_inner(P0, Q0, 0.5, 100, sched, seed=42, require_summable=need)
    print(f"{label}: L(0)={rep.L[0]:.3f} L(10)={rep.L[10]:.2e} L(100)={rep.L[100]:.2e}")
