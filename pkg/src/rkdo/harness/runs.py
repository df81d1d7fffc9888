"""Experiment cells and the artifacts they write.

Every public ``run_*`` function takes an :class:`ExperimentConfig` and an
output directory, writes CSV/JSON files there and returns a summary dict with
a ``passed`` flag where a verdict applies.  Cells are pure functions of
``(config, dataset, budget, seed)`` so they can be farmed out to worker
processes and gathered in a fixed order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..datasets import PointDataset, augment_pairs, make_blobs, make_moons, make_rings
from ..fields import SupervisorSpec, build_supervisor, debiased_target, kernel_field, normalize_rows
from ..gradients import finite_diff_grad, loss_and_grad, relative_error
from ..metrics import evaluate_embeddings
from ..optimizer import TrainingAborted, train_icon, train_rkdo
from ..rng import substream
from ..textio import format_matrix
from .. import theory

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("dataset", "method", "steps", "seed", "linear", "nmi", "ari", "nacc")
LOSS_COLUMNS = (
    "dataset",
    "steps",
    "seed",
    "rkdo_loss",
    "icon_loss",
    "rkdo_loss_vs_common_target",
    "icon_loss_vs_common_target",
    "improvement",
)
GRADCHECK_TOL = 1e-5


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def rows_to_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


def make_fixture(cfg, name, seed):
    """Paired point cloud for one dataset name and seed."""
    if name == "blobs":
        base = make_blobs(
            cfg.clusters, cfg.n_per, cfg.ambient_dim, cfg.blob_sigma, seed, cfg.blob_separation
        )
    elif name == "moons":
        base = make_moons(cfg.n_per, cfg.noise, seed)
    elif name == "rings":
        base = make_rings(cfg.clusters, cfg.n_per, cfg.noise, seed)
    else:
        raise ValueError(f"unknown dataset {name!r}")
    return augment_pairs(base, cfg.jitter, seed)


def initial_embeddings(n, d, seed):
    return normalize_rows(substream(seed, "init").standard_normal((n, d)))


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _metric_row(ds, method, steps, seed, E, cfg):
    rep = evaluate_embeddings(E, ds.labels, seed=seed, m=cfg.neighbors)
    return {
        "dataset": ds.name,
        "method": method,
        "steps": steps,
        "seed": seed,
        "linear": rep.linear_accuracy,
        "nmi": rep.nmi,
        "ari": rep.ari,
        "nacc": rep.neighborhood_accuracy,
    }


def compare_cell(args):
    """Train both methods from the same start for one (dataset, budget, seed)."""
    cfg, name, steps, seed = args
    ds = make_fixture(cfg, name, seed)
    P0 = build_supervisor(cfg.supervisor_spec(), ds)
    E0 = initial_embeddings(ds.n, cfg.embed_dim, seed)
    rcfg = cfg.rkdo_config(steps, seed)
    common = debiased_target(P0, cfg.debias)
    out = {"key": (name, steps, seed), "dataset_hash": ds.content_hash(), "traces": {}}
    try:
        runs = {
            "rkdo": train_rkdo(rcfg, P0, E0, common_target=common),
            "icon": train_icon(rcfg, P0, E0, common_target=common),
        }
    except TrainingAborted as exc:
        out["error"] = str(exc)
        return out
    for method, tr in runs.items():
        out["traces"][method] = tr.to_csv(timing=cfg.record_timing)
    out["metrics"] = [
        _metric_row(ds, m, steps, seed, runs[m].final_embeddings, cfg) for m in ("rkdo", "icon")
    ]
    r, i = runs["rkdo"], runs["icon"]
    out["loss"] = {
        "dataset": name,
        "steps": steps,
        "seed": seed,
        "rkdo_loss": r.final_loss,
        "icon_loss": i.final_loss,
        "rkdo_loss_vs_common_target": float(r.common_losses[-1]),
        "icon_loss_vs_common_target": float(i.common_losses[-1]),
        "improvement": (i.final_loss - r.final_loss) / i.final_loss,
    }
    out["initial_common"] = (
        r.initial["loss_vs_common_target"],
        i.initial["loss_vs_common_target"],
    )
    return out


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std


def aggregate(loss_rows, metric_rows):
    """One row per (dataset, steps): means and standard deviations over seeds.

    ``improvement`` is ``(icon - rkdo) / icon`` on the mean final losses.
    """
    keys = sorted({(r["dataset"], r["steps"]) for r in loss_rows})
    out = []
    for name, steps in keys:
        lr = [r for r in loss_rows if (r["dataset"], r["steps"]) == (name, steps)]
        row = {"dataset": name, "steps": steps, "n_seeds": len(lr)}
        for col in ("rkdo_loss", "icon_loss"):
            row[f"{col}_mean"], row[f"{col}_std"] = _mean_std([r[col] for r in lr])
        row["improvement"] = (row["icon_loss_mean"] - row["rkdo_loss_mean"]) / row["icon_loss_mean"]
        row["rkdo_wins"] = sum(r["rkdo_loss"] < r["icon_loss"] for r in lr)
        for method in ("rkdo", "icon"):
            mr = [
                r
                for r in metric_rows
                if (r["dataset"], r["steps"], r["method"]) == (name, steps, method)
            ]
            for col in ("linear", "nmi", "ari", "nacc"):
                row[f"{method}_{col}_mean"], row[f"{method}_{col}_std"] = _mean_std(
                    [r[col] for r in mr]
                )
        out.append(row)
    return out


AGGREGATE_COLUMNS = (
    ["dataset", "steps", "n_seeds"]
    + [f"{c}_{s}" for c in ("rkdo_loss", "icon_loss") for s in ("mean", "std")]
    + ["improvement", "rkdo_wins"]
    + [
        f"{m}_{c}_{s}"
        for m in ("rkdo", "icon")
        for c in ("linear", "nmi", "ari", "nacc")
        for s in ("mean", "std")
    ]
)


def run_compare(cfg, out_dir):
    out_dir = Path(out_dir)
    cells = [
        (cfg, name, steps, seed)
        for name in cfg.datasets
        for steps in cfg.budgets
        for seed in cfg.seeds
    ]
    results = _map(compare_cell, cells, cfg.jobs)

    loss_rows, metric_rows, failures, hashes = [], [], [], {}
    for res in results:
        name, steps, seed = res["key"]
        hashes[f"{name}/{seed}"] = res["dataset_hash"]
        if "error" in res:
            log.warning("run %s/%s/%s aborted: %s", name, steps, seed, res["error"])
            failures.append({"dataset": name, "steps": steps, "seed": seed, "error": res["error"]})
            continue
        loss_rows.append(res["loss"])
        metric_rows.extend(res["metrics"])
        for method, text in res["traces"].items():
            write_atomic(out_dir / "traces" / f"{name}_{method}_T{steps}_s{seed}.csv", text)

    agg = aggregate(loss_rows, metric_rows)
    write_atomic(out_dir / "runs.csv", rows_to_csv(METRIC_COLUMNS, metric_rows))
    write_atomic(out_dir / "losses.csv", rows_to_csv(LOSS_COLUMNS, loss_rows))
    write_atomic(out_dir / "aggregate.csv", rows_to_csv(AGGREGATE_COLUMNS, agg))
    manifest = {
        "command": "compare",
        "config": cfg.as_dict(runtime=False),
        "config_digest": cfg.digest(),
        "dataset_hashes": hashes,
        "failed_runs": failures,
    }
    write_json(out_dir / "manifest.json", manifest)
    matched = all(
        res.get("initial_common", (0, 0))[0] == res.get("initial_common", (0, 0))[1]
        for res in results
    )
    return {
        "aggregate": agg,
        "losses": loss_rows,
        "metrics": metric_rows,
        "failures": failures,
        "matched_initialisation": matched,
        "passed": not failures,
    }


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def train_cell(args):
    cfg, name, method, seed = args
    ds = make_fixture(cfg, name, seed)
    P0 = build_supervisor(cfg.supervisor_spec(), ds)
    E0 = initial_embeddings(ds.n, cfg.embed_dim, seed)
    steps = cfg.budgets[-1]
    rcfg = cfg.rkdo_config(steps, seed)
    loop = train_rkdo if method == "rkdo" else train_icon
    out = {"key": (name, method, seed), "dataset_csv": ds.to_csv(), "hash": ds.content_hash()}
    try:
        tr = loop(rcfg, P0, E0, checkpoints=set(cfg.budgets))
    except TrainingAborted as exc:
        out["error"] = str(exc)
        out["trace"] = exc.trace.to_csv(timing=cfg.record_timing)
        return out
    out["trace"] = tr.to_csv(timing=cfg.record_timing)
    out["embeddings"] = format_matrix(tr.final_embeddings)
    out["metrics"] = [
        _metric_row(ds, method, b, seed, tr.checkpoints[b], cfg) for b in cfg.budgets
    ]
    out["manifest"] = {
        "command": "train",
        "method": method,
        "dataset": name,
        "seed": seed,
        "dataset_hash": ds.content_hash(),
        "config": cfg.as_dict(runtime=False),
        "config_digest": cfg.digest(),
        "rkdo_config": rcfg.as_dict(),
    }
    return out


def run_train(cfg, out_dir, method):
    if method not in ("rkdo", "icon"):
        raise ValueError(f"method must be 'rkdo' or 'icon', got {method!r}")
    out_dir = Path(out_dir)
    cells = [(cfg, name, method, seed) for name in cfg.datasets for seed in cfg.seeds]
    results = _map(train_cell, cells, cfg.jobs)
    metric_rows, failures = [], []
    for res in results:
        name, _, seed = res["key"]
        stem = f"{name}_{method}_s{seed}"
        write_atomic(out_dir / "traces" / f"{stem}.csv", res["trace"])
        write_atomic(out_dir / "datasets" / f"{name}_s{seed}.csv", res["dataset_csv"])
        if "error" in res:
            failures.append({"dataset": name, "seed": seed, "error": res["error"]})
            write_json(out_dir / "manifests" / f"{stem}.json", {"error": res["error"]})
            continue
        write_atomic(out_dir / "embeddings" / f"{stem}.txt", res["embeddings"])
        write_json(out_dir / "manifests" / f"{stem}.json", res["manifest"])
        metric_rows.extend(res["metrics"])
    write_atomic(out_dir / "metrics.csv", rows_to_csv(METRIC_COLUMNS, metric_rows))
    return {"metrics": metric_rows, "failures": failures, "passed": not failures}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def run_metrics(E, dataset, out_path, seed=0, neighbors=5, method="external", steps=0):
    """Evaluate a saved embedding table against a saved dataset's labels."""
    if E.shape[0] != dataset.n:
        raise ValueError(f"embeddings have {E.shape[0]} rows, dataset has {dataset.n}")
    rep = evaluate_embeddings(E, dataset.labels, seed=seed, m=neighbors)
    row = {
        "dataset": dataset.name,
        "method": method,
        "steps": steps,
        "seed": seed,
        "linear": rep.linear_accuracy,
        "nmi": rep.nmi,
        "ari": rep.ari,
        "nacc": rep.neighborhood_accuracy,
    }
    write_atomic(out_path, rows_to_csv(METRIC_COLUMNS, [row]))
    return row


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def run_gradcheck(cfg, out_dir):
    """Analytic vs central-difference gradients on random small instances."""
    rng = substream(cfg.seeds[0], "theory")
    rows = []
    for k in range(cfg.gradcheck_instances):
        n = int(rng.integers(3, 9))
        d = int(rng.integers(1, 5))
        tau = float(rng.choice([0.2, 0.5, 1.0]))
        E = normalize_rows(rng.standard_normal((n, d)))
        P = kernel_field(normalize_rows(rng.standard_normal((n, d))), float(rng.uniform(0.2, 1.0)))
        _, grad = loss_and_grad(E, P, tau)
        if cfg.gradcheck_perturb:
            grad = grad * (1.0 + cfg.gradcheck_perturb * rng.standard_normal(grad.shape))
        err = relative_error(grad, finite_diff_grad(E, P, tau))
        rows.append({"instance": k, "n": n, "d": d, "tau": tau, "max_rel_err": err})
    worst = max(r["max_rel_err"] for r in rows)
    passed = worst < GRADCHECK_TOL
    out_dir = Path(out_dir)
    write_atomic(
        out_dir / "gradcheck.csv", rows_to_csv(("instance", "n", "d", "tau", "max_rel_err"), rows)
    )
    write_json(
        out_dir / "gradcheck.json",
        {"passed": passed, "max_rel_err": worst, "tolerance": GRADCHECK_TOL},
    )
    return {"rows": rows, "max_rel_err": worst, "passed": passed}


# ---------------------------------------------------------------------------
# theorem
# ---------------------------------------------------------------------------


def _skip_ema(P, Q, alpha):
    return P.copy()


def capacity_fixture():
    """Eight points in four pairs of blobs with a same-label supervisor."""
    ds = make_blobs(k=4, n_per=2, D=2, sigma=1.0, seed=42)
    return build_supervisor(SupervisorSpec("label_uniform"), ds)


def imperfect_fixture(seed, n=16, L0=1.0):
    """Random ``(P0, Q0)`` with ``field_loss(P0, Q0) == L0``."""
    rng = substream(seed, "theory")
    P0 = theory.random_field(n, rng, 0.3)
    R = theory.random_field(n, rng, 0.3)
    return P0, theory.perturb_to_loss(P0, R, L0)


def run_theorem(cfg, out_dir):
    """Exact-regime sweep, Jensen sweep, two-stage check and both relaxations."""
    out_dir = Path(out_dir)
    update = _skip_ema if cfg.theorem_fault == "skip_ema" else None
    seed = cfg.seeds[0]
    rng = substream(seed, "theory")
    verdicts = []
    failures = []

    ideal_rows = []
    for n in cfg.theorem_sizes:
        for alpha in cfg.theorem_alphas:
            for rep in range(cfg.theorem_replicates):
                P0 = theory.random_field(n, rng)
                Q0 = theory.random_field(n, rng)
                r = theory.run_ideal_recursion(P0, Q0, alpha, cfg.theorem_steps, update=update)
                two = theory.two_stage_ok(r)
                name = f"ideal_n{n}_a{alpha:g}_r{rep}.csv"
                path = out_dir / "ideal" / name
                write_atomic(path, r.to_csv())
                ok = r.passed and two
                ideal_rows.append({"n": n, "alpha": alpha, "rep": rep, "passed": ok})
                if not ok:
                    failures.append(str(path))
    verdicts.append(
        {"check": "geometric_decay+two_stage", "passed": all(r["passed"] for r in ideal_rows)}
    )

    slacks = theory.jensen_sweep(cfg.jensen_samples, seed=seed, update=update)
    jensen_ok = bool(slacks.min() >= -theory.EXACT_TOL)
    write_atomic(
        out_dir / "jensen.csv",
        rows_to_csv(("k", "slack"), [{"k": k, "slack": float(s)} for k, s in enumerate(slacks)]),
    )
    verdicts.append({"check": "jensen", "passed": jensen_ok, "min_slack": float(slacks.min())})
    if not jensen_ok:
        failures.append(str(out_dir / "jensen.csv"))

    cap = theory.run_capacity_limited(
        capacity_fixture(),
        0.5,
        cfg.capacity_steps,
        d=cfg.capacity_dim,
        inner_steps=cfg.capacity_inner_steps,
        seed=seed,
    )
    write_atomic(out_dir / "capacity.csv", cap.to_csv())
    verdicts.append(cap.verdict())
    if not (cap.passed and cap.extras["in_band"]):
        failures.append(str(out_dir / "capacity.csv"))

    P0, Q0 = imperfect_fixture(seed)
    for label, sched, need in (
        ("imperfect_summable", theory.EpsSchedule(0.1, 2.0), True),
        ("imperfect_constant", theory.EpsSchedule(0.05, 0.0), False),
    ):
        rep = theory.run_imperfect_inner(
            P0, Q0, 0.5, cfg.imperfect_steps, sched, seed=seed, require_summable=need
        )
        write_atomic(out_dir / f"{label}.csv", rep.to_csv())
        v = rep.verdict()
        v["check"] = label
        verdicts.append(v)
        if not rep.passed:
            failures.append(str(out_dir / f"{label}.csv"))

    passed = not failures
    write_json(
        out_dir / "verdict.json",
        {
            "passed": passed,
            "checks": verdicts,
            "failed_reports": failures,
            "config": cfg.as_dict(runtime=False),
        },
    )
    return {"passed": passed, "checks": verdicts, "failed_reports": failures}


def load_dataset(path):
    path = Path(path)
    return PointDataset.from_csv(path.read_text(), name=path.stem.split("_s")[0])
