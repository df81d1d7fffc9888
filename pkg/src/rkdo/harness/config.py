"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment.  Lists are comma separated.
Every key must appear in :data:`SCHEMA`; unknown keys and values that do not
parse as the declared type raise :class:`ConfigError`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..fields import SUPERVISOR_KINDS, SupervisorSpec
from ..optimizer import RKDOConfig

DATASETS = ("blobs", "moons", "rings")
FAULTS = ("none", "skip_ema")


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list_of(kind):
    def parse(text):
        return tuple(kind(tok.strip()) for tok in text.split(",") if tok.strip())

    return parse


# key -> (parser, help)
SCHEMA = {
    # data
    "datasets": (_list_of(str), "fixtures to run: blobs, moons, rings"),
    "clusters": (int, "blob clusters / ring count"),
    "n_per": (int, "points per cluster, ring or moon before pairing"),
    "ambient_dim": (int, "blob ambient dimension"),
    "blob_sigma": (float, "blob spread"),
    "blob_separation": (float, "distance between blob centers"),
    "noise": (float, "ring and moon noise"),
    "jitter": (float, "augmentation jitter sigma (0 gives coincident views)"),
    # supervisor
    "supervisor": (str, "knn_gaussian | label_uniform | positive_pairs"),
    "supervisor_k": (int, "neighbours for knn_gaussian"),
    "supervisor_sigma": (float, "kernel width for knn_gaussian"),
    # model and optimisation
    "embed_dim": (int, "embedding dimension d"),
    "alpha": (float, "EMA coefficient"),
    "recursion_depth": (int, "EMA + gradient cycles per outer step"),
    "tau0": (float, "initial temperature (also the I-Con temperature)"),
    "beta": (float, "temperature decay"),
    "optimizer": (str, "adam | sgd"),
    "learning_rate": (float, "step size"),
    "weight_decay": (float, "L2 weight decay"),
    "debias": (float, "I-Con debiasing weight"),
    # protocol
    "budgets": (_list_of(int), "strictly increasing outer-step budgets"),
    "seeds": (_list_of(int), "distinct seeds"),
    "neighbors": (int, "m for neighbourhood accuracy"),
    "record_timing": (_parse_bool, "write wall-clock times into traces"),
    "jobs": (int, "parallel worker processes"),
    # theorem
    "theorem_sizes": (_list_of(int), "field sizes for the exact-regime sweep"),
    "theorem_alphas": (_list_of(float), "alpha grid"),
    "theorem_replicates": (int, "random (P0, Q0) per size and alpha"),
    "theorem_steps": (int, "iterations per exact-regime run"),
    "jensen_samples": (int, "random triples in the Jensen sweep"),
    "capacity_dim": (int, "embedding dimension of the finite-capacity model"),
    "capacity_steps": (int, "outer iterations of the finite-capacity run"),
    "capacity_inner_steps": (int, "descent steps per inner fit"),
    "imperfect_steps": (int, "iterations of the imperfect-inner run"),
    "theorem_fault": (str, "none | skip_ema (negative control)"),
    # gradcheck
    "gradcheck_instances": (int, "random instances"),
    "gradcheck_perturb": (float, "relative noise added to the analytic gradient"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple = ("blobs", "moons")
    clusters: int = 3
    n_per: int = 20
    ambient_dim: int = 2
    blob_sigma: float = 1.0
    blob_separation: float = 10.0
    noise: float = 0.1
    jitter: float = 0.1
    supervisor: str = "positive_pairs"
    supervisor_k: int = 10
    supervisor_sigma: float = 1.0
    embed_dim: int = 16
    alpha: float = 0.2
    recursion_depth: int = 3
    tau0: float = 0.5
    beta: float = 0.1
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    debias: float = 0.2
    budgets: tuple = (50, 100, 250, 500)
    seeds: tuple = (42, 123, 456, 789, 101)
    neighbors: int = 5
    record_timing: bool = False
    jobs: int = 1
    theorem_sizes: tuple = (8, 16, 32)
    theorem_alphas: tuple = (0.1, 0.2, 0.5, 1.0)
    theorem_replicates: int = 5
    theorem_steps: int = 50
    jensen_samples: int = 1000
    capacity_dim: int = 1
    capacity_steps: int = 30
    capacity_inner_steps: int = 500
    imperfect_steps: int = 100
    theorem_fault: str = "none"
    gradcheck_instances: int = 20
    gradcheck_perturb: float = 0.0

    def __post_init__(self):
        if set(SCHEMA) != {f.name for f in fields(self)}:
            raise AssertionError("SCHEMA and ExperimentConfig disagree")
        bad = [d for d in self.datasets if d not in DATASETS]
        if bad or not self.datasets:
            raise ConfigError(f"datasets must be drawn from {DATASETS}, got {self.datasets}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        b = self.budgets
        if not b or any(x <= 0 for x in b) or any(x >= y for x, y in zip(b, b[1:])):
            raise ConfigError("budgets must be positive and strictly increasing")
        if self.supervisor not in SUPERVISOR_KINDS:
            raise ConfigError(f"supervisor must be one of {SUPERVISOR_KINDS}")
        if self.theorem_fault not in FAULTS:
            raise ConfigError(f"theorem_fault must be one of {FAULTS}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.rkdo_config(self.budgets[-1], self.seeds[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def rkdo_config(self, steps, seed):
        return RKDOConfig(
            alpha=self.alpha,
            recursion_depth=self.recursion_depth,
            steps=steps,
            tau0=self.tau0,
            beta=self.beta,
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            debias=self.debias,
            seed=seed,
        )

    def supervisor_spec(self):
        return SupervisorSpec(self.supervisor, k=self.supervisor_k, sigma=self.supervisor_sigma)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)

    def as_dict(self, runtime=True):
        """Plain dict of all settings; ``runtime=False`` drops ``jobs``, which
        never changes results."""
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}
        if not runtime:
            del d["jobs"]
        return d

    def digest(self):
        blob = json.dumps(self.as_dict(runtime=False), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path):
    return parse_config(Path(path).read_text())


def format_config(cfg):
    """Inverse of :func:`parse_config`."""
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
