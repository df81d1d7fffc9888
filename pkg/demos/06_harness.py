"""
The experiment harness
======================

The ``rkdo`` command wraps everything above into reproducible runs that
write CSV traces, manifests and verdicts.  Here we drive it from Python
with a small configuration; the same file works with
``rkdo compare --config small.cfg``.
"""

import tempfile
from pathlib import Path

from rkdo.harness.cli import main
from rkdo.harness.config import ExperimentConfig, format_config

cfg = ExperimentConfig(datasets=("blobs",), n_per=10, budgets=(20, 40), seeds=(1, 2, 3))

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg_path = tmp / "small.cfg"
    cfg_path.write_text(format_config(cfg))
    print(cfg_path.read_text().splitlines()[:5], "...")

    for cmd in ("gradcheck", "compare"):
        code = main([cmd, "--config", str(cfg_path), "--out", str(tmp / cmd)])
        print(f"rkdo {cmd}: exit {code}")

    print("\n" + (tmp / "compare" / "aggregate.csv").read_text().splitlines()[0][:80], "...")
    print(sorted(p.name for p in (tmp / "compare" / "traces").iterdir())[:4])
