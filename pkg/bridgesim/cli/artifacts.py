"""
Run output directory: result tables as CSV (pandas, shortest round-trip float
repr) and JSON documents, plus the manifest.
"""
import json
import logging
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

import bridgesim
from bridgesim.core.logger import to_jsonable
from bridgesim.sde.models import PathBatch

logger = logging.getLogger("bridgesim.cli.artifacts")


def version_string() -> str:
    """git describe of the source tree, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(bridgesim.__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=True,
        )
        described = out.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{bridgesim.__version__}"


def paths_frame(batch: PathBatch, path_ids: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Long format: one row per (path, node), columns path_id, t, x_1..x_d."""
    n, nodes, d = batch.states.shape
    ids = np.arange(n) if path_ids is None else np.asarray(path_ids)
    frame = pd.DataFrame({
        "path_id": np.repeat(ids, nodes),
        "t": np.tile(batch.grid.nodes, n),
    })
    flat = batch.states.reshape(n * nodes, d)
    for j in range(d):
        frame[f"x_{j + 1}"] = flat[:, j]
    return frame


def weights_frame(log_psi: np.ndarray, log_ptilde0: float, weights: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({
        "path_id": np.arange(log_psi.shape[0]),
        "log_psi": log_psi,
        "log_ptilde0": np.full(log_psi.shape[0], log_ptilde0),
        "weight": weights,
    })


class RunArtifacts:
    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def _path(self, name: str) -> Path:
        self.written.append(name)
        return self.out_dir / name

    def write_table(self, name: str, frame: pd.DataFrame):
        frame.to_csv(self._path(name), index=False, lineterminator="\n")
        logger.debug(f"Wrote {name} ({len(frame)} rows)")

    def write_json(self, name: str, payload: Dict[str, Any]):
        with open(self._path(name), "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=to_jsonable)
            f.write("\n")

    def write_manifest(self, manifest: Dict[str, Any]):
        manifest = dict(manifest, outputs=sorted(set(self.written)))
        with open(self.out_dir / "manifest.json", "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=to_jsonable)
            f.write("\n")
