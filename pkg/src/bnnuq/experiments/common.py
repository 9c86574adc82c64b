"""Shared experiment configuration, scaling profiles and result emission.

Result layout under the output directory:

    <outdir>/<experiment>/<method>_<depth>_<seed>[_<artifact>].csv
    <outdir>/<experiment>/manifest.json

CSV numbers are printed with a fixed "%.12g" format so reruns with the same
seed produce byte-identical files. The manifest echoes the configuration
and validates against the bundled JSON schema (it also records wall time,
so the manifest itself is not byte-stable).
"""

from __future__ import annotations

import importlib.metadata
import importlib.resources
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import jsonschema
import numpy as np

DEFAULT_WIDTH = 50
DEFAULT_DROPOUT = 0.05


def _version() -> str:
    try:
        return importlib.metadata.version("bnnuq")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def manifest_schema() -> dict:
    ref = importlib.resources.files("bnnuq") / "schemas/manifest.schema.json"
    return json.loads(ref.read_text())


@dataclass
class ExperimentConfig:
    experiment: str
    outdir: str
    depths: tuple[int, ...] = (1,)
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = ()
    width: int = DEFAULT_WIDTH
    paper_scale: bool = False
    smoke: bool = False
    data_path: str | None = None

    def scaled_width(self) -> int:
        return max(2, self.width // 2) if self.smoke else self.width

    def iters(self, paper: int, desk: int) -> int:
        """Pick the iteration budget for the active scale profile."""
        if self.paper_scale:
            return paper
        if self.smoke:
            return max(1, paper // 100)
        return desk

    def scaled_seeds(self) -> tuple[int, ...]:
        return self.seeds[:2] if self.smoke else self.seeds


class Emitter:
    """Writes an experiment's CSV artifacts and its manifest."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = Path(cfg.outdir) / cfg.experiment
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.notes: dict = {}
        self._start = time.monotonic()

    def csv_name(self, method: str, depth: int, seed: int,
                 artifact: str | None = None) -> str:
        stem = f"{method}_{depth}_{seed}"
        if artifact:
            stem += f"_{artifact}"
        return stem + ".csv"

    def write_csv(self, name: str, header: list[str],
                  columns: list[np.ndarray]) -> Path:
        rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        path = self.dir / name
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join("%.12g" % v for v in row) + "\n")
        self.files.append(name)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.files.append(name)
        return path

    def finalize(self, **notes) -> Path:
        self.notes.update(notes)
        manifest = {
            "experiment": self.cfg.experiment,
            "version": _version(),
            "config": _jsonable(asdict(self.cfg)),
            "wall_time_s": time.monotonic() - self._start,
            "files": sorted(self.files),
            "notes": _jsonable(self.notes),
        }
        jsonschema.validate(manifest, manifest_schema())
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def boxplot_stats(values: np.ndarray) -> dict[str, float]:
    """min / lower quartile / median / upper quartile / max summary."""
    values = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {"whisker_lo": float(values.min()), "q1": float(q1),
            "median": float(med), "q3": float(q3),
            "whisker_hi": float(values.max()), "n": float(values.size)}
