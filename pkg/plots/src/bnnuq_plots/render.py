"""Render bnnuq experiment CSVs into paper-style figures.

All statistics are read verbatim from the CSVs; nothing is recomputed
here except the t-SNE embedding of the active-learning inputs (standard
tooling, perplexity 30, fixed seed). Inputs are opened read-only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

FIGURE_KINDS = ("fig2", "fig3", "fig4", "random-clusters", "active",
                "init-study")

METHOD_LABELS = {"gp": "Limiting GP", "hmc": "HMC", "mfvi": "MFVI",
                 "mcdo": "MCDO", "ffg": "FFG", "data": "data"}
METHOD_COLORS = {"gp": "tab:green", "hmc": "tab:purple", "mfvi": "tab:blue",
                 "mcdo": "tab:orange", "ffg": "tab:blue"}

_FILE_RE = re.compile(
    r"^(?P<method>[a-z]+)_(?P<depth>\d+)_(?P<seed>\d+)(?:_(?P<artifact>\w+))?\.csv$")


class MissingInputError(FileNotFoundError):
    """An expected experiment CSV is absent or malformed."""


@dataclass(frozen=True)
class FigureSpec:
    experiment: str
    indir: str
    out: str

    def __post_init__(self):
        if self.experiment not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.experiment!r}")


def _scan(indir: Path) -> list[dict]:
    entries = []
    for path in sorted(indir.glob("*.csv")):
        match = _FILE_RE.match(path.name)
        if match:
            rec = match.groupdict()
            rec["depth"] = int(rec["depth"])
            rec["seed"] = int(rec["seed"])
            rec["path"] = path
            entries.append(rec)
    if not entries:
        raise MissingInputError(f"no experiment CSVs found in {indir}")
    return entries


def _read(path: Path, required: list[str]) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MissingInputError(f"{path} lacks columns {missing}")
    return frame


def _band(ax, x, mean, std, color, label):
    ax.plot(x, mean, color=color, label=label)
    ax.fill_between(x, mean - 2 * std, mean + 2 * std, color=color,
                    alpha=0.25, linewidth=0)


def render_fig2(indir: Path, out: Path) -> None:
    """Fitted vs target variance curves with the structural bound lines."""
    entries = [e for e in _scan(indir) if e["method"] in ("ffg", "mcdo")]
    fig, axes = plt.subplots(1, len(entries), squeeze=False,
                             figsize=(5 * len(entries), 3.4))
    for ax, entry in zip(axes[0], entries):
        frame = _read(entry["path"], ["x", "target_var", "fitted_var",
                                      "bound"])
        ax.plot(frame.x, frame.target_var, "k--", label="target")
        ax.plot(frame.x, frame.fitted_var,
                color=METHOD_COLORS.get(entry["method"], "tab:blue"),
                label="fitted")
        ax.plot(frame.x, frame.bound, "r-", label="bound")
        ax.set_title(METHOD_LABELS.get(entry["method"], entry["method"]))
        ax.set_xlabel("x")
        ax.set_ylabel("Var[f(x)]")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_fig3(indir: Path, out: Path) -> None:
    """Per-method uncertainty heatmaps with mean +/- 2 std slice panels."""
    entries = _scan(indir)
    grids = [e for e in entries if e["artifact"] == "grid"]
    if not grids:
        raise MissingInputError("fig3 needs *_grid.csv files")
    data_files = {(e["depth"], e["seed"]): e["path"] for e in entries
                  if e["method"] == "data"}
    fig, axes = plt.subplots(2, len(grids), squeeze=False,
                             figsize=(3.6 * len(grids), 6.2),
                             gridspec_kw={"height_ratios": [2, 1]})
    for col, entry in enumerate(grids):
        frame = _read(entry["path"], ["x1", "x2", "mean", "std"])
        n_side = int(round(np.sqrt(len(frame))))
        std = frame["std"].to_numpy().reshape(n_side, n_side)
        extent = [frame.x1.min(), frame.x1.max(),
                  frame.x2.min(), frame.x2.max()]
        ax = axes[0][col]
        im = ax.imshow(std.T, origin="lower", extent=extent, aspect="equal",
                       cmap="viridis")
        key = (entry["depth"], entry["seed"])
        if key in data_files:
            points = _read(data_files[key], ["x1", "x2"])
            ax.plot(points.x1, points.x2, "rx", markersize=3)
        ax.plot([-1.2, 1.2], [-1.2, 1.2], "w--", linewidth=1)
        ax.set_title(METHOD_LABELS.get(entry["method"], entry["method"]))
        fig.colorbar(im, ax=ax, shrink=0.8)
        slice_path = entry["path"].with_name(
            entry["path"].name.replace("_grid", "_slice"))
        if not slice_path.exists():
            raise MissingInputError(f"missing slice file {slice_path}")
        sl = _read(slice_path, ["lambda", "mean", "std"])
        _band(axes[1][col], sl["lambda"], sl["mean"], sl["std"],
              METHOD_COLORS.get(entry["method"], "tab:blue"), None)
        axes[1][col].set_xlabel("lambda")
        if col == 0:
            axes[1][col].set_ylabel("f")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_fig4(indir: Path, out: Path) -> plt.Figure:
    """Grouped overconfidence boxplots; geometry read verbatim from CSVs.

    Returns the figure so tests can inspect the drawn geometry.
    """
    entries = [e for e in _scan(indir) if e["artifact"] is None]
    methods = sorted({e["method"] for e in entries},
                     key=lambda m: list(METHOD_LABELS).index(m)
                     if m in METHOD_LABELS else 99)
    depths = sorted({e["depth"] for e in entries})
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(depths), 3.6))
    group_width = 0.8
    step = group_width / max(len(methods), 1)
    for m_idx, method in enumerate(methods):
        stats = []
        positions = []
        for d_idx, depth in enumerate(depths):
            matching = [e for e in entries
                        if e["method"] == method and e["depth"] == depth]
            if not matching:
                continue
            frame = _read(matching[0]["path"],
                          ["whisker_lo", "q1", "median", "q3", "whisker_hi"])
            row = frame.iloc[0]
            stats.append({"med": row["median"], "q1": row.q1, "q3": row.q3,
                          "whislo": row.whisker_lo, "whishi": row.whisker_hi,
                          "label": str(depth)})
            positions.append(d_idx + (m_idx - (len(methods) - 1) / 2) * step)
        if not stats:
            continue
        color = METHOD_COLORS.get(method, "tab:gray")
        artists = ax.bxp(stats, positions=positions, widths=step * 0.85,
                         showfliers=False, patch_artist=True)
        for box in artists["boxes"]:
            box.set_facecolor(color)
            box.set_alpha(0.6)
        ax.plot([], [], color=color,
                label=METHOD_LABELS.get(method, method))
    ax.axhline(1.0, color="k", linestyle="--", linewidth=0.8)
    ax.set_xticks(range(len(depths)))
    ax.set_xticklabels([str(d) for d in depths])
    ax.set_xlabel("hidden layers")
    ax.set_ylabel("overconfidence ratio")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    return fig


def render_random_clusters(indir: Path, out: Path) -> None:
    """Mean +/- 2 std along the cluster-joining line, with projected data."""
    entries = _scan(indir)
    slices = [e for e in entries if e["artifact"] == "slice"]
    if not slices:
        raise MissingInputError("random-clusters needs *_slice.csv files")
    data_files = {(e["depth"], e["seed"]): e["path"] for e in entries
                  if e["method"] == "data"}
    fig, axes = plt.subplots(1, len(slices), squeeze=False,
                             figsize=(3.4 * len(slices), 3.0), sharey=True)
    for ax, entry in zip(axes[0], slices):
        frame = _read(entry["path"], ["lambda", "mean", "std"])
        _band(ax, frame["lambda"], frame["mean"], frame["std"],
              METHOD_COLORS.get(entry["method"], "tab:blue"), None)
        key = (entry["depth"], entry["seed"])
        if key in data_files:
            points = _read(data_files[key], ["lambda_projected", "y"])
            ax.plot(points.lambda_projected, points.y, "kx", markersize=2.5)
        ax.set_title(f"{METHOD_LABELS.get(entry['method'], entry['method'])}"
                     f" ({entry['depth']}HL)")
        ax.set_xlabel("lambda")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def _tsne_embedding(points: np.ndarray, seed: int = 0) -> np.ndarray:
    from sklearn.manifold import TSNE
    perplexity = min(30.0, max(2.0, (len(points) - 1) / 3.0))
    return TSNE(n_components=2, perplexity=perplexity, random_state=seed,
                init="pca").fit_transform(points)


def render_active(indir: Path, out: Path) -> None:
    """RMSE curves plus t-SNE selection scatters.

    The t-SNE embedding uses the normalised inputs from dataset_*.csv
    (perplexity 30, fixed seed); initial points are grey crosses, acquired
    points red crosses, and the remaining points are coloured by distance
    from the origin.
    """
    entries = _scan(indir)
    traces = [e for e in entries
              if e["artifact"] in ("active", "random")
              and e["method"] != "dataset"]
    datasets = [e for e in entries if e["method"] == "dataset"]
    if not traces or not datasets:
        raise MissingInputError("active needs trace and dataset CSVs")
    data = pd.read_csv(datasets[0]["path"])
    x_cols = [c for c in data.columns if c.startswith("x")]
    train_mask = data["is_test"] == 0
    train_points = data.loc[train_mask, x_cols].to_numpy()
    embedding = _tsne_embedding(train_points)
    radius = np.linalg.norm(train_points, axis=1)

    active_traces = [e for e in traces if e["artifact"] == "active"]
    methods = sorted({e["method"] for e in active_traces})
    n_cols = max(len(active_traces), 1)
    fig, axes = plt.subplots(2, n_cols, squeeze=False,
                             figsize=(3.4 * n_cols, 6.4))
    for col, entry in enumerate(active_traces):
        frame = _read(entry["path"], ["iteration", "rmse", "acquired_index"])
        ax = axes[0][col]
        ax.scatter(embedding[:, 0], embedding[:, 1], c=radius, s=4,
                   cmap="viridis", alpha=0.5, linewidths=0)
        initial = frame[frame.iteration < 0]["acquired_index"].astype(int)
        chosen = frame[(frame.iteration >= 0)
                       & (frame.acquired_index >= 0)]["acquired_index"]
        ax.plot(embedding[initial, 0], embedding[initial, 1], "x",
                color="gray", markersize=7, markeredgewidth=2)
        chosen = chosen.astype(int)
        ax.plot(embedding[chosen, 0], embedding[chosen, 1], "x", color="red",
                markersize=5, markeredgewidth=1.2)
        ax.set_title(METHOD_LABELS.get(entry["method"], entry["method"]))
        ax.set_xticks([])
        ax.set_yticks([])
    ax = axes[1][0]
    for entry in traces:
        frame = _read(entry["path"], ["iteration", "rmse"])
        frame = frame[frame.iteration >= 0]
        style = "-" if entry["artifact"] == "active" else ":"
        ax.plot(frame.iteration, frame.rmse, style,
                color=METHOD_COLORS.get(entry["method"], "tab:gray"),
                label=f"{entry['method']} {entry['artifact']} "
                      f"{entry['depth']}HL s{entry['seed']}")
    ax.set_xlabel("acquisition")
    ax.set_ylabel("test RMSE")
    ax.legend(fontsize=6)
    for col in range(1, n_cols):
        axes[1][col].axis("off")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_init_study(indir: Path, out: Path) -> None:
    """Slice uncertainty before and after annealing, with the GP reference."""
    entries = _scan(indir)
    pre = [e for e in entries if e["artifact"] == "pre"]
    if not pre:
        raise MissingInputError("init-study needs *_pre.csv files")
    gp = {(e["depth"], e["seed"]): e["path"] for e in entries
          if e["method"] == "gp" and e["artifact"] == "slice"}
    fig, axes = plt.subplots(2, len(pre), squeeze=False,
                             figsize=(3.6 * len(pre), 5.6), sharey="row")
    for col, entry in enumerate(pre):
        post_path = entry["path"].with_name(
            entry["path"].name.replace("_pre", "_post"))
        if not post_path.exists():
            raise MissingInputError(f"missing post file {post_path}")
        key = (entry["depth"], entry["seed"])
        for row, path in enumerate([entry["path"], post_path]):
            ax = axes[row][col]
            frame = _read(path, ["lambda", "mean", "std"])
            if key in gp:
                ref = _read(gp[key], ["lambda", "mean", "std"])
                _band(ax, ref["lambda"], ref["mean"], ref["std"],
                      METHOD_COLORS["gp"], "GP")
            _band(ax, frame["lambda"], frame["mean"], frame["std"],
                  METHOD_COLORS.get(entry["method"], "tab:blue"),
                  METHOD_LABELS.get(entry["method"], entry["method"]))
            ax.set_title(f"{METHOD_LABELS.get(entry['method'])} "
                         f"({'before' if row == 0 else 'after'} anneal)")
            if row == 1:
                ax.set_xlabel("lambda")
            ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


RENDERERS = {
    "fig2": render_fig2,
    "fig3": render_fig3,
    "fig4": render_fig4,
    "random-clusters": render_random_clusters,
    "active": render_active,
    "init-study": render_init_study,
}


def plot_experiment(spec: FigureSpec):
    """Render one experiment's directory to an image file."""
    indir = Path(spec.indir)
    if not indir.is_dir():
        raise MissingInputError(f"input directory {indir} does not exist")
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result = RENDERERS[spec.experiment](indir, out)
    if result is not None:
        plt.close(result)
    return out
