"""Figures written next to the JSON/text reports.

All functions draw on the non-interactive Agg backend and return the path of
the PNG they wrote. PNG metadata is stripped of the software tag so that
reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}
_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_history(history, path, title: str | None = None) -> Path:
    """Train/validation loss per epoch with the restored epoch marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        epochs = np.arange(1, history.epochs + 1)
        ax.plot(epochs, history.train_loss, marker="o", ms=3, label="train")
        ax.plot(epochs, history.val_loss, marker="s", ms=3, label="validation")
        if history.best_epoch:
            ax.axvline(history.best_epoch, color="0.5", ls="--", lw=0.8, label=f"best ({history.best_epoch})")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_matrix(report: dict, path, metric: str = "f1") -> Path:
    """Source x target heat map of the mean metric, annotated with mean ± std."""
    cells = report["cells"]
    sources = list(dict.fromkeys(c["source"] for c in cells))
    targets = list(dict.fromkeys(c["target"] for c in cells))
    grid = np.full((len(sources), len(targets)), np.nan)
    labels = [["" for _ in targets] for _ in sources]
    for c in cells:
        i, j = sources.index(c["source"]), targets.index(c["target"])
        mean, std = c[f"{metric}_mean"], c[f"{metric}_std"]
        if mean is not None:
            grid[i, j] = mean
            labels[i][j] = f"{mean:.2f}\n± {std:.3f}"
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.3 * len(targets) + 1.6, 1.0 * len(sources) + 1.0))
        cmap = "viridis" if metric == "f1" else "magma_r"
        vmax = 1.0 if metric == "f1" else max(1.0, float(np.nanmax(grid)) if np.isfinite(grid).any() else 1.0)
        im = ax.imshow(grid, cmap=cmap, vmin=0.0, vmax=vmax)
        for i in range(len(sources)):
            for j in range(len(targets)):
                if labels[i][j]:
                    shade = im.norm(grid[i, j])
                    ax.text(j, i, labels[i][j], ha="center", va="center", fontsize=8,
                            color="white" if (shade < 0.5) == (metric == "f1") else "black")
        ax.set_xticks(range(len(targets)), targets, rotation=30, ha="right")
        ax.set_yticks(range(len(sources)), sources)
        ax.set_xlabel("target domain (test split)")
        ax.set_ylabel("source domain (trained on)")
        ax.set_title("segment F1" if metric == "f1" else "segment error rate")
        fig.colorbar(im, ax=ax, shrink=0.8)
        return _save(fig, path)


def plot_detection(values: np.ndarray, reference, system, classes, path, sample_rate: int = 44100,
                   hop: int = 441, offset_s: float = 0.0) -> Path:
    """Log-mel image over reference (top) and predicted (bottom) event lanes."""
    with plt.rc_context(STYLE):
        fig, (ax_spec, ax_ev) = plt.subplots(2, 1, figsize=(8, 4), sharex=True,
                                             gridspec_kw={"height_ratios": [3, 1.4]})
        t_end = offset_s + values.shape[1] * hop / sample_rate
        ax_spec.imshow(values, origin="lower", aspect="auto", extent=(offset_s, t_end, 0, values.shape[0]))
        ax_spec.set_ylabel("mel bin")
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for lane, (events, y0) in enumerate(((reference or [], 0.55), (system or [], 0.05))):
            for onset, offset, label in events:
                ci = list(classes).index(label) if label in classes else 0
                ax_ev.broken_barh([(onset, offset - onset)], (y0 + 0.13 * ci, 0.12), color=colors[ci % len(colors)])
        ax_ev.set_yticks([0.25, 0.75], ["predicted", "reference"])
        ax_ev.set_ylim(0, 1)
        ax_ev.set_xlabel("time (s)")
        handles = [plt.Rectangle((0, 0), 1, 1, color=colors[i % len(colors)]) for i in range(len(classes))]
        ax_ev.legend(handles, classes, ncol=len(classes), frameon=False, loc="upper right", fontsize=7)
        return _save(fig, path)
