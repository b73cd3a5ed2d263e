"""Confusion-matrix metrics and their JSON / PNG renderings."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ClassifierMetrics:
    confusion: np.ndarray  # rows: true class, columns: predicted class

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int) -> "ClassifierMetrics":
        cm = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(cm)

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def per_class_accuracy(self) -> np.ndarray:
        """Diagonal over row sum; NaN for classes absent from the evaluated set."""
        rows = self.support
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)

    @property
    def overall_accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else float("nan")

    def mean_accuracy(self, classes) -> float:
        return float(np.nanmean(self.per_class_accuracy[list(classes)]))

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": [None if np.isnan(a) else float(a) for a in self.per_class_accuracy],
            "overall_accuracy": self.overall_accuracy,
            "support": self.support.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierMetrics":
        return cls(np.array(d["confusion"], dtype=np.int64))

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def read_json(cls, path: str | Path) -> "ClassifierMetrics":
        return cls.from_dict(json.loads(Path(path).read_text()))


def plot_confusion(metrics: ClassifierMetrics, path: str | Path, title: str = "", highlight=(), class_names=None) -> Path:
    """Row-normalized confusion matrix in percent; ``highlight`` classes get a red box."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    cm = metrics.confusion.astype(float)
    pct = 100.0 * cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
    n = metrics.num_classes
    names = class_names or [str(i) for i in range(n)]
    fig, ax = plt.subplots(figsize=(0.45 * n + 2, 0.45 * n + 1.5))
    ax.imshow(pct, cmap="Blues", vmin=0, vmax=100)
    for i in range(n):
        for j in range(n):
            if pct[i, j] >= 0.5:
                ax.text(j, i, f"{pct[i, j]:.0f}", ha="center", va="center", fontsize=7,
                        color="white" if pct[i, j] > 50 else "black")
    for c in highlight:
        ax.add_patch(Rectangle((c - 0.5, c - 0.5), 1, 1, fill=False, edgecolor="red", lw=2))
    ax.set_xticks(range(n), names, fontsize=7)
    ax.set_yticks(range(n), names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
