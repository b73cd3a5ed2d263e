"""Side-by-side comparison of scenario runs."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import ReportError
from ..vit import ClassifierMetrics
from .plan import RunManifest


def _load(manifest_path: Path) -> tuple[RunManifest, ClassifierMetrics]:
    if not manifest_path.exists():
        raise ReportError(f"missing manifest {manifest_path}")
    manifest = RunManifest.read(manifest_path)
    rel = manifest.paths.get("metrics")
    if not rel or not (manifest_path.parent / rel).exists():
        raise ReportError(f"{manifest_path}: metrics file missing")
    return manifest, ClassifierMetrics.read_json(manifest_path.parent / rel)


def _column_names(manifests: list[RunManifest]) -> list[str]:
    names, seen = [], {}
    for m in manifests:
        seen[m.scenario] = seen.get(m.scenario, 0) + 1
        names.append(m.scenario if seen[m.scenario] == 1 else f"{m.scenario}#{seen[m.scenario]}")
    return names


def comparison_table(manifests: list[RunManifest], metrics: list[ClassifierMetrics]) -> tuple[list[str], list[list]]:
    """Rows of (class, minority flag, accuracy per run[, delta last-first])."""
    names = _column_names(manifests)
    minority = set(manifests[0].plan.get("minority_classes", []))
    header = ["class", "minority"] + names
    with_delta = len(metrics) >= 2
    if with_delta:
        header.append(f"delta({names[-1]}-{names[0]})")
    n = max(m.num_classes for m in metrics)
    rows = []
    for c in range(n):
        accs = [float(m.per_class_accuracy[c]) if c < m.num_classes else float("nan") for m in metrics]
        row = [c, c in minority] + accs
        if with_delta:
            row.append(accs[-1] - accs[0])
        rows.append(row)
    overall = ["overall", ""] + [m.overall_accuracy for m in metrics]
    if with_delta:
        overall.append(metrics[-1].overall_accuracy - metrics[0].overall_accuracy)
    rows.append(overall)
    return header, rows


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "*" if v else ""
    if isinstance(v, float):
        return "  n/a" if np.isnan(v) else f"{100 * v:6.2f}"
    return str(v)


def report(manifest_paths, out_dir: str | Path) -> dict[str, Path]:
    """Write report.csv, report.txt, confusion_comparison.png and, when
    snapshots exist, progression.png. Returns the written paths."""
    paths = [Path(p) for p in manifest_paths]
    if not paths:
        raise ReportError("need at least one manifest")
    loaded = [_load(p) for p in paths]
    manifests = [m for m, _ in loaded]
    metrics = [x for _, x in loaded]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    header, rows = comparison_table(manifests, metrics)
    written = {}
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([("" if isinstance(v, float) and np.isnan(v) else v) for v in r])
    written["csv"] = out / "report.csv"

    widths = [max(len(h), 8) for h in header]
    lines = ["  ".join(h.rjust(wd) for h, wd in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(_fmt(v).rjust(wd) for v, wd in zip(r, widths)))
    lines.append("")
    lines.append("accuracy in percent; * marks minority classes")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    written["txt"] = out / "report.txt"

    written["confusion"] = _plot_confusions(manifests, metrics, out / "confusion_comparison.png")
    for m, p in zip(manifests, paths):
        snap = m.paths.get("snapshots")
        if snap:
            written["progression"] = plot_progression(p.parent / snap, out / "progression.png")
            break
    return written


def _plot_confusions(manifests, metrics, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    names = _column_names(manifests)
    minority = manifests[0].plan.get("minority_classes", [])
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 4), squeeze=False)
    for ax, m, name in zip(axes[0], metrics, names):
        cm = m.confusion.astype(float)
        pct = 100 * cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
        ax.imshow(pct, cmap="Blues", vmin=0, vmax=100)
        for c in minority:
            ax.add_patch(Rectangle((c - 0.5, c - 0.5), 1, 1, fill=False, edgecolor="red", lw=1.5))
        ax.set_title(f"{name}: {100 * m.overall_accuracy:.1f}%")
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_progression(snapshot_path: str | Path, path: str | Path, channel: int = 0, n_samples: int = 3) -> Path:
    """Grid of denoising snapshots: rows are samples, columns go from noise to image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with np.load(snapshot_path) as z:
        steps = sorted((k for k in z.files if k.startswith("t")), key=lambda k: -int(k[1:]))
        frames = {k: z[k] for k in steps}
        label = int(z["label"])
    rows = min(n_samples, next(iter(frames.values())).shape[0])
    fig, axes = plt.subplots(rows, len(steps), figsize=(1.6 * len(steps), 1.6 * rows), squeeze=False)
    for j, k in enumerate(steps):
        for i in range(rows):
            ax = axes[i][j]
            ax.imshow(frames[k][i, channel], cmap="viridis", vmin=-1, vmax=1, aspect="auto")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"t={int(k[1:])}", fontsize=8)
    fig.suptitle(f"class {label}, channel {channel}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
