"""Matplotlib figures rendered next to the delimited analysis outputs."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ORIGIN_COLORS = {"seed": "#9e9e9e", "expansion": "#1f77b4", "expedition": "#d62728"}


def plot_diversity_curve(curve: list[tuple[int, float]], backend_id: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    sizes = [s for s, _ in curve]
    values = [v for _, v in curve]
    ax.plot(sizes, values, marker="o", lw=1.5)
    ax.set_xlabel("archive size")
    ax.set_ylabel("mean pairwise cosine distance")
    ax.set_title(f"Diversity ({backend_id})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_origin_census(origin_counts: dict[str, int], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    names = list(origin_counts)
    counts = [origin_counts[n] for n in names]
    ax.bar(names, counts, color=[ORIGIN_COLORS.get(n, "#555") for n in names])
    ax.set_ylabel("records")
    ax.set_title("Archive origin census")
    for i, v in enumerate(counts):
        ax.text(i, v, str(v), ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_expedition_traces(run_dir: Path, path: Path, limit: int = 12) -> Path | None:
    """Best-fitness trajectories of the recorded expeditions, if any."""
    exp_root = run_dir / "expeditions"
    if not exp_root.exists():
        return None
    traces = sorted(exp_root.glob("*/trace.csv"))[:limit]
    if not traces:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for trace in traces:
        with trace.open() as fh:
            rows = list(csv.DictReader(fh))
        gens = [int(r["generation"]) for r in rows]
        best = [float(r["best_fitness"]) for r in rows]
        ax.plot(gens, best, lw=1.2, label=trace.parent.name)
    ax.set_xlabel("generation")
    ax.set_ylabel("best goal distance")
    ax.set_title("Expedition optimization traces")
    if len(traces) <= 8:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
