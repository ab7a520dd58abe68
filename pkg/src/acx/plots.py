"""Figures rendered next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import MiningReport  # noqa: E402

_META = {"Software": None}


def plot_reward_history(rep: MiningReport, path: str):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = list(range(len(rep.rewards)))
    ax.plot(xs, rep.rewards, marker="o", color="C0")
    if rep.rewards:
        ax.axvline(rep.best_iteration, color="C3", ls="--", lw=1, label="best")
        ax.legend(frameon=False)
    ax.set_xlabel("iteration")
    ax.set_ylabel("approx. reward (K x coverage)")
    ax.set_title(rep.design, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_group_coverage(rep: MiningReport, path: str):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = [f"{g.name}\n({g.size}x{g.count})" for g in rep.groups]
    ax.bar(range(len(labels)), [g.coverage_pct for g in rep.groups], color="C2")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("coverage (% of cells)")
    ax.set_title(f"{rep.design}: area -{rep.reduction_pct:.2f}%", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
