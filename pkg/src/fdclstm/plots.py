"""Box-plot rendering for evaluation reports.

Figures are written as SVG with a pinned hash salt and no embedded date, so
reruns produce byte-identical files. Layout follows the scenario-comparison
convention: one group per scenario (reference, no-FDC, all-FDC, sparse-FDC
variants), one box per reported member within the group.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fdclstm"

import matplotlib.pyplot as plt

MEMBER_COLORS = [
    "#4878a8",
    "#e49444",
    "#5fa052",
    "#b65a9c",
    "#8a8a8a",
    "#c44e52",
]


def metric_values(rows: list[dict], member: str, metric: str) -> list[float]:
    """Defined per-basin values of one metric for one member, report-CSV rows."""
    out = []
    for r in rows:
        if r["member"] != member:
            continue
        cell = r[metric]
        if cell.startswith("undefined("):
            continue
        out.append(float(cell))
    return out


def plot_metric_boxes(
    scenarios: list[tuple[str, dict[str, list[float]]]],
    out_path,
    metric_label: str = "NSE",
    title: str | None = None,
    ylim: tuple[float, float] | None = (-1.0, 1.0),
) -> None:
    """Grouped box plots: scenarios along x, one box per member in each group."""
    members: list[str] = []
    for _, groups in scenarios:
        for m in groups:
            if m not in members:
                members.append(m)

    n_s, n_m = len(scenarios), max(1, len(members))
    width = 0.8 / n_m
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * n_s), 4.0))
    for j, member in enumerate(members):
        positions, data = [], []
        for i, (_, groups) in enumerate(scenarios):
            vals = groups.get(member)
            if vals:
                positions.append(i + (j - (n_m - 1) / 2.0) * width)
                data.append(vals)
        if not data:
            continue
        color = MEMBER_COLORS[j % len(MEMBER_COLORS)]
        bp = ax.boxplot(
            data,
            positions=positions,
            widths=width * 0.85,
            patch_artist=True,
            showfliers=False,
            medianprops={"color": "black"},
        )
        for box in bp["boxes"]:
            box.set_facecolor(color)
            box.set_alpha(0.7)
        ax.plot([], [], color=color, label=member, linewidth=6, alpha=0.7)

    ax.set_xticks(range(n_s))
    ax.set_xticklabels([label for label, _ in scenarios])
    ax.set_ylabel(metric_label)
    if ylim is not None:
        ax.set_ylim(*ylim)
    if title:
        ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    if members:
        ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
