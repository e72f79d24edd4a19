"""Evaluation reports: JSON table, CSV for plotting, and rendered figures."""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .eval_harness import SPLIT_ORDER


def write_report_json(report: dict, path):
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def write_report_csv(report: dict, path):
    """Flat section/key rows mirroring the JSON report, for external plotting."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["section", "key", "r1", "r5", "miou", "count"])
        for label in SPLIT_ORDER:
            if label in report["splits"]:
                m = report["splits"][label]
                writer.writerow(["split", label, m["r1"], m["r5"], m["miou"],
                                 m["count"]])
        avg = report["average"]
        writer.writerow(["average", "average", avg["r1"], avg["r5"], avg["miou"],
                         avg["count"]])
        for section in ("complexity", "novelty"):
            for key, m in report.get(section, {}).items():
                writer.writerow([section, key, m["r1"], "", "", m["count"]])


def _bar(ax, labels, values, title, ylabel="R@1"):
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(x) for x in labels])
    ax.set_ylim(0, 1)
    ax.set_ylabel(ylabel)
    ax.set_title(title)


def render_figures(report: dict, out_prefix) -> list[str]:
    """Render per-split and bucket bar charts next to the report files."""
    written = []

    labels = [s for s in SPLIT_ORDER if s in report["splits"]]
    fig, ax = plt.subplots(figsize=(5, 3))
    _bar(ax, labels + ["avg"],
         [report["splits"][s]["r1"] for s in labels] + [report["average"]["r1"]],
         "Recall@1 by temporal-word split")
    fig.tight_layout()
    path = f"{out_prefix}_splits.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    for section, title in (("complexity", "Recall@1 by clause count"),
                           ("novelty", "Recall@1 by novelty quartile")):
        buckets = report.get(section)
        if not buckets:
            continue
        fig, ax = plt.subplots(figsize=(5, 3))
        keys = sorted(buckets, key=lambda k: int(k))
        _bar(ax, keys, [buckets[k]["r1"] for k in keys], title)
        fig.tight_layout()
        path = f"{out_prefix}_{section}.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def write_ablation_csv(rows: list[dict], path):
    """Combined ablation table: one row per variant."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "r1", "r5", "miou"])
        for row in rows:
            writer.writerow([row["variant"], row["r1"], row["r5"], row["miou"]])


def render_ablation_figure(rows: list[dict], path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    _bar(ax, [r["variant"] for r in rows], [r["r1"] for r in rows],
         "Average R@1 by ablation variant")
    ax.set_xticklabels([r["variant"] for r in rows], rotation=30, ha="right",
                       fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
