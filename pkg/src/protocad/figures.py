"""Render training curves and context-grid summaries to PNG files.

Uses the non-interactive matplotlib backend so figures render identically on
headless machines. Callers pass the same records that back the delimited
reports, so a figure never shows anything the raw files do not contain.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

PHASE_STYLE = {
    "eval_train": ("tab:blue", "eval on training contexts"),
    "eval_test": ("tab:red", "eval on held-out contexts"),
}

LOSS_KEYS = ("loss_kl", "loss_obs", "loss_rew", "loss_tcswav", "loss_actor", "loss_critic")


def read_metrics(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def render_training_curves(metrics_path, out_path) -> Path:
    """Two panels: episode returns by phase, then loss components."""
    records = read_metrics(metrics_path)
    fig, (ax_ret, ax_loss) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)

    train = [r for r in records if r["phase"] == "train"]
    if train:
        ax_ret.plot([r["env_step"] for r in train], [r["return_mean"] for r in train],
                    ".", color="0.6", markersize=4, label="collected episode")
    for phase, (color, label) in PHASE_STYLE.items():
        rows = [r for r in records if r["phase"] == phase]
        if not rows:
            continue
        steps = [r["env_step"] for r in rows]
        means = [r["return_mean"] for r in rows]
        stds = [r["return_std"] for r in rows]
        ax_ret.plot(steps, means, "-o", color=color, markersize=4, label=label)
        ax_ret.fill_between(steps, [m - s for m, s in zip(means, stds)],
                            [m + s for m, s in zip(means, stds)], color=color, alpha=0.15)
    ax_ret.set_ylabel("episode return")
    ax_ret.legend(loc="best", fontsize=8)
    ax_ret.grid(alpha=0.3)

    for key in LOSS_KEYS:
        rows = [r for r in train if key in r]
        if rows:
            ax_loss.plot([r["env_step"] for r in rows], [r[key] for r in rows],
                         label=key.removeprefix("loss_"))
    ax_loss.set_xlabel("environment steps")
    ax_loss.set_ylabel("loss")
    ax_loss.set_yscale("symlog", linthresh=1e-3)
    ax_loss.legend(loc="best", fontsize=8, ncol=3)
    ax_loss.grid(alpha=0.3)

    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_context_grid(rows: list[dict], out_path) -> Path:
    """Per-context mean return with std bars, training vs held-out contexts."""
    rows = sorted(rows, key=lambda r: (r["split"], r["mass_mult"], r["damping_mult"]))
    labels = [f"{r['mass_mult']:g}" if r["damping_mult"] == 1.0
              else f"{r['mass_mult']:g}/{r['damping_mult']:g}" for r in rows]
    colors = ["tab:blue" if r["split"] == "train" else "tab:red" for r in rows]

    width = max(6.0, 0.22 * len(rows) + 2.0)
    fig, ax = plt.subplots(figsize=(width, 4.5))
    xs = range(len(rows))
    ax.bar(xs, [r["return_mean"] for r in rows],
           yerr=[r["return_std"] for r in rows], color=colors, capsize=2)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_xlabel("context (mass multiplier, /damping multiplier when varied)")
    ax.set_ylabel("mean return")
    handles = [plt.Rectangle((0, 0), 1, 1, color="tab:blue"),
               plt.Rectangle((0, 0), 1, 1, color="tab:red")]
    ax.legend(handles, ["training contexts", "held-out contexts"], fontsize=8)
    ax.grid(axis="y", alpha=0.3)

    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
