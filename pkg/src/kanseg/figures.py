"""Report figures rendered to files next to the CSV/text output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_training_curves(log, path) -> Path:
    """Loss/Dice curves and the lr schedule from a training log."""
    epochs = [row.epoch for row in log]
    fig, (ax_loss, ax_lr) = plt.subplots(1, 2, figsize=(11, 4))

    ax_loss.plot(epochs, [row.train_loss for row in log], label="train loss",
                 color="tab:blue")
    ax_loss.plot(epochs, [row.val_loss for row in log], label="val loss",
                 color="tab:orange")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_dice = ax_loss.twinx()
    ax_dice.plot(epochs, [row.val_dice for row in log], label="val dice",
                 color="tab:green", linestyle="--")
    ax_dice.set_ylabel("dice")
    ax_dice.set_ylim(0.0, 1.05)
    lines = ax_loss.get_lines() + ax_dice.get_lines()
    ax_loss.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    ax_loss.set_title("losses and validation dice")

    ax_lr.plot(epochs, [row.lr for row in log], color="tab:red")
    ax_lr.set_xlabel("epoch")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_title("cosine schedule")

    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_eval_chart(rows, path) -> Path:
    """Per-sample Dice bars with the pooled mean marked."""
    ids = [sample_id for sample_id, _ in rows]
    dices = [m["dice"] for _, m in rows]
    width = max(6.0, 0.45 * len(ids))
    fig, ax = plt.subplots(figsize=(width, 4))
    ax.bar(range(len(ids)), dices, color="tab:blue")
    mean = sum(dices) / len(dices)
    ax.axhline(mean, color="tab:red", linestyle="--",
               label=f"mean {mean:.3f}")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("dice")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right")
    ax.set_title("per-sample dice")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
