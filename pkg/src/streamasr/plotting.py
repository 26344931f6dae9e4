"""Matplotlib figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_attention_heatmap(matrix, path, title: str = "attention") -> Path:
    m = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(max(4.0, m.shape[1] / 8), max(2.5, m.shape[0] / 4)))
    im = ax.imshow(m, aspect="auto", origin="upper", cmap="gray_r", vmin=0.0, vmax=1.0, interpolation="nearest")
    ax.set_xlabel("encoder frame")
    ax.set_ylabel("output step")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def plot_schedule(epochs, lrs, layers, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(epochs, lrs, marker=".", color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("learning rate", color="tab:blue")
    ax2 = ax.twinx()
    ax2.step(epochs, layers, where="post", color="tab:orange")
    ax2.set_ylabel("encoder layers", color="tab:orange")
    return _save(fig, path)


def plot_loss(steps, losses, path, title: str = "training loss") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(steps, losses)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    return _save(fig, path)


def plot_latency(reports, path) -> Path:
    beams = [r.beam for r in reports]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(beams, [r.mean_latency_ms for r in reports], marker="o", label="latency (ms)")
    ax.plot(beams, [1000.0 * r.mean_inference_s for r in reports], marker="s", label="inference (ms)")
    ax.set_xlabel("beam")
    ax.set_xticks(beams)
    ax.legend()
    return _save(fig, path)
