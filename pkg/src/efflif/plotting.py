"""Figures written next to the CLI's text reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_memory(reports, path):
    """Grouped bars of LIF forward/backward memory (MB) per scheme."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(len(reports))
        fwd = [r.mb("lif_forward") for r in reports]
        bwd = [r.mb("lif_backward") for r in reports]
        ax.bar(idx - 0.2, fwd, 0.4, label="forward")
        ax.bar(idx + 0.2, bwd, 0.4, label="backward")
        for x, v in zip(idx, bwd):
            ax.annotate(f"{v:.3g}", (x + 0.2, v), ha="center", va="bottom", fontsize=7)
        ax.set_xticks(idx, [r.scheme for r in reports])
        ax.set_ylabel("LIF memory (MB)")
        ax.set_title(f"LIF memory, T={reports[0].timesteps}")
        ax.legend()
        return _save(fig, path)


def plot_history(history, path):
    """Loss and accuracy per epoch, spike rate per layer underneath."""
    recs = history.records
    epochs = [r.epoch for r in recs]
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
        ax0.plot(epochs, [r.loss for r in recs], color="k", label="loss")
        ax0.set_ylabel("loss")
        acc = ax0.twinx()
        acc.plot(epochs, [r.train_accuracy for r in recs], color="C0", label="train")
        if any(r.val_accuracy is not None for r in recs):
            acc.plot(epochs, [r.val_accuracy for r in recs], color="C1", label="val")
        acc.set_ylabel("accuracy")
        acc.set_ylim(0, 1.02)
        acc.legend(loc="center right")
        rates = np.array([r.spike_rates for r in recs])
        for j in range(rates.shape[1] if rates.size else 0):
            ax1.plot(epochs, rates[:, j], label=f"layer {j}")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("spike rate")
        ax1.legend(ncol=3, fontsize=7)
        return _save(fig, path)


def plot_spike_rates(rates: dict, path):
    """Per-layer spike rate for several schemes side by side."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        names = list(rates)
        n_layers = max(len(v) for v in rates.values())
        width = 0.8 / max(len(names), 1)
        for i, name in enumerate(names):
            xs = np.arange(len(rates[name])) + (i - (len(names) - 1) / 2) * width
            ax.bar(xs, rates[name], width, label=name)
        ax.set_xticks(np.arange(n_layers))
        ax.set_xlabel("LIF layer")
        ax.set_ylabel("spike rate")
        ax.legend()
        return _save(fig, path)


def plot_dram(batches, reductions: dict, path):
    """DRAM traffic reduction against mini-batch size."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, vals in reductions.items():
            ax.plot(batches, [100 * v for v in vals], marker="o", label=name)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("mini-batch size")
        ax.set_ylabel("DRAM access reduction (%)")
        ax.legend()
        return _save(fig, path)
