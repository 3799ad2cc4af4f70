"""Learning-curve plots from a curves.csv written by `gridiql run`."""

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)


def load_curves(path):
    """{(variant, metric): {seed: ([return], [rolling std])}} from curves.csv.

    Blank rolling-std cells (the first W-1 episodes) come back as NaN.
    """
    curves = {}
    with open(path, "r", encoding="utf-8", newline="") as infile:
        for row in csv.DictReader(infile):
            seeds = curves.setdefault((row["variant"], row["metric"]), {})
            returns, stds = seeds.setdefault(int(row["seed"]), ([], []))
            returns.append(float(row["return"]))
            stds.append(float(row["rolling_std"]) if row["rolling_std"] else np.nan)
    return curves


def mean_curve(series):
    """Episode-wise mean over seeds, truncated to the shortest run; NaN where no seed has a value."""
    n = min(len(values) for values in series)
    stacked = np.array([values[:n] for values in series], dtype=float)
    counts = np.sum(~np.isnan(stacked), axis=0)
    sums = np.nansum(stacked, axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def plot_curves(in_dir, out_path=None):
    in_dir = Path(in_dir)
    curves = load_curves(in_dir / "curves.csv")
    out_path = Path(out_path) if out_path is not None else in_dir / "curves.png"

    fig, (ax_return, ax_std) = plt.subplots(2, 1, figsize=(8, 8), sharex=True)
    for (variant, metric), seeds in sorted(curves.items()):
        label = f"{variant} ({metric}, {len(seeds)} seeds)"
        ax_return.plot(mean_curve([r for r, _ in seeds.values()]), label=label)
        ax_std.plot(mean_curve([s for _, s in seeds.values()]), label=label)
    ax_return.set_title("Mean Return per Episode by Variant")
    ax_return.set_ylabel("Return")
    ax_return.legend()
    ax_std.set_title("Mean Rolling Standard Deviation")
    ax_std.set_xlabel("Episode")
    ax_std.set_ylabel("Std")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    log.info("wrote %d curves to %s", len(curves), out_path)
    return out_path
