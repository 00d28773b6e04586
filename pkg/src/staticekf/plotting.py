"""Optional log-log MSE figure for ``run`` (the CSVs are the contract)."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_mse(aggregated, path, title=None):
    """Mean MSE against ``t`` per algorithm, with a one-standard-error band."""
    series = {}
    for _, alg, t, _, mean, se, _ in aggregated:
        series.setdefault(alg, []).append((t, mean, se))
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for alg, pts in series.items():
        pts.sort()
        t = [p[0] for p in pts]
        m = [p[1] for p in pts]
        se = [0.0 if math.isnan(p[2]) else p[2] for p in pts]
        style = "o-" if len(t) < 10 else "-"
        line, = ax.plot(t, m, style, label=alg, ms=3)
        lo = [max(a - b, a * 1e-3) for a, b in zip(m, se)]
        hi = [a + b for a, b in zip(m, se)]
        ax.fill_between(t, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("observations t")
    ax.set_ylabel("mean squared error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="major", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
