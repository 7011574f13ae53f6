"""Static SVG line plots for benchmark output.

Files are byte-reproducible: the SVG id salt is fixed and no creation date
is embedded.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "dpsynth", "svg.fonttype": "none", "path.simplify": False}
_META = {"Date": None, "Creator": "dpsynth"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def mise_panels(means, path, title=""):
    """One panel per ``(n, alpha)``; ``means[(n, alpha)] = {label: (ms, values)}``."""
    keys = sorted(means, key=lambda t: (t[0], -t[1]))
    cols = 2
    rows = max(1, (len(keys) + cols - 1) // cols)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(rows, cols, figsize=(8, 3.2 * rows), squeeze=False)
        for ax, key in zip(axes.flat, keys):
            for label, (ms, vals) in sorted(means[key].items()):
                ax.plot(ms, vals, marker="o", markersize=3, label=label)
            n, alpha = key
            ax.set_title(f"n={n}, alpha={alpha:g}")
            ax.set_xlabel("bins m")
            ax.set_ylabel("mean ISE")
            ax.legend(fontsize=8)
        for ax in list(axes.flat)[len(keys):]:
            ax.set_visible(False)
        if title:
            fig.suptitle(title)
        _save(fig, path)


def rate_plot(ns, values, slope, theory, path, title=""):
    """Log-log plot of mean error against ``n`` with the fitted slope."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(ns, values, marker="o", label=f"measured slope {slope:.3f}")
        ref = [values[0] * (n / ns[0]) ** theory for n in ns]
        ax.loglog(ns, ref, linestyle="--", label=f"theory slope {theory:.3f}")
        ax.set_xlabel("n")
        ax.set_ylabel("mean error")
        ax.set_title(title)
        ax.legend(fontsize=8)
        _save(fig, path)
