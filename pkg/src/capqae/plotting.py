"""Static SVG figures built from the CSV rows.

Rendering uses the Agg backend with a fixed SVG hash salt and no date
metadata, so identical data gives byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.5),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "svg.hashsalt": "capqae",
    "svg.fonttype": "path",
}
STYLE = {"classical": ("C0", "o"), "hybrid": ("C3", "s"), "pure-quantum": ("C2", "^")}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _grouped(records, field):
    out = {}
    for r in records:
        out.setdefault(r.method, {}).setdefault(r.M, []).append(getattr(r, field))
    return out


def plot_error_curves(records, path):
    """Mean absolute error against ``M`` on log-log axes, one line per method."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for method, by_m in _grouped(records, "abs_error").items():
            ms = np.array(sorted(by_m))
            err = np.array([np.mean(by_m[m]) for m in ms])
            color, marker = STYLE.get(method, ("k", "x"))
            ax.loglog(ms, np.maximum(err, 1e-300), marker=marker, color=color, label=method)
        ax.set_xlabel("M")
        ax.set_ylabel("mean absolute error")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_price_vs_m(records, analytic, path):
    """Mean estimate with one-standard-deviation band against ``M``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for method, by_m in _grouped(records, "estimate").items():
            ms = np.array(sorted(by_m))
            mean = np.array([np.mean(by_m[m]) for m in ms])
            std = np.array([np.std(by_m[m]) for m in ms])
            color, marker = STYLE.get(method, ("k", "x"))
            ax.plot(ms, mean, marker=marker, color=color, label=method)
            ax.fill_between(ms, mean - std, mean + std, color=color, alpha=0.15, linewidth=0)
        ax.axhline(analytic, color="k", linestyle="--", linewidth=0.8, label="Black-76")
        ax.set_xscale("log")
        ax.set_xlabel("M")
        ax.set_ylabel("cap price")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_qubit_sweep(results, path):
    """Pure-quantum mean price with 95% confidence intervals against ``n``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        n = np.array([r.n_qubits for r in results])
        mean = np.array([r.mean for r in results])
        half = np.array([r.ci_high - r.mean for r in results])
        ax.errorbar(n, mean, yerr=half, fmt="o", color=STYLE["pure-quantum"][0], capsize=3,
                    label="pure quantum")
        ax.axhline(results[0].analytic, color="k", linestyle="--", linewidth=0.8, label="Black-76")
        ax.set_xticks(n)
        ax.set_xlabel("qubits per year")
        ax.set_ylabel("cap price")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
