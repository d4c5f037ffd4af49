"""Figures written next to the CSV output (Agg backend, PNG files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated runs byte-stable
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def sweep_figure(rows, baselines, quantiles, names, path):
    """Mean-value estimates against chain length, one panel per statistic.

    ``rows`` are sweep dicts for CD grid points; ``baselines`` maps a label
    (``mple``, ``reference``) to ``(mean, se)`` arrays; ``quantiles`` maps a
    statistic name to ``(levels, values)`` of its distribution at the
    reference parameters.
    """
    d = len(names)
    ncol = min(d, 2)
    nrow = int(np.ceil(d / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(5.2 * ncol, 3.6 * nrow), squeeze=False)
    series = {}
    for r in rows:
        if r["status"] == "error":
            continue
        label = r["family"] if r["s"] in ("", None) else f"{r['family']} s={r['s']}"
        series.setdefault(label, {}).setdefault(r["statistic"], []).append(
            (int(r["k"]), float(r["mean_value"]), float(r["mean_value_se"])))
    styles = {"mple": ("k", "--"), "reference": ("tab:red", "-")}
    for j, name in enumerate(names):
        ax = axes[j // ncol, j % ncol]
        for label, per_stat in series.items():
            pts = sorted(per_stat.get(name, []))
            if not pts:
                continue
            k, mu, se = map(np.array, zip(*pts))
            ax.errorbar(k, mu, yerr=2 * se, marker="o", ms=3, capsize=2, label=label)
        for label, (mean, se) in baselines.items():
            color, ls = styles.get(label, ("grey", ":"))
            ax.axhline(mean[j], color=color, ls=ls, lw=1, label=label)
        if name in quantiles:
            levels, vals = quantiles[name]
            lo, hi = vals[0], vals[-1]
            ax.axhspan(lo, hi, color="tab:red", alpha=0.08,
                       label=f"reference {levels[0]:g}-{levels[-1]:g} quantiles")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("chain length k")
        ax.set_title(name)
    for j in range(d, nrow * ncol):
        axes[j // ncol, j % ncol].axis("off")
    axes[0, 0].legend(fontsize=7, loc="best")
    fig.suptitle("Mean-value parameter estimates by kernel and chain length")
    fig.tight_layout()
    return _save(fig, path)


def trace_figure(trace, path, title="fit trace"):
    """Scaled moment residual per iteration (log scale)."""
    res = np.array([max(t[1], 1e-16) for t in trace], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogy(np.arange(len(res)), res, marker="o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("scaled residual")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def kl_figure(curves, path):
    """KL(T^k delta_y0 || q) against k for each labelled curve."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for label, kl in curves.items():
        kl = np.maximum(np.asarray(kl, dtype=float), 1e-300)
        ax.semilogy(np.arange(1, len(kl) + 1), kl, label=label)
    ax.set_xlabel("k")
    ax.set_ylabel("KL divergence to q")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
