"""Render study figures to PNG files next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_te_figure(results, rejected, path) -> None:
    """Two panels: TE / effective TE per ticker (FDR survivors highlighted)
    and the p-value distribution."""
    results = sorted(results, key=lambda r: -r.te_bits)
    fig, (ax_bars, ax_p) = plt.subplots(
        1, 2, figsize=(11, 4.2), gridspec_kw={"width_ratios": [2.2, 1]}
    )
    if results:
        tickers = [r.ticker for r in results]
        x = np.arange(len(tickers))
        rejected = set(rejected)
        colors = ["#d62728" if r.ticker in rejected else "#7f7f7f" for r in results]
        ax_bars.bar(x - 0.2, [r.te_bits for r in results], width=0.4, color=colors, label="TE")
        ax_bars.bar(
            x + 0.2,
            [r.ete_bits for r in results],
            width=0.4,
            color=colors,
            alpha=0.45,
            label="effective TE",
        )
        ax_bars.set_xticks(x)
        ax_bars.set_xticklabels(tickers, rotation=90, fontsize=7)
        ax_bars.legend(fontsize=8)
        ax_p.hist([r.p_value for r in results], bins=20, range=(0, 1), color="#1f77b4")
    ax_bars.set_ylabel("bits")
    ax_bars.set_title("Transfer entropy by ticker (red = FDR-significant)")
    ax_p.set_xlabel("bootstrap p-value")
    ax_p.set_ylabel("tickers")
    ax_p.set_title("p-value distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_equity_figure(dates, strategy, path, benchmark=None, baseline_paths=None) -> None:
    """Cumulative return of the strategy, optional benchmark, and the mean of
    the random baselines with a one-standard-deviation band."""
    fig, ax = plt.subplots(figsize=(9, 4.5))
    x = np.arange(len(dates))
    ax.plot(x, np.cumprod(1.0 + np.asarray(strategy)) - 1.0, label="strategy", color="#1f77b4")
    if benchmark is not None:
        ax.plot(x, np.cumprod(1.0 + np.asarray(benchmark)) - 1.0, label="benchmark", color="#2ca02c")
    if baseline_paths:
        curves = np.array([np.cumprod(1.0 + p) - 1.0 for p in baseline_paths])
        mean, sd = curves.mean(axis=0), curves.std(axis=0)
        ax.plot(x, mean, label="random (mean)", color="#7f7f7f")
        ax.fill_between(x, mean - sd, mean + sd, color="#7f7f7f", alpha=0.25)
    ticks = np.linspace(0, len(dates) - 1, min(8, len(dates))).astype(int)
    ax.set_xticks(ticks)
    ax.set_xticklabels([str(dates[i]) for i in ticks], rotation=30, fontsize=8)
    ax.set_ylabel("cumulative return")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_attrition_figure(stages, path) -> None:
    """Bar chart of article counts surviving each ingest stage."""
    fig, ax = plt.subplots(figsize=(8, 4))
    names = [s["stage"] for s in stages]
    counts = [s["out"] for s in stages]
    ax.bar(np.arange(len(names)), counts, color="#1f77b4")
    for i, s in enumerate(stages):
        ax.text(i, counts[i], f"-{s['removed_pct']:.1f}%", ha="center", va="bottom", fontsize=8)
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=20, fontsize=8)
    ax.set_ylabel("articles")
    ax.set_title("Ingest pipeline attrition")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
