"""Figures written next to the CSV outputs.

Everything renders through the Agg backend with PNG metadata stripped, so a
rerun produces the same bytes.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PART_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red")


def save(fig, path) -> None:
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def plot_sample(cloud, partition=None, window=None, path=None, title: str = ""):
    """Sites coloured by partition part, with the bulk window outlined."""
    fig, ax = plt.subplots(figsize=(5, 5))
    xy = cloud.coords
    if partition is None:
        ax.scatter(xy[:, 0], xy[:, 1], s=4, c="0.4")
    else:
        for k, part in enumerate(partition):
            pts = part.points()
            ax.scatter(pts[:, 0], pts[:, 1], s=4, c=PART_COLORS[k % len(PART_COLORS)], label=f"part {k}")
        ax.legend(loc="upper right", fontsize=7, markerscale=3)
    if window is not None and not window.is_empty:
        pts = window.points()
        ax.scatter(pts[:, 0], pts[:, 1], s=14, facecolors="none", edgecolors="k", linewidths=0.5)
    ax.set_aspect("equal")
    ax.set_title(title)
    if path is not None:
        save(fig, path)
    return fig


def plot_spectrum(eigenvalues, gaps=(), fermi_energy=None, path=None, title: str = ""):
    """Sorted eigenvalues with detected gaps shaded."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    w = np.asarray(eigenvalues)
    ax.plot(np.arange(len(w)), w, ".", ms=2, c="k")
    for lo, hi, *_ in gaps:
        ax.axhspan(lo, hi, color="tab:blue", alpha=0.15, lw=0)
    if fermi_energy is not None:
        ax.axhline(fermi_energy, color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("index")
    ax.set_ylabel("energy [t]")
    ax.set_title(title)
    if path is not None:
        save(fig, path)
    return fig


def plot_decay(profile, path=None, title: str = ""):
    """Max block trace norm per tile-distance bin on a log scale."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ctr = 0.5 * (profile.bin_lo + profile.bin_hi)
    ok = np.isfinite(profile.value) & (profile.value > 0)
    ax.semilogy(ctr[ok], profile.value[ok], "o-", ms=3)
    slope = profile.slope()
    if slope is not None:
        ax.set_title(f"{title} slope {slope:.3f}".strip())
    ax.set_xlabel("tile distance")
    ax.set_ylabel("max block trace norm")
    if path is not None:
        save(fig, path)
    return fig


def plot_profiles(profiles, path=None, title: str = ""):
    """Radius profiles on log-log axes; ``profiles`` maps a label to (r, value)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (r, v) in profiles.items():
        r, v = np.asarray(r, float), np.asarray(v, float)
        ok = (r > 0) & (v > 0) & np.isfinite(v)
        ax.loglog(r[ok], v[ok], "o-", ms=3, label=label)
    ax.set_xlabel("r")
    ax.legend(fontsize=7)
    ax.set_title(title)
    if path is not None:
        save(fig, path)
    return fig


def plot_columns(table, x: str, y: str, group: str | None = None, path=None, logy: bool = False):
    """y against x from an ExperimentTable, one line per value of ``group``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    recs = [r for r in table.records() if r.get(x) is not None and r.get(y) is not None]
    keys = sorted({r.get(group) for r in recs}, key=str) if group else [None]
    for key in keys:
        sel = [r for r in recs if group is None or r.get(group) == key]
        sel.sort(key=lambda r: r[x])
        xs = [r[x] for r in sel]
        ys = [abs(r[y]) if logy else r[y] for r in sel]
        if logy:
            pairs = [(a, b) for a, b in zip(xs, ys) if b > 0 and math.isfinite(b)]
            xs, ys = [a for a, _ in pairs], [b for _, b in pairs]
        ax.plot(xs, ys, "o-", ms=3, label=None if key is None else f"{group}={key}")
    if logy:
        ax.set_yscale("log")
    if group:
        ax.legend(fontsize=7)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(table.suite)
    if path is not None:
        save(fig, path)
    return fig


def plot_check_values(table, path=None, title: str = ""):
    """Per-suite scatter of check values against their bounds, log scale."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    recs = [r for r in table.records() if isinstance(r.get("value"), (int, float))
            and isinstance(r.get("bound"), (int, float)) and r["bound"] > 0]
    for suite in sorted({r["suite"] for r in recs}):
        ratio = [max(r["value"] / r["bound"], 1e-18) for r in recs if r["suite"] == suite]
        ax.semilogy(np.arange(len(ratio)), ratio, ".", ms=2, label=suite)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("check")
    ax.set_ylabel("value / bound")
    if recs:
        ax.legend(fontsize=7, markerscale=4)
    ax.set_title(title or table.suite)
    if path is not None:
        save(fig, path)
    return fig
