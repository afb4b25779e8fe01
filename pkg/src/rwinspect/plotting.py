"""Matplotlib renderers for the harness outputs.

Each renderer writes a PNG next to the corresponding CSV and closes the
figure; nothing here opens a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_pvalue_evolution(traces, test_ts, floor, path) -> None:
    """Mean floored log10 P-value per condition over test times."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for condition in sorted(traces):
        means = [np.mean(traces[condition][t]) for t in test_ts]
        style = "--" if "none" not in condition else "-"
        ax.plot(test_ts, means, style, label=condition)
    ax.axhline(floor, color="0.4", lw=0.8, ls=":", label="trigger threshold")
    ax.set_xlabel("step")
    ax.set_ylabel(r"mean $\log_{10}$ P-value (floored)")
    ax.legend(fontsize=7)
    _save(fig, path)


def render_coverage_curve(rows, path) -> None:
    """Mean coverage fraction versus step, one line per (env, c_U, bins)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    series: dict[tuple, list[tuple[int, float]]] = {}
    for row in rows:
        series.setdefault((row["env_id"], row["c_U"], row["bins"]), []).append(
            (row["t"], row["mean_fraction"])
        )
    for key in sorted(series):
        pts = sorted(series[key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                label=f"{key[0]} c_U={key[1]:g} bins={key[2]}", lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("mean coverage fraction")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=6, ncol=2)
    _save(fig, path)


def render_step_cdf(plot_data, c_u, path) -> None:
    """Empirical step-size CDFs with the analytic reference and DKW band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, (condition, (xs, emp, refv, eps)) in enumerate(sorted(plot_data.items())):
        color = f"C{i}"
        ax.step(xs, emp, where="post", color=color, lw=1.0, label=f"{condition} (empirical)")
        ax.plot(xs, refv, color=color, ls="--", lw=0.8, alpha=0.8)
        ax.fill_between(xs, np.clip(refv - eps, 0, 1), np.clip(refv + eps, 0, 1),
                        color=color, alpha=0.12)
    ax.set_xlabel("step size (m)")
    ax.set_ylabel("CDF")
    ax.set_xlim(0, c_u)
    ax.legend(fontsize=7)
    _save(fig, path)


def render_audit_cdfs(records_by_map, c_u, path) -> None:
    """Two-panel audit figure: step-size CDFs above, leaky turn-to-turn
    distance CDFs below, one curve per map."""
    fig, (ax_ve, ax_leaky) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    for i, (name, records) in enumerate(sorted(records_by_map.items())):
        color = f"C{i}"
        ve = np.sort(np.concatenate([r["V_e"] for r in records]))
        seg = np.sort(np.concatenate([r["segments"] for r in records]))
        ax_ve.plot(ve, np.arange(1, ve.size + 1) / ve.size, color=color, label=name)
        ax_leaky.plot(seg, np.arange(1, seg.size + 1) / seg.size, color=color, label=name)
    ax_ve.set_ylabel("CDF: recorded step size")
    ax_ve.legend(fontsize=8)
    ax_leaky.set_ylabel("CDF: distance between turns (leaky)")
    ax_leaky.set_xlabel("distance (m)")
    ax_leaky.set_xlim(0, c_u)
    _save(fig, path)
