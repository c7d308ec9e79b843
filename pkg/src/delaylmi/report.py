"""Report serialization and static plots.

Reports are deterministic given the configuration: keys are sorted, floats
are written with ``repr`` precision and wall-clock numbers live only under
the top-level ``timing`` key.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

TOOL = "delaylmi"


def jsonable(obj):
    """Convert numpy containers and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def header(cfg, tolerances: dict) -> dict:
    return {"tool": TOOL, "version": __version__, "task": cfg.task,
            "config_hash": cfg.hash, "seed": cfg.seed, "tolerances": tolerances}


def write_json(path, data) -> None:
    text = json.dumps(jsonable(data), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def write_csv(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                              else v) for v in r])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = TOOL
    return plt


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_trajectory(path, k, states, vmin=None) -> None:
    plt = _pyplot()
    rows = 2 if vmin is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(7, 2.8 * rows), sharex=True, squeeze=False)
    ax = axes[0, 0]
    for i in range(states.shape[1]):
        ax.plot(k, states[:, i], lw=1, label=f"x{i + 1}")
    ax.set_ylabel("state")
    ax.legend(loc="upper right", fontsize=7)
    if vmin is not None:
        ax = axes[1, 0]
        v = np.asarray(vmin, dtype=float)
        ax.semilogy(k[v > 0], v[v > 0], lw=1, color="k")
        ax.set_ylabel("min(V1, V2)")
    axes[-1, 0].set_xlabel("k")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_sweep(path, records) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for d_n in sorted({r.d_n for r in records}):
        pts = sorted((r.epsilon, r.max_feasible_dM) for r in records if r.d_n == d_n)
        eps = [e for e, _ in pts]
        dm = [np.nan if v is None else v for _, v in pts]
        ax.plot(eps, dm, marker="o", lw=1, label=f"d_n = {d_n}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("max feasible d_M")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
