"""Static SVG plots: per-metric training curves and objective curves."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from sdh import oracle  # noqa: E402
from sdh.errors import UsageError  # noqa: E402

PLOT_METRICS = ("reward_return", "cost_return", "kappa", "eta_E", "c_max", "entropy", "critic_loss")
matplotlib.rcParams["svg.hashsalt"] = "sdh"


def read_metrics(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise UsageError(f"{path}:{lineno}: {e.msg}") from None
    return rows


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_metrics(paths, out_dir, cost_limit: float | None = None) -> list[Path]:
    """One SVG per metric: a trace per metrics file plus their mean when there are several."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise UsageError("no metrics files to plot")
    runs = {p.stem: read_metrics(p) for p in paths}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in PLOT_METRICS:
        traces = {}
        for name, rows in runs.items():
            pts = [(r["step"], r[metric]) for r in rows if r.get(metric) is not None]
            if pts:
                traces[name] = np.array(pts, dtype=float)
        if not traces:
            continue
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for name, xy in sorted(traces.items()):
            ax.plot(xy[:, 0], xy[:, 1], lw=1, alpha=0.5, label=name)
        if len(traces) > 1:
            common = sorted(set.intersection(*(set(xy[:, 0]) for xy in traces.values())))
            if common:
                mean = [np.mean([xy[xy[:, 0] == s, 1][0] for xy in traces.values()]) for s in common]
                ax.plot(common, mean, color="black", lw=2, label="mean")
        if metric == "cost_return" and cost_limit is not None:
            ax.axhline(cost_limit, color="red", ls="--", lw=1, label="limit")
        ax.set_xlabel("environment steps")
        ax.set_ylabel(metric)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / f"{metric}.svg"
        _save(fig, path)
        written.append(path)
    return written


def plot_counterexample(path, gamma: float = 0.9, kappa: float = 1.0, r: float = 0.4, n: int = 400) -> Path:
    """J_AS(p) and J_AS-N(p) over the continue probability, with their maximisers marked."""
    ps = (np.arange(n) + 0.5) / n
    vals = np.array([oracle.counterexample_objectives(float(p), gamma, kappa, r) for p in ps])
    p_as, p_asn = oracle.counterexample_argmax(gamma, kappa, r)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ps, vals[:, 0], label="with living cost")
    ax.plot(ps, vals[:, 1], label="without living cost")
    for p, c in ((p_as, "C0"), (p_asn, "C1")):
        ax.axvline(p, color=c, ls=":", lw=1)
    ax.set_xlabel("continue probability p")
    ax.set_ylabel("objective")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _save(fig, path)
    return path
