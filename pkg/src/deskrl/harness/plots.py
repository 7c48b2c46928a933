"""Plot-data CSV emission plus rendered matplotlib figures.

Every report is written twice: a delimited file for downstream tooling and a
PNG next to it. Learning curves carry pointwise bootstrap CI columns across
seeds; the cosine file has exactly two network sections (actor, critic).
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from deskrl.errors import ContractViolation
from deskrl.harness.evaluate import LAST_EPOCHS, bootstrap_ci
from deskrl.harness.records import RunRecord, method_label

CURVE_HEADER = ("suite,method,epoch,env_steps,wall_clock_s,"
                "sr,sr_lo,sr_hi,reward,reward_lo,reward_hi,"
                "progress,progress_lo,progress_hi\n")
COSINE_HEADER = "network,epoch,mean,min,max\n"
TASKS_HEADER = "suite,method,task_id,sr,reward,progress\n"


def _group(records):
    groups = defaultdict(list)
    for rec in records:
        groups[(rec.config["suite"], method_label(rec.config))].append(rec)
    return dict(sorted(groups.items()))


def _pointwise(recs, metric, epoch, rng):
    vals = [r.epochs[epoch][metric] for r in recs]
    if len(vals) == 1:
        return vals[0], vals[0], vals[0]
    lo, point, hi = bootstrap_ci(vals, rng)
    return point, lo, hi


def emit_curves_csv(path, records, rng):
    groups = _group(records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CURVE_HEADER)
        for (suite, method), recs in groups.items():
            n_epochs = min(r.num_epochs for r in recs)
            for ep in range(n_epochs):
                env_steps = recs[0].epochs[ep]["env_steps"]
                wall = np.mean([
                    sum(r.wall_clock[: ep + 1]) if r.wall_clock else 0.0 for r in recs
                ])
                cells = [suite, method, str(ep), str(env_steps), f"{wall:.3f}"]
                for metric in ("sr", "reward", "progress"):
                    point, lo, hi = _pointwise(recs, metric, ep, rng)
                    cells += [f"{point:.6f}", f"{lo:.6f}", f"{hi:.6f}"]
                fh.write(",".join(cells) + "\n")


def emit_cosine_csv(path, record: RunRecord):
    """Two sections, actor then critic, one row per epoch that logged stats."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(COSINE_HEADER)
        for network in ("actor", "critic"):
            for ep in record.epochs:
                cos = ep.get("cosine")
                if not cos or network not in cos or cos[network].get("mean") is None:
                    continue
                s = cos[network]
                fh.write(f"{network},{ep['epoch']},{s['mean']:.6f},{s['min']:.6f},{s['max']:.6f}\n")


def emit_tasks_csv(path, records):
    groups = _group(records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TASKS_HEADER)
        for (suite, method), recs in groups.items():
            num_tasks = len(recs[0].epochs[-1]["per_task"]["sr"])
            for k in range(num_tasks):
                cells = [suite, method, str(k)]
                for metric in ("sr", "reward", "progress"):
                    vals = []
                    for r in recs:
                        window = r.epochs[-LAST_EPOCHS:]
                        vals.append(np.mean([ep["per_task"][metric][k] for ep in window]))
                    cells.append(f"{np.mean(vals):.6f}")
                fh.write(",".join(cells) + "\n")


def render_curves_png(path, records, rng):
    groups = _group(records)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for (suite, method), recs in groups.items():
        n_epochs = min(r.num_epochs for r in recs)
        steps = [recs[0].epochs[ep]["env_steps"] for ep in range(n_epochs)]
        for ax, metric in zip(axes, ("sr", "progress")):
            pts, los, his = [], [], []
            for ep in range(n_epochs):
                p, lo, hi = _pointwise(recs, metric, ep, rng)
                pts.append(p)
                los.append(lo)
                his.append(hi)
            (line,) = ax.plot(steps, pts, label=f"{suite} {method}")
            ax.fill_between(steps, los, his, alpha=0.2, color=line.get_color())
    axes[0].set_ylabel("success rate")
    axes[1].set_ylabel("progress")
    for ax in axes:
        ax.set_xlabel("env steps")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cosine_png(path, record: RunRecord):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, network in zip(axes, ("actor", "critic")):
        epochs, means, mins, maxs = [], [], [], []
        for ep in record.epochs:
            cos = ep.get("cosine")
            if not cos or network not in cos or cos[network].get("mean") is None:
                continue
            epochs.append(ep["epoch"])
            means.append(cos[network]["mean"])
            mins.append(cos[network]["min"])
            maxs.append(cos[network]["max"])
        if epochs:
            ax.plot(epochs, means)
            ax.fill_between(epochs, mins, maxs, alpha=0.25)
        ax.set_title(f"{network} gradient cosine")
        ax.set_xlabel("epoch")
    axes[0].set_ylabel("pairwise cosine similarity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_plots(records: list[RunRecord], out_dir: str, seed: int = 0) -> dict:
    """Write curves/cosine/tasks CSVs and matching PNG figures; returns paths."""
    if not records:
        raise ContractViolation("emit_plots needs at least one run record")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = {}
    paths["curves_csv"] = os.path.join(out_dir, "curves.csv")
    emit_curves_csv(paths["curves_csv"], records, rng)
    paths["tasks_csv"] = os.path.join(out_dir, "tasks.csv")
    emit_tasks_csv(paths["tasks_csv"], records)
    paths["curves_png"] = os.path.join(out_dir, "learning_curves.png")
    render_curves_png(paths["curves_png"], records, np.random.default_rng(seed))
    cosine_rec = next(
        (r for r in records if any(ep.get("cosine") for ep in r.epochs)), None
    )
    if cosine_rec is not None:
        paths["cosine_csv"] = os.path.join(out_dir, "cosine.csv")
        emit_cosine_csv(paths["cosine_csv"], cosine_rec)
        paths["cosine_png"] = os.path.join(out_dir, "cosine.png")
        render_cosine_png(paths["cosine_png"], cosine_rec)
    return paths
