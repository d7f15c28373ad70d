"""Delimited exports and figure rendering for episode logs and sweeps.

Every report is derived purely from logged records, so a report can be
regenerated from an episode.jsonl alone.  Figures are rendered with the
Agg backend next to the CSVs they visualize.
"""

from __future__ import annotations

import csv
import os
from itertools import combinations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import language, metrics
from .logio import EpisodeLog
from .world import MATERIALS

METRIC_KEYS = ("eq", "gini", "prod", "maximin", "swf_inverse_income", "swf_eq_times_prod")


# -- per-run CSVs ------------------------------------------------------------

def write_metrics_csv(log: EpisodeLog, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", *METRIC_KEYS])
        for step in log.steps:
            writer.writerow([step["t"]] + [repr(step["metrics"][k]) for k in METRIC_KEYS])


def write_alignment_csv(log: EpisodeLog, path: str) -> None:
    n = len(log.steps[0]["languages"])
    pairs = list(combinations(range(n), 2))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "population_alignment"]
                        + [f"pair_{i}_{j}" for i, j in pairs])
        for step in log.steps:
            langs = step["languages"]
            row = [step["t"], repr(step["alignment"])]
            row += [language.pair_alignment(langs[i], langs[j]) for i, j in pairs]
            writer.writerow(row)


def write_trades_csv(log: EpisodeLog, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "material", "price", "buyer", "seller"])
        for step in log.steps:
            for tr in step["trades"]:
                writer.writerow([step["t"], tr["material"], tr["price"],
                                 tr["buyer"], tr["seller"]])


def write_tax_periods_csv(log: EpisodeLog, path: str) -> None:
    n = len(log.steps[0]["coin"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["period", "revenue"]
        header += [f"z_{i}" for i in range(n)]
        header += [f"tax_{i}" for i in range(n)]
        header += [f"delta_{i}" for i in range(n)]
        header += [f"borda_{m}" for m in MATERIALS]
        header += [f"regen_delta_{m}" for m in MATERIALS]
        writer.writerow(header)
        for p in log.periods:
            borda = p["borda_scores"] or [""] * 4
            row = [p["period"], p["revenue"], *p["incomes"], *p["taxes"], *p["deltas"],
                   *borda, *[repr(d) for d in p["regen_deltas"]]]
            writer.writerow(row)


def write_run_outputs(log: EpisodeLog, outdir: str, plots: bool = True) -> list:
    """Write episode.jsonl plus all CSV reports (and figures) for one run."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    def emit(name, fn):
        path = os.path.join(outdir, name)
        # keep the extension so matplotlib can infer the format
        tmp = os.path.join(outdir, ".tmp." + name)
        fn(tmp)
        os.replace(tmp, path)
        written.append(path)

    emit("episode.jsonl", log.write)
    emit("metrics.csv", lambda p: write_metrics_csv(log, p))
    emit("alignment.csv", lambda p: write_alignment_csv(log, p))
    emit("trades.csv", lambda p: write_trades_csv(log, p))
    emit("tax_periods.csv", lambda p: write_tax_periods_csv(log, p))
    if plots:
        emit("alignment.png", lambda p: plot_alignment(log, p))
        emit("metrics.png", lambda p: plot_metrics(log, p))
        emit("budgets.png", lambda p: plot_budgets(log, p))
        emit("trades.png", lambda p: plot_trades(log, p))
        emit("votes.png", lambda p: plot_votes(log, p))
    return written


# -- figures -----------------------------------------------------------------

def plot_alignment(log: EpisodeLog, path: str) -> None:
    ts = [s["t"] for s in log.steps]
    align = [s["alignment"] for s in log.steps]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ts, align)
    ax.set_xlabel("step")
    ax.set_ylabel("population alignment")
    ax.set_ylim(-0.1, 4.1)
    ax.axhline(4.0, color="grey", lw=0.8, ls="--")
    ax.set_title("Language alignment across the episode")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metrics(log: EpisodeLog, path: str) -> None:
    ts = [s["t"] for s in log.steps]
    fig, axes = plt.subplots(2, 3, figsize=(12, 6))
    for ax, key in zip(axes.flat, METRIC_KEYS):
        ax.plot(ts, [s["metrics"][key] for s in log.steps])
        ax.set_title(key)
        ax.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_budgets(log: EpisodeLog, path: str) -> None:
    ts = [s["t"] for s in log.steps]
    coins = np.array([s["coin"] for s in log.steps])
    labor = np.array([s["labor"] for s in log.steps])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for i in range(coins.shape[1]):
        ax1.plot(ts, coins[:, i], label=f"agent {i}")
        ax2.plot(ts, labor[:, i])
    ax1.set_title("coin")
    ax2.set_title("labor")
    for ax in (ax1, ax2):
        ax.set_xlabel("step")
    ax1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trades(log: EpisodeLog, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in MATERIALS:
        xs = [s["t"] for s in log.steps for tr in s["trades"] if tr["material"] == m]
        ys = [tr["price"] for s in log.steps for tr in s["trades"] if tr["material"] == m]
        if xs:
            ax.scatter(xs, ys, s=8, label=m, alpha=0.6)
    ax.set_xlabel("step")
    ax.set_ylabel("trade price")
    ax.set_ylim(-0.5, 10.5)
    if ax.collections:
        ax.legend(fontsize=8)
    ax.set_title("Trades")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_votes(log: EpisodeLog, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    periods = [p["period"] for p in log.periods]
    for k, m in enumerate(MATERIALS):
        scores = [p["borda_scores"][k] if p["borda_scores"] else 0 for p in log.periods]
        ax.plot(periods, scores, marker="o", label=m)
    ax.set_xlabel("tax period")
    ax.set_ylabel("Borda score")
    ax.legend(fontsize=8)
    ax.set_title("Counted votes per period")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fits(results, path: str) -> None:
    agents = sorted({r.agent for r in results})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for aid in agents:
        rows = [r for r in results if r.agent == aid]
        xs = [r.window[0] if r.window else 0 for r in rows]
        ax1.plot(xs, [r.alpha for r in rows], marker="o", label=f"agent {aid}")
        ax2.plot(xs, [r.beta for r in rows], marker="o")
    ax1.set_title("alpha (disadvantageous)")
    ax2.set_title("beta (advantageous)")
    for ax in (ax1, ax2):
        ax.set_xlabel("window start")
    ax1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- sweep pooling -----------------------------------------------------------

def condition_key(run: dict) -> tuple:
    return (run["variant"], run["system"], run["objective"])


def pooled_summary(runs: list) -> list:
    """Per-condition means of endpoint quantities across seeds."""
    buckets: dict[tuple, list] = {}
    for run in runs:
        buckets.setdefault(condition_key(run), []).append(run)
    rows = []
    for key in sorted(buckets):
        group = buckets[key]
        final = {k: float(np.mean([r["final_metrics"][k] for r in group]))
                 for k in METRIC_KEYS}
        rows.append({
            "variant": key[0], "system": key[1], "objective": key[2],
            "runs": len(group),
            "final_alignment": float(np.mean([r["final_alignment"] for r in group])),
            **{f"final_{k}": v for k, v in final.items()},
        })
    return rows


def correlation_report(runs: list) -> list:
    """Alignment-vs-metric Pearson r per condition.

    Emitted in both modes: per-step series (pooled across a condition's
    runs) and per-episode endpoints across runs.
    """
    buckets: dict[tuple, list] = {}
    for run in runs:
        buckets.setdefault(condition_key(run), []).append(run)
    rows = []
    for key in sorted(buckets):
        group = buckets[key]
        align_series = np.concatenate([r["alignment_series"] for r in group])
        for metric in METRIC_KEYS:
            series = np.concatenate([r["metric_series"][metric] for r in group])
            r_step = metrics.correlate(align_series, series) if len(series) >= 3 else None
            ends_a = [r["final_alignment"] for r in group]
            ends_m = [r["final_metrics"][metric] for r in group]
            r_end = (metrics.correlate(ends_a, ends_m) if len(group) >= 3 else None)
            rows.append({"variant": key[0], "system": key[1], "objective": key[2],
                         "metric": metric, "mode": "per_step",
                         "pearson_r": "" if r_step is None else repr(r_step)})
            rows.append({"variant": key[0], "system": key[1], "objective": key[2],
                         "metric": metric, "mode": "per_episode",
                         "pearson_r": "" if r_end is None else repr(r_end)})
    return rows


def run_digest(log: EpisodeLog, variant: str, system: str, objective: str) -> dict:
    """Small per-run record feeding pooled summaries and correlations."""
    return {
        "variant": variant, "system": system, "objective": objective,
        "final_alignment": log.steps[-1]["alignment"],
        "final_metrics": dict(log.steps[-1]["metrics"]),
        "alignment_series": np.array([s["alignment"] for s in log.steps]),
        "metric_series": {k: np.array([s["metrics"][k] for s in log.steps])
                          for k in METRIC_KEYS},
    }


def write_dict_csv(path: str, rows: list) -> None:
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def plot_correlations(runs: list, path: str) -> None:
    """Endpoint scatter of alignment vs each metric, all conditions."""
    fig, axes = plt.subplots(2, 3, figsize=(13, 7))
    conditions = sorted({condition_key(r) for r in runs})
    for ax, metric in zip(axes.flat, METRIC_KEYS):
        for key in conditions:
            group = [r for r in runs if condition_key(r) == key]
            xs = [r["final_alignment"] for r in group]
            ys = [r["final_metrics"][metric] for r in group]
            ax.scatter(xs, ys, s=18, label="/".join(key), alpha=0.7)
        ax.set_xlabel("final alignment")
        ax.set_title(metric)
    axes.flat[0].legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
