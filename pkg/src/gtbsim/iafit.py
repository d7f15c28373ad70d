"""Inequity-aversion coefficient fitting from logged reward traces.

The model regresses each agent's recorded reward on its temporally smoothed
trace minus alpha- and beta-weighted disadvantage/advantage gaps against the
other agents' smoothed traces.  (alpha, beta) are searched over a fixed grid
by exhaustive enumeration of the (quadratic) objective.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# open intervals 0 < alpha < 5 and 0 < beta < 1 discretized by 0.5 / 0.1;
# inclusive=True widens to the closed endpoints
DEFAULT_ALPHA_GRID = tuple(0.5 * k for k in range(1, 10))
DEFAULT_BETA_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))


def alpha_grid(inclusive: bool = False):
    if inclusive:
        return tuple(0.5 * k for k in range(0, 11))
    return DEFAULT_ALPHA_GRID


def beta_grid(inclusive: bool = False):
    if inclusive:
        return tuple(round(0.1 * k, 10) for k in range(0, 11))
    return DEFAULT_BETA_GRID


def smooth(traces, gamma: float, lam: float) -> np.ndarray:
    """Exponentially decayed reward traces: e[0] = r[0], e[t] = g*l*e[t-1] + r[t].

    Accepts a (T,) series or an (N, T) matrix; smoothing runs along time.
    """
    r = np.asarray(traces, dtype=np.float64)
    if r.size == 0:
        raise ValueError("smooth needs a nonempty trace")
    single = r.ndim == 1
    if single:
        r = r[None, :]
    e = np.empty_like(r)
    e[:, 0] = r[:, 0]
    decay = gamma * lam
    for t in range(1, r.shape[1]):
        e[:, t] = decay * e[:, t - 1] + r[:, t]
    return e[0] if single else e


def inequity_terms(e: np.ndarray, i: int):
    """Disadvantage and advantage sums for agent i from smoothed traces.

    D[t] = 1/(N-1) * sum_j max(e_j - e_i, 0), A[t] likewise for e_i - e_j.
    """
    n = e.shape[0]
    if n < 2:
        raise ValueError("need at least 2 agents")
    gap = e - e[i]  # (N, T)
    others = np.arange(n) != i
    disadvantage = np.maximum(gap[others], 0.0).sum(axis=0) / (n - 1)
    advantage = np.maximum(-gap[others], 0.0).sum(axis=0) / (n - 1)
    return disadvantage, advantage


def synth_subjective(base, alpha: float, beta: float, gamma: float, lam: float) -> np.ndarray:
    """Subjective rewards: each agent's raw reward minus alpha-weighted
    disadvantageous and beta-weighted advantageous gaps of smoothed traces."""
    r = np.asarray(base, dtype=np.float64)
    e = smooth(r, gamma, lam)
    u = np.empty_like(r)
    for i in range(r.shape[0]):
        d, a = inequity_terms(e, i)
        u[i] = r[i] - alpha * d - beta * a
    return u


def predict(e: np.ndarray, i: int, alpha: float, beta: float) -> np.ndarray:
    """Model-implied reward for agent i given smoothed traces."""
    d, a = inequity_terms(e, i)
    return e[i] - alpha * d - beta * a


@dataclass
class IAFitResult:
    agent: int
    alpha: float
    beta: float
    residual: float
    identifiable: bool
    window: tuple | None = None  # (start, stop) when fitted on a slice


def fit(all_rewards, agent: int, gamma: float = 0.99, lam: float = 0.5,
        alphas=DEFAULT_ALPHA_GRID, betas=DEFAULT_BETA_GRID,
        target_rewards=None) -> IAFitResult:
    """Grid-search (alpha, beta) minimizing the squared residual between the
    target reward series and the model prediction.

    Smoothed traces and inequity terms come from all_rewards; the regression
    target defaults to the agent's own row but may be supplied separately
    (e.g. when validating against synthetically generated rewards).  Ties
    break toward the smallest alpha, then smallest beta.  When both inequity
    regressors vanish the fit is flagged unidentifiable and the tie-break
    values are returned.
    """
    r = np.asarray(all_rewards, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 2 or r.shape[1] < 2:
        raise ValueError("need at least 2 agents and 2 time-steps")
    e = smooth(r, gamma, lam)
    d, a = inequity_terms(e, agent)
    target = r[agent] if target_rewards is None else np.asarray(target_rewards, dtype=np.float64)
    if target.shape != (r.shape[1],):
        raise ValueError("target_rewards length must match the trace length")
    c = target - e[agent]

    identifiable = bool((d != 0).any() or (a != 0).any())
    # SSE(alpha, beta) expands into fixed inner products; O(1) per grid point
    s_cc = float(c @ c)
    s_cd = float(c @ d)
    s_ca = float(c @ a)
    s_dd = float(d @ d)
    s_da = float(d @ a)
    s_aa = float(a @ a)

    best = None
    for alpha in alphas:
        for beta in betas:
            sse = (s_cc + 2 * alpha * s_cd + 2 * beta * s_ca
                   + alpha * alpha * s_dd + 2 * alpha * beta * s_da + beta * beta * s_aa)
            key = (sse, alpha, beta)
            if best is None or key < best:
                best = key
    sse, alpha, beta = best
    return IAFitResult(agent, alpha, beta, max(sse, 0.0), identifiable)


def fit_all(all_rewards, gamma: float = 0.99, lam: float = 0.5,
            alphas=DEFAULT_ALPHA_GRID, betas=DEFAULT_BETA_GRID,
            window: int | None = None, stride: int | None = None):
    """Fit every agent; optionally over sliding windows of the episode."""
    r = np.asarray(all_rewards, dtype=np.float64)
    n, t = r.shape
    results = []
    if window is None:
        for i in range(n):
            results.append(fit(r, i, gamma, lam, alphas, betas))
        return results
    stride = stride or window
    for start in range(0, t - window + 1, stride):
        chunk = r[:, start:start + window]
        for i in range(n):
            res = fit(chunk, i, gamma, lam, alphas, betas)
            res.window = (start, start + window)
            results.append(res)
    return results


def read_reward_csv(path: str) -> np.ndarray:
    """Load a (t, agent_id, reward) CSV into an (N, T) matrix.

    Raises ValueError naming the offending agent when series are ragged.
    """
    series: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t", "agent_id", "reward"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"reward CSV must have columns {sorted(required)}")
        for row in reader:
            series.setdefault(int(row["agent_id"]), []).append(
                (int(row["t"]), float(row["reward"])))
    if not series:
        raise ValueError("reward CSV contains no rows")
    lengths = {aid: len(v) for aid, v in series.items()}
    t_len = max(lengths.values())
    for aid, ln in sorted(lengths.items()):
        if ln != t_len:
            raise ValueError(f"ragged reward series for agent {aid}: {ln} != {t_len}")
    agents = sorted(series)
    out = np.zeros((len(agents), t_len))
    for k, aid in enumerate(agents):
        out[k, :] = [v for _, v in sorted(series[aid])]
    return out


def write_fit_csv(path: str, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "alpha", "beta", "residual", "identifiable",
                         "window_start", "window_stop"])
        for res in results:
            start, stop = res.window if res.window else ("", "")
            writer.writerow([res.agent, res.alpha, res.beta,
                             f"{res.residual:.12g}", int(res.identifiable), start, stop])
