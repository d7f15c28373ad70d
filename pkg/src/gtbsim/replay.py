"""Replay verification: re-derive metrics, alignment, and rewards from a
logged episode and check them bit-for-bit against the recorded values."""

from __future__ import annotations

from . import language, metrics
from .engine import utility
from .logio import EpisodeLog


class ReplayMismatch(Exception):
    def __init__(self, step: int, field: str, recorded, derived):
        self.step = step
        self.field = field
        super().__init__(
            f"step {step}: {field} mismatch: recorded {recorded!r}, derived {derived!r}")


def _check(step_t: int, field: str, recorded, derived):
    if recorded != derived:
        raise ReplayMismatch(step_t, field, recorded, derived)


def verify(log: EpisodeLog) -> int:
    """Verify a log; returns the number of steps checked.

    Raises ReplayMismatch at the first divergent step.
    """
    cfg = log.header["config"]
    eta, floor = cfg["eta"], cfg["coin_floor"]
    objective = cfg["objective"]
    u_prev = log.summary["u0"]
    swf_prev = log.summary["swf0"]

    period_totals = {}
    for p in log.periods:
        if cfg["revenue_mode"] == "redistribute" and sum(p["deltas"]) != 0:
            raise ReplayMismatch((p["period"] + 1) * cfg["tax_period"] - 1,
                                 "sum(deltas)", 0, sum(p["deltas"]))
        period_totals[(p["period"] + 1) * cfg["tax_period"] - 1] = p["coin_total_after"]

    for step in log.steps:
        t = step["t"]
        coins = step["coin"]
        utils = [utility(c, l, eta, floor) for c, l in zip(coins, step["labor"])]
        _check(t, "utilities", step["utilities"], utils)
        rewards = [u - p for u, p in zip(utils, u_prev)]
        _check(t, "rewards", step["rewards"], rewards)
        u_prev = utils

        if objective == "inverse_income":
            swf = metrics.swf_inverse_income(utils, coins, floor)
        else:
            swf = metrics.swf_eq_prod(coins)
        _check(t, "swf", step["swf"], swf)
        _check(t, "planner_reward", step["planner_reward"], swf - swf_prev)
        swf_prev = swf

        align = language.population_alignment(step["languages"])
        _check(t, "alignment", step["alignment"], align)
        snap = metrics.snapshot(coins, utils, floor)
        for key, value in snap.items():
            _check(t, f"metrics.{key}", step["metrics"][key], value)

        if t in period_totals:
            _check(t, "coin_total_after", period_totals[t], sum(coins))
    return len(log.steps)
