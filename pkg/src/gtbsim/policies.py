"""Scripted and baseline policies for agents and the planner.

All policies satisfy the same handle: act(observation, rng) -> action.
They exist to exercise the environment deterministically; none of them
claims to reproduce trained behaviour.
"""

from __future__ import annotations

import numpy as np

from .config import ConfigError
from .engine import (A_NOOP, N_ACTIONS, build_together_action)
from .world import BLUE, RED

# -- agent policies ----------------------------------------------------------


class NoOpPolicy:
    def act(self, obs, rng) -> int:
        return A_NOOP


class RandomPolicy:
    """Uniform over the unmasked actions."""

    def act(self, obs, rng) -> int:
        allowed = np.flatnonzero(obs["action_mask"])
        return int(allowed[rng.integers(len(allowed))])


class AlwaysTeachPolicy:
    """Teachers attempt a joint build every step, switching house colour when
    an attempt stops paying (no more letters to correct on that recipe);
    students and communication-variant agents stay idle.

    Starting with blue exploits the correction rule (lowest misaligned letter
    over all four) so a fully misaligned partner is fixed letter-by-letter
    without wasted attempts.
    """

    def __init__(self):
        self.house = BLUE
        self.prev_coin = None

    def act(self, obs, rng) -> int:
        if obs["role"] != "teacher":
            return A_NOOP
        action = build_together_action(self.house)
        if not obs["action_mask"][action]:
            return A_NOOP
        if self.prev_coin is not None and obs["coin"] <= self.prev_coin:
            # last attempt earned nothing: recipe letters already aligned
            self.house = RED if self.house == BLUE else BLUE
            action = build_together_action(self.house)
        self.prev_coin = obs["coin"]
        return action


class SoftmaxLearner:
    """Stateless softmax over per-action scores nudged by reward deltas.

    A minimal interface-exercising baseline, not a training algorithm.
    """

    def __init__(self, step_size: float = 0.1, temperature: float = 1.0):
        self.scores = np.zeros(N_ACTIONS)
        self.step_size = step_size
        self.temperature = temperature
        self._last_action = None
        self._last_coin = None

    def act(self, obs, rng) -> int:
        if self._last_action is not None and self._last_coin is not None:
            delta = obs["coin"] - self._last_coin
            self.scores[self._last_action] += self.step_size * delta
        mask = obs["action_mask"]
        logits = self.scores / self.temperature
        logits = np.where(mask, logits, -np.inf)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        action = int(rng.choice(N_ACTIONS, p=probs))
        self._last_action = action
        self._last_coin = obs["coin"]
        return action


# -- planner policies --------------------------------------------------------


class FlatTaxPlanner:
    """A single marginal rate for every bracket, fixed over the episode."""

    def __init__(self, rate: float = 0.1, ranking=None):
        self.rate = rate
        self.ranking = ranking

    def act(self, obs, rng) -> dict:
        return {"rates": (self.rate,) * 7, "ranking": self.ranking}


class SchedulePlanner:
    """Cycles through a configured list of 7-rate schedules, one per period."""

    def __init__(self, schedules, rankings=None):
        if not schedules:
            raise ConfigError("SchedulePlanner needs at least one schedule")
        self.schedules = [tuple(s) for s in schedules]
        self.rankings = rankings
        self._k = 0

    def act(self, obs, rng) -> dict:
        rates = self.schedules[self._k % len(self.schedules)]
        ranking = None
        if self.rankings:
            ranking = self.rankings[self._k % len(self.rankings)]
        self._k += 1
        return {"rates": rates, "ranking": ranking}


class RoundRobinRankingPlanner:
    """Flat rate with a material ranking rotating one slot each period."""

    def __init__(self, rate: float = 0.1):
        self.rate = rate
        self._ranking = [0, 1, 2, 3]

    def act(self, obs, rng) -> dict:
        ranking = tuple(self._ranking)
        self._ranking = self._ranking[1:] + self._ranking[:1]
        return {"rates": (self.rate,) * 7, "ranking": ranking}


class RandomTaxPlanner:
    """Rates drawn uniformly from the discrete grid, ranking random."""

    def act(self, obs, rng) -> dict:
        grid = obs["rate_grid"]
        rates = tuple(grid[int(k)] for k in rng.integers(len(grid), size=7))
        ranking = tuple(int(v) for v in rng.permutation(4))
        return {"rates": rates, "ranking": ranking}
