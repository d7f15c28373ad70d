"""Taxation, redistribution, Borda voting, and revenue investment.

Coins are integers.  The marginal tax formula is evaluated exactly in
floats; the amount actually collected from an agent is floored to a whole
coin and capped at the agent's liquid coin, and redistribution hands out
floor(revenue / N) to everyone plus one remainder coin to the lowest agent
ids, so the economy is closed to the coin (sum of deltas is exactly zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .config import ConfigError
from .world import MATERIALS, N_MATERIALS

# all 24 ballots: tuples of material indices from most to least preferred
BALLOTS = tuple(permutations(range(N_MATERIALS)))

FULL_LIBERTARIAN = "full_libertarian"
SEMI = "semi_libertarian_utilitarian"
FULL_UTILITARIAN = "full_utilitarian"

# positional weights of a ranking: 1st..4th place -> (3, 2, 1, 0) / 6
POSITION_WEIGHTS = (3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, 0.0)
UNIFORM_WEIGHTS = (0.25, 0.25, 0.25, 0.25)


@dataclass
class TaxSchedule:
    """Seven ascending bracket cutoffs (first 0, implicit +inf top) and
    seven marginal rates in [0, 1]."""

    cutoffs: tuple
    rates: tuple

    def __post_init__(self):
        self.cutoffs = tuple(self.cutoffs)
        self.rates = tuple(self.rates)
        if len(self.cutoffs) != len(self.rates):
            raise ConfigError("cutoffs and rates must have equal length")
        if not self.cutoffs or self.cutoffs[0] != 0:
            raise ConfigError("first bracket cutoff must be 0")
        if list(self.cutoffs) != sorted(self.cutoffs):
            raise ConfigError("bracket cutoffs must be ascending")
        if len(set(self.cutoffs)) != len(self.cutoffs):
            raise ConfigError("bracket cutoffs must be strictly ascending")
        if any(r < 0 or r > 1 for r in self.rates):
            raise ConfigError("marginal rates must lie in [0, 1]")


def compute_tax(z: float, schedule: TaxSchedule) -> float:
    """Payable tax on income z under bracketed marginal rates."""
    if z < 0:
        raise ValueError("income must be nonnegative")
    cuts = schedule.cutoffs
    total = 0.0
    for j, rate in enumerate(schedule.rates):
        lo = cuts[j]
        hi = cuts[j + 1] if j + 1 < len(cuts) else float("inf")
        if z > hi:
            total += rate * (hi - lo)
        elif lo < z <= hi:
            total += rate * (z - lo)
    return total


def marginal_rate_at(z: float, schedule: TaxSchedule) -> float:
    """Marginal rate applying at income z (z=0 falls in the first bracket)."""
    cuts = schedule.cutoffs
    for j in range(len(cuts) - 1, -1, -1):
        if z > cuts[j] or j == 0:
            return schedule.rates[j]
    return schedule.rates[0]


@dataclass
class TaxPeriodOutcome:
    period: int
    incomes: list          # pretax income z_i (coin change since period start)
    taxes: list            # whole coins collected per agent
    deltas: list           # net coin change per agent from settlement
    revenue: int
    borda_scores: list = field(default_factory=list)
    regen_deltas: list = field(default_factory=list)


def settle_period(agents, schedule: TaxSchedule, period: int,
                  mode: str = "redistribute") -> TaxPeriodOutcome:
    """Collect taxes on the period's income and redistribute the revenue.

    In "redistribute" mode the sum of coin deltas is exactly zero; in
    "sink" mode collected coins leave the economy.
    """
    incomes, taxes = [], []
    for agent in agents:
        z = max(0, agent.coin + agent.escrow_coin - agent.period_start_coin)
        t = int(compute_tax(z, schedule))
        t = min(t, agent.coin)  # never drive liquid coin negative
        incomes.append(z)
        taxes.append(t)
    revenue = sum(taxes)
    n = len(agents)
    deltas = [-t for t in taxes]
    if mode == "redistribute":
        share, remainder = divmod(revenue, n)
        for i in range(n):
            deltas[i] += share + (1 if i < remainder else 0)
    for agent, d in zip(agents, deltas):
        agent.coin += d
    return TaxPeriodOutcome(period, incomes, taxes, deltas, revenue)


def borda_count(ballots):
    """Positional tally: a ballot awards 3,2,1,0 points to its ranked
    materials.  Returns (ranking, scores) with ties broken by the fixed
    material order wood < stone < iron < soil.
    """
    if not ballots:
        raise ValueError("borda_count needs at least one ballot")
    scores = [0] * N_MATERIALS
    for ballot in ballots:
        for pos, material in enumerate(ballot):
            scores[material] += 3 - pos
    ranking = tuple(sorted(range(N_MATERIALS), key=lambda m: (-scores[m], m)))
    return ranking, scores


def ranking_weights(ranking) -> np.ndarray:
    """Material weights (3,2,1,0)/6 induced by a ranking."""
    w = np.zeros(N_MATERIALS)
    for pos, material in enumerate(ranking):
        w[material] = POSITION_WEIGHTS[pos]
    return w


def invest(taxes_by_agent, system: str, ballots_by_agent, planner_ranking,
           world, kappa: float, regen_max: float) -> np.ndarray:
    """Turn tax revenue into per-material regeneration-rate deltas.

    Full-Libertarian splits each agent's paid tax by its own ballot;
    Semi splits the total by the Borda aggregate ranking; Full-Utilitarian
    splits the total by the planner's ranking.  Rates are clipped to
    [0, regen_max] in place on the world.
    """
    invested = np.zeros(N_MATERIALS)
    if system == FULL_LIBERTARIAN:
        for tax, ballot in zip(taxes_by_agent, ballots_by_agent):
            w = ranking_weights(ballot) if ballot is not None else np.asarray(UNIFORM_WEIGHTS)
            invested += tax * w
    elif system == SEMI:
        cast = [b for b in ballots_by_agent if b is not None]
        if cast:
            ranking, _ = borda_count(cast)
            w = ranking_weights(ranking)
        else:
            w = np.asarray(UNIFORM_WEIGHTS)
        invested = sum(taxes_by_agent) * w
    elif system == FULL_UTILITARIAN:
        w = (ranking_weights(planner_ranking) if planner_ranking is not None
             else np.asarray(UNIFORM_WEIGHTS))
        invested = sum(taxes_by_agent) * w
    else:
        raise ConfigError(f"unknown governing system: {system!r}")
    old = world.material_regen.copy()
    world.material_regen = np.clip(old + kappa * invested, 0.0, regen_max)
    return world.material_regen - old
