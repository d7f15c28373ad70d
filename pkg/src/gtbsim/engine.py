"""Episode orchestration: action space, masks, observations, stepping,
rewards, and logging.

Step phase order: (1) moves and gathers in agent-id order, (2) order
expiry then submission/matching, (3) builds and joint-build attempts,
(4) votes, (5) regeneration, (6) at tax-period boundaries: taxes,
redistribution, investment, and the planner's next schedule.
"""

from __future__ import annotations

import numpy as np

from . import fiscal, language, metrics
from .agents import PLAIN, STUDENT, TEACHER, AgentState
from .config import ConfigError, EpisodeConfig
from .fiscal import BALLOTS, FULL_UTILITARIAN, TaxSchedule
from .logio import EpisodeLog
from .market import ASK, BID, N_PRICES, OrderBook
from .world import (BLUE, HOUSE_RECIPES, MATERIALS, N_MATERIALS, RED,
                    GridWorld, init_world)

# ---------------------------------------------------------------------------
# action space: 1 no-op + 4 moves + 88 trades + 2 build-alone
# + 2 build-together + 24 votes = 121 (the teaching masks cut it to 119)

A_NOOP = 0
A_MOVE = 1                      # 1..4: up, down, left, right
A_TRADE = 5                     # 5..92: material * 22 + side * 11 + price
A_BUILD_ALONE = 93              # 93 red, 94 blue
A_BUILD_TOGETHER = 95           # 95 red, 96 blue
A_VOTE = 97                     # 97..120: ballot permutations
N_ACTIONS = 121

MOVE_NAMES = ("up", "down", "left", "right")


def trade_action(material: int, side: int, price: int) -> int:
    return A_TRADE + material * 22 + side * N_PRICES + price

def decode_trade(action: int):
    k = action - A_TRADE
    return k // 22, (k % 22) // N_PRICES, k % N_PRICES

def vote_action(ballot_index: int) -> int:
    return A_VOTE + ballot_index

def build_alone_action(house_type: int) -> int:
    return A_BUILD_ALONE + house_type

def build_together_action(house_type: int) -> int:
    return A_BUILD_TOGETHER + house_type


# ---------------------------------------------------------------------------
# utilities and rewards

def utility(coin: float, labor: float, eta: float, coin_floor: float = 1e-6) -> float:
    """Isoelastic coin utility minus accumulated labor."""
    if eta <= 0 or eta == 1.0:
        raise ConfigError("eta must be positive and != 1")
    c = float(coin)
    if c <= 0.0 and eta > 1.0:
        c = coin_floor
    return (c ** (1.0 - eta) - 1.0) / (1.0 - eta) - labor


def agent_reward(u_now: float, u_prev: float) -> float:
    """Marginal utility between consecutive steps."""
    return u_now - u_prev


def planner_reward(swf_now: float, swf_prev: float) -> float:
    """Marginal social welfare between consecutive steps."""
    return swf_now - swf_prev


# ---------------------------------------------------------------------------

class Episode:
    """One seeded episode: a single-writer state machine over world, agents,
    order book, languages, and the fiscal cycle."""

    def __init__(self, config: EpisodeConfig, seed: int | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.world: GridWorld = init_world(config, self.seed)
        self.rng = self.world.rng                      # episode RNG stream
        skill_rng = np.random.default_rng([self.seed, 2])

        languages, roles = language.init_languages(config.variant, config.n_agents)
        self.agents: list[AgentState] = []
        for i in range(config.n_agents):
            x, y = self.world.agent_pos[i]
            alone = self._sample_build_skill(skill_rng)
            together = min(round(config.build_together_multiplier * alone),
                           config.build_together_cap)
            self.agents.append(AgentState(
                id=i, x=int(x), y=int(y), coin=config.initial_coin,
                build_skill_alone=alone, build_skill_together=together,
                gather_skill=config.gather_skill,
                language=languages[i], role=roles[i],
                period_start_coin=config.initial_coin,
            ))
        self.book = OrderBook({a.id: a for a in self.agents},
                              cap=config.order_cap, cap_scope=config.order_cap_scope,
                              expiry=config.order_expiry)
        self.schedule = TaxSchedule(config.bracket_cutoffs, config.initial_rates)
        self.planner_ranking = None
        self.ballots: list = [None] * config.n_agents
        self.prev_period_incomes: list = [0] * config.n_agents

        self.t = 0
        self.masked_replacements = 0
        self.joint_attempts = []     # (t, initiator, partner, house_type, outcome tag)
        self.corrections = 0

        self._u_prev = [self._utility(a) for a in self.agents]
        self._swf_prev = self._swf()
        self.log = EpisodeLog.fresh(config, self.seed)
        self.log.summary["u0"] = list(self._u_prev)
        self.log.summary["swf0"] = self._swf_prev

    # -- helpers ---------------------------------------------------------

    def _sample_build_skill(self, rng) -> int:
        cfg = self.config
        raw = cfg.build_skill_min * (1.0 + rng.pareto(cfg.build_skill_pareto_shape))
        return int(round(min(max(raw, cfg.build_skill_min), cfg.build_skill_max)))

    def _utility(self, agent: AgentState) -> float:
        return utility(agent.total_coin(), agent.labor, self.config.eta,
                       self.config.coin_floor)

    def _swf(self) -> float:
        coins = [a.total_coin() for a in self.agents]
        if self.config.objective == "inverse_income":
            utils = [self._utility(a) for a in self.agents]
            return metrics.swf_inverse_income(utils, coins, self.config.coin_floor)
        return metrics.swf_eq_prod(coins)

    # -- action masks -----------------------------------------------------

    def action_mask(self, agent_id: int) -> np.ndarray:
        agent = self.agents[agent_id]
        mask = np.zeros(N_ACTIONS, dtype=bool)
        mask[A_NOOP] = True
        mask[A_MOVE:A_MOVE + 4] = True                 # blocked moves still execute
        mask[A_VOTE:A_VOTE + 24] = True
        # trade sub-mask, laid out (material, side, price) to match the ids
        counts = self.book.open_counts[agent_id]
        if self.book.cap_scope == "per_material":
            cap_ok = np.repeat(counts.sum(axis=(1, 2))[:, None] < self.book.cap, 2, axis=1)
        else:
            cap_ok = counts.sum(axis=2) < self.book.cap
        tm = np.zeros((N_MATERIALS, 2, N_PRICES), dtype=bool)
        tm[:, BID, :] = cap_ok[:, BID, None] & (np.arange(N_PRICES) <= agent.coin)
        tm[:, ASK, :] = cap_ok[:, ASK, None] & (agent.inventory >= 1)[:, None]
        mask[A_TRADE:A_BUILD_ALONE] = tm.reshape(-1)
        teaching = self.config.variant == "teaching"
        if not (teaching and agent.role == TEACHER):
            for ht in (RED, BLUE):
                m1, m2 = HOUSE_RECIPES[ht]
                mask[build_alone_action(ht)] = bool(
                    agent.inventory[m1] >= 1 and agent.inventory[m2] >= 1
                    and self.world.buildable(agent.x, agent.y))
        if not (teaching and agent.role == STUDENT):
            has_partner = any(self._partner_eligible(agent_id, j)
                              for j in range(len(self.agents)) if j != agent_id)
            mask[A_BUILD_TOGETHER] = has_partner
            mask[A_BUILD_TOGETHER + 1] = has_partner
        return mask

    def _partner_eligible(self, initiator: int, partner: int) -> bool:
        if self.config.variant == "teaching":
            return (self.agents[initiator].role == TEACHER
                    and self.agents[partner].role == STUDENT)
        return True

    # -- observations -------------------------------------------------------

    OBS_WINDOW = 11

    def observe(self, agent_id: int, padded=None) -> dict:
        agent = self.agents[agent_id]
        if padded is None:
            padded = self._padded_layers()
        r = self.OBS_WINDOW // 2
        y, x = agent.y + r, agent.x + r  # offsets into padded arrays
        window = {name: layer[y - r:y + r + 1, x - r:x + r + 1].copy()
                  for name, layer in padded.items()}
        own = self.book.open_counts[agent_id]
        others = self.book.open_counts.sum(axis=0) - own
        return {
            "t": self.t,
            "action_mask": self.action_mask(agent_id),
            "position": (agent.x, agent.y),
            "spatial": window,
            "inventory": agent.inventory.copy(),
            "escrow_units": agent.escrow_units.copy(),
            "coin": agent.coin,
            "escrow_coin": agent.escrow_coin,
            "labor": agent.labor,
            "build_skill_alone": agent.build_skill_alone,
            "build_skill_together": agent.build_skill_together,
            "gather_skill": agent.gather_skill,
            "language": list(agent.language),
            "role": agent.role,
            "market": {
                "own_orders": own.copy(),
                "other_orders": others,
                "trade_counts": self.book.trade_counts.copy(),
                "avg_price": [self.book.average_trade_price(m) for m in range(N_MATERIALS)],
            },
            "tax": self._tax_info(agent),
        }

    def _tax_info(self, agent: AgentState | None) -> dict:
        period_pos = self.t % self.config.tax_period
        info = {
            "rates": list(self.schedule.rates),
            "cutoffs": list(self.schedule.cutoffs),
            "period_progress": period_pos / self.config.tax_period,
            "prev_incomes_sorted": sorted(self.prev_period_incomes),
        }
        if agent is not None:
            z = max(0, agent.total_coin() - agent.period_start_coin)
            info["own_marginal_rate"] = fiscal.marginal_rate_at(z, self.schedule)
        return info

    def _padded_layers(self) -> dict:
        # static layers are padded once; dynamic ones reuse their buffers
        r = self.OBS_WINDOW // 2
        if not hasattr(self, "_pad_buffers"):
            self._pad_buffers = {
                "deposit_mat": np.pad(self.world.deposit_mat, r, constant_values=-2),
                "obstacle": np.pad(self.world.obstacle, r, constant_values=True),
                "deposit_units": np.pad(self.world.deposit_units, r, constant_values=0),
                "house_type": np.pad(self.world.house_type, r, constant_values=-2),
                "occupant": np.pad(self.world.occupant, r, constant_values=-2),
            }
        for name in ("deposit_units", "house_type", "occupant"):
            self._pad_buffers[name][r:-r, r:-r] = getattr(self.world, name)
        return self._pad_buffers

    def observe_all(self) -> list:
        padded = self._padded_layers()
        return [self.observe(i, padded) for i in range(len(self.agents))]

    def observe_planner(self) -> dict:
        # full public map, all inventories/votes/languages; never skills
        info = self._tax_info(None)
        info["prev_incomes"] = list(self.prev_period_incomes)
        return {
            "t": self.t,
            "map": {
                "deposit_mat": self.world.deposit_mat.copy(),
                "deposit_units": self.world.deposit_units.copy(),
                "house_type": self.world.house_type.copy(),
                "occupant": self.world.occupant.copy(),
            },
            "coins": [a.total_coin() for a in self.agents],
            "inventories": [a.inventory.copy() for a in self.agents],
            "labor": [a.labor for a in self.agents],
            "market": {
                "order_counts": self.book.open_counts.sum(axis=0),
                "trade_counts": self.book.trade_counts.copy(),
                "avg_price": [self.book.average_trade_price(m) for m in range(N_MATERIALS)],
            },
            "tax": info,
            "votes": list(self.ballots),
            "languages": [list(a.language) for a in self.agents],
            "rate_grid": self.config.rate_grid(),
        }

    # -- planner action -----------------------------------------------------

    def apply_planner_action(self, action: dict):
        if not isinstance(action, dict) or "rates" not in action:
            raise ConfigError(f"malformed planner action: {action!r}")
        rates = tuple(action["rates"])
        if len(rates) != 7:
            raise ConfigError("planner action needs 7 marginal rates")
        grid = self.config.rate_grid()
        for rate in rates:
            if not any(abs(rate - g) < 1e-9 for g in grid):
                raise ConfigError(f"rate {rate} is not on the rate grid")
        self.schedule = TaxSchedule(self.config.bracket_cutoffs, rates)
        ranking = action.get("ranking")
        if ranking is not None:
            ranking = tuple(ranking)
            if sorted(ranking) != list(range(N_MATERIALS)):
                raise ConfigError(f"malformed planner ranking: {ranking!r}")
        self.planner_ranking = ranking

    # -- stepping -------------------------------------------------------------

    def step(self, actions, planner_action: dict | None = None):
        """Advance one time-step.  Returns (observations, rewards, done)."""
        cfg = self.config
        if len(actions) != len(self.agents):
            raise ValueError(f"expected {len(self.agents)} actions, got {len(actions)}")
        if self.t % cfg.tax_period == 0 and planner_action is not None:
            self.apply_planner_action(planner_action)

        executed = list(actions)
        for i, act in enumerate(actions):
            if not isinstance(act, (int, np.integer)) or not 0 <= act < N_ACTIONS:
                raise ValueError(f"agent {i}: malformed action {act!r}")
            if not self.action_mask(i)[act]:
                executed[i] = A_NOOP
                self.masked_replacements += 1

        trades = self._phase_moves_and_market(executed)
        self._phase_builds(executed)
        self._phase_votes(executed)
        self.world.step_regen()

        period_record = None
        if (self.t + 1) % cfg.tax_period == 0:
            period_record = self._settle_period()

        rewards, planner_rew, step_record = self._finish_step(executed, trades)
        self.log.steps.append(step_record)
        if period_record is not None:
            self.log.periods.append(period_record)
        self.t += 1
        done = self.t >= cfg.horizon
        if done:
            self._finalize_log()
        return rewards, planner_rew, done

    def _phase_moves_and_market(self, executed):
        cfg = self.config
        for i, act in enumerate(executed):
            if A_MOVE <= act < A_MOVE + 4:
                agent = self.agents[i]
                moved = self.world.move_agent(i, MOVE_NAMES[act - A_MOVE])
                agent.labor += cfg.labor_move  # blocked moves still cost effort
                if moved:
                    agent.x, agent.y = (int(v) for v in self.world.agent_pos[i])
                    mat, units = self.world.gather(i, agent.gather_skill)
                    if units:
                        agent.inventory[mat] += units
                        agent.labor += cfg.labor_gather
        self.book.expire(self.t)
        trades = []
        for i, act in enumerate(executed):
            if A_TRADE <= act < A_BUILD_ALONE:
                material, side, price = decode_trade(act)
                order = self.book.next_order(i, side, material, price, self.t)
                accepted, _, trade = self.book.submit_and_match(order, self.rng)
                self.agents[i].labor += cfg.labor_trade
                if trade is not None:
                    trades.append(trade)
        return trades

    def _phase_builds(self, executed):
        engaged = set()
        for i, act in enumerate(executed):
            if A_BUILD_ALONE <= act < A_BUILD_TOGETHER:
                self.build_alone(i, act - A_BUILD_ALONE)
            elif A_BUILD_TOGETHER <= act < A_VOTE:
                self._attempt_joint_build(i, act - A_BUILD_TOGETHER, engaged)

    def build_alone(self, agent_id: int, house_type: int) -> int:
        """Build a house from own inventory; returns the coin income (0 when
        the attempt is a no-op, which still costs the build labor)."""
        cfg = self.config
        agent = self.agents[agent_id]
        agent.labor += cfg.labor_build_alone
        if cfg.variant == "teaching" and agent.role == TEACHER:
            return 0
        m1, m2 = HOUSE_RECIPES[house_type]
        if (agent.inventory[m1] < 1 or agent.inventory[m2] < 1
                or not self.world.buildable(agent.x, agent.y)):
            return 0
        agent.inventory[m1] -= 1
        agent.inventory[m2] -= 1
        agent.coin += agent.build_skill_alone
        self.world.place_house(agent.x, agent.y, house_type, (agent_id,))
        return agent.build_skill_alone

    def _attempt_joint_build(self, initiator_id: int, house_type: int, engaged: set):
        cfg = self.config
        initiator = self.agents[initiator_id]
        initiator.labor += cfg.labor_build_together
        if initiator_id in engaged:
            return
        partner_id = self._pick_partner(initiator_id, engaged)
        if partner_id is None:
            return
        partner = self.agents[partner_id]
        engaged.update((initiator_id, partner_id))
        partner.labor += cfg.labor_build_together

        outcome = language.signal(initiator, partner, house_type)
        if isinstance(outcome, language.Corrected):
            initiator.coin += cfg.small_reward
            partner.coin += cfg.small_reward
            self.corrections += 1
            self.joint_attempts.append((self.t, initiator_id, partner_id,
                                        house_type, f"corrected:{outcome.position}"))
            return
        # letters agree on the recipe: build if materials and the cell allow
        m1, m2 = HOUSE_RECIPES[house_type]
        joint_m1 = initiator.inventory[m1] + partner.inventory[m1]
        joint_m2 = initiator.inventory[m2] + partner.inventory[m2]
        if joint_m1 < 1 or joint_m2 < 1 or not self.world.buildable(initiator.x, initiator.y):
            self.joint_attempts.append((self.t, initiator_id, partner_id,
                                        house_type, "noop"))
            return
        # initiator contributes the first recipe material when both could
        if initiator.inventory[m1] >= 1:
            giver1 = initiator
            giver2 = partner if partner.inventory[m2] >= 1 else initiator
        else:
            giver1 = partner
            giver2 = initiator if initiator.inventory[m2] >= 1 else partner
        giver1.inventory[m1] -= 1
        giver2.inventory[m2] -= 1
        initiator.coin += initiator.build_skill_together
        partner.coin += partner.build_skill_together
        self.world.place_house(initiator.x, initiator.y, house_type,
                               (initiator_id, partner_id))
        self.joint_attempts.append((self.t, initiator_id, partner_id,
                                    house_type, "success"))

    def _pick_partner(self, initiator_id: int, engaged: set):
        initiator = self.agents[initiator_id]
        best = None
        for j, other in enumerate(self.agents):
            if j == initiator_id or j in engaged:
                continue
            if not self._partner_eligible(initiator_id, j):
                continue
            dist = abs(other.x - initiator.x) + abs(other.y - initiator.y)
            if best is None or (dist, j) < best[:2]:
                best = (dist, j)
        return None if best is None else best[1]

    def _phase_votes(self, executed):
        for i, act in enumerate(executed):
            if A_VOTE <= act < N_ACTIONS:
                self.ballots[i] = BALLOTS[act - A_VOTE]
                self.agents[i].labor += self.config.labor_vote

    def _settle_period(self) -> dict:
        cfg = self.config
        period = (self.t + 1) // cfg.tax_period - 1
        outcome = fiscal.settle_period(self.agents, self.schedule, period,
                                       cfg.revenue_mode)
        cast = [b for b in self.ballots if b is not None]
        if cast:
            _, outcome.borda_scores = fiscal.borda_count(cast)
        regen_deltas = fiscal.invest(outcome.taxes, cfg.system, self.ballots,
                                     self.planner_ranking, self.world,
                                     cfg.kappa, cfg.regen_max)
        outcome.regen_deltas = [float(d) for d in regen_deltas]
        self.prev_period_incomes = list(outcome.incomes)
        record = {
            "type": "period",
            "period": period,
            "rates": list(self.schedule.rates),
            "incomes": outcome.incomes,
            "taxes": outcome.taxes,
            "deltas": outcome.deltas,
            "revenue": outcome.revenue,
            "votes": [None if b is None else list(b) for b in self.ballots],
            "borda_scores": outcome.borda_scores,
            "planner_ranking": None if self.planner_ranking is None
                               else list(self.planner_ranking),
            "regen_deltas": outcome.regen_deltas,
            "coin_total_after": sum(a.total_coin() for a in self.agents),
        }
        for agent in self.agents:
            agent.period_start_coin = agent.total_coin()
        self.ballots = [None] * cfg.n_agents
        return record

    def _finish_step(self, executed, trades):
        utils = [self._utility(a) for a in self.agents]
        rewards = [agent_reward(u, p) for u, p in zip(utils, self._u_prev)]
        self._u_prev = utils
        swf = self._swf()
        planner_rew = planner_reward(swf, self._swf_prev)
        self._swf_prev = swf

        coins = [a.total_coin() for a in self.agents]
        align = language.population_alignment([a.language for a in self.agents])
        record = {
            "type": "step",
            "t": self.t,
            "actions": [int(a) for a in executed],
            "rewards": rewards,
            "planner_reward": planner_rew,
            "utilities": utils,
            "swf": swf,
            "trades": [{"step": tr.step, "material": MATERIALS[tr.material],
                        "price": tr.price, "buyer": tr.buyer, "seller": tr.seller}
                       for tr in trades],
            "alignment": align,
            "coin": coins,
            "labor": [a.labor for a in self.agents],
            "inventories": [[int(v) for v in a.inventory + a.escrow_units]
                            for a in self.agents],
            "languages": ["".join(a.language) for a in self.agents],
            "metrics": metrics.snapshot(coins, utils, self.config.coin_floor),
        }
        return rewards, planner_rew, record

    def _finalize_log(self):
        self.log.summary.update({
            "final_alignment": language.population_alignment(
                [a.language for a in self.agents]),
            "final_coin": [a.total_coin() for a in self.agents],
            "final_labor": [a.labor for a in self.agents],
            "masked_replacements": self.masked_replacements,
            "corrections": self.corrections,
            "joint_attempts": len(self.joint_attempts),
            "world_hash": self.world.state_hash(),
        })


def run_episode(config: EpisodeConfig, agent_policies, planner_policy,
                seed: int | None = None) -> EpisodeLog:
    """Run a full episode and return its log.

    Policies returning a masked action are replaced by no-op; the count is
    reported in the log summary.
    """
    if len(agent_policies) != config.n_agents:
        raise ConfigError(f"need {config.n_agents} agent policies")
    ep = Episode(config, seed)
    policy_rng = np.random.default_rng([ep.seed, 1])
    done = False
    while not done:
        planner_action = None
        if ep.t % config.tax_period == 0:
            planner_action = planner_policy.act(ep.observe_planner(), policy_rng)
        observations = ep.observe_all()
        actions = [pol.act(obs, policy_rng)
                   for pol, obs in zip(agent_policies, observations)]
        _, _, done = ep.step(actions, planner_action)
    return ep.log
