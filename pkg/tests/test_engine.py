"""Episode engine: action space, masks, phases, builds, votes, settlement,
rewards, determinism, and whole-episode invariants."""

import numpy as np
import pytest

from conftest import make_config, place
from gtbsim.config import ConfigError
from gtbsim.engine import (A_NOOP, N_ACTIONS, Episode, build_alone_action,
                           build_together_action, decode_trade, run_episode,
                           trade_action, utility, vote_action)
from gtbsim.fiscal import BALLOTS
from gtbsim.market import ASK, BID
from gtbsim.policies import (AlwaysTeachPolicy, FlatTaxPlanner, NoOpPolicy,
                             RandomPolicy)
from gtbsim.world import BLUE, RED

NOOPS = [A_NOOP] * 6


def put(ep, aid, x, y):
    place(ep.world, aid, x, y)
    ep.agents[aid].x, ep.agents[aid].y = x, y


def scatter_others(ep, keep=(0, 1)):
    """Park the remaining agents far away in a corner column."""
    row = 0
    for aid in range(6):
        if aid in keep:
            continue
        put(ep, aid, 24, row)
        row += 1


def fresh_episode(**overrides):
    cfg = make_config(deposit_density=0.0, **overrides)
    return Episode(cfg)


# -- utility and action encoding ---------------------------------------------

def test_utility_hand_values():
    assert utility(1, 0.0, eta=0.5) == 0.0
    assert utility(1, 3.5, eta=0.5) == -3.5
    assert utility(4, 0.0, eta=0.5) == pytest.approx(2.0)
    # eta > 1 clamps zero coin at the floor instead of dividing by zero
    assert utility(0, 0.0, eta=2.0, coin_floor=1e-6) == pytest.approx(1 - 1e6)
    with pytest.raises(ConfigError):
        utility(1, 0.0, eta=1.0)
    with pytest.raises(ConfigError):
        utility(1, 0.0, eta=0.0)


def test_utility_monotone_in_coin():
    us = [utility(c, 1.0, eta=0.5) for c in range(0, 200, 7)]
    assert all(a < b for a, b in zip(us, us[1:]))


def test_trade_action_encoding_round_trips():
    seen = set()
    for material in range(4):
        for side in (BID, ASK):
            for price in range(11):
                action = trade_action(material, side, price)
                assert 5 <= action <= 92
                assert decode_trade(action) == (material, side, price)
                seen.add(action)
    assert len(seen) == 88


def test_action_space_size():
    assert N_ACTIONS == 121
    assert vote_action(23) == 120
    assert build_alone_action(BLUE) == 94
    assert build_together_action(RED) == 95


# -- episode setup -------------------------------------------------------------

def test_skills_within_configured_bounds():
    ep = fresh_episode()
    for a in ep.agents:
        assert 10 <= a.build_skill_alone <= 30
        assert a.build_skill_together == min(round(1.5 * a.build_skill_alone), 45)
        assert a.gather_skill == ep.config.gather_skill
        assert a.coin == 0 and a.labor == 0.0


def test_skills_differ_across_agents_somewhere():
    skills = {a.build_skill_alone for ep_seed in range(5)
              for a in Episode(make_config(seed=ep_seed)).agents}
    assert len(skills) > 1


# -- masks ----------------------------------------------------------------------

def test_mask_always_allows_noop_moves_votes():
    ep = fresh_episode()
    for aid in range(6):
        mask = ep.action_mask(aid)
        assert mask[A_NOOP]
        assert mask[1:5].all()
        assert mask[97:121].all()


def test_mask_trades_respect_funds_and_inventory():
    ep = fresh_episode()
    agent = ep.agents[0]
    mask = ep.action_mask(0)
    assert mask[trade_action(0, BID, 0)]           # zero-price bid is free
    assert not mask[trade_action(0, BID, 1)]       # no coin
    assert not mask[trade_action(0, ASK, 5)]       # no inventory
    agent.coin = 4
    agent.inventory[2] = 1
    mask = ep.action_mask(0)
    assert mask[trade_action(1, BID, 4)] and not mask[trade_action(1, BID, 5)]
    assert mask[trade_action(2, ASK, 9)] and not mask[trade_action(3, ASK, 9)]


def test_mask_trades_respect_order_cap():
    ep = fresh_episode()
    agent = ep.agents[0]
    agent.inventory[1] = 10
    for _ in range(5):
        order = ep.book.next_order(0, ASK, 1, 10, 0)
        assert ep.book.submit(order)[0]
    mask = ep.action_mask(0)
    assert not mask[trade_action(1, ASK, 3)]   # side capped
    assert mask[trade_action(1, BID, 0)]       # other side still open
    assert mask[trade_action(2, ASK, 3) ] == (agent.inventory[2] >= 1)


def test_mask_build_alone_needs_materials_and_site():
    ep = fresh_episode()
    agent = ep.agents[0]
    assert not ep.action_mask(0)[build_alone_action(RED)]
    agent.inventory[0] = agent.inventory[1] = 1
    assert ep.action_mask(0)[build_alone_action(RED)]
    assert not ep.action_mask(0)[build_alone_action(BLUE)]
    ep.world.deposit_mat[agent.y, agent.x] = 0  # standing on a deposit
    assert not ep.action_mask(0)[build_alone_action(RED)]


def test_teaching_masks_roles():
    ep = Episode(make_config(variant="teaching", deposit_density=0.0))
    teacher, student = ep.agents[0], ep.agents[3]
    teacher.inventory[:] = 5
    student.inventory[:] = 5
    t_mask = ep.action_mask(0)
    s_mask = ep.action_mask(3)
    assert not t_mask[build_alone_action(RED)]      # teachers never build alone
    assert not t_mask[build_alone_action(BLUE)]
    assert t_mask[build_together_action(RED)]
    assert s_mask[build_alone_action(RED)]
    assert not s_mask[build_together_action(RED)]   # students never initiate
    assert not s_mask[build_together_action(BLUE)]


# -- observations ---------------------------------------------------------------

def test_observation_shape_and_content():
    ep = Episode(make_config())
    obs = ep.observe(2)
    assert obs["t"] == 0
    assert obs["action_mask"].shape == (N_ACTIONS,)
    for layer in obs["spatial"].values():
        assert layer.shape == (11, 11)
    assert obs["spatial"]["occupant"][5, 5] == 2  # self at the window center
    assert obs["market"]["own_orders"].shape == (4, 2, 11)
    assert obs["tax"]["rates"] == [0.1] * 7
    assert obs["tax"]["own_marginal_rate"] == 0.1


def test_planner_observation_hides_skills():
    ep = Episode(make_config())
    obs = ep.observe_planner()
    blob = repr(sorted(obs)) + repr(sorted(obs["tax"]))
    assert "skill" not in blob
    assert obs["coins"] == [0] * 6
    assert len(obs["rate_grid"]) == 21
    assert obs["votes"] == [None] * 6


def test_planner_action_validation():
    ep = Episode(make_config())
    with pytest.raises(ConfigError):
        ep.apply_planner_action({"rates": (0.33,) * 7})     # off-grid
    with pytest.raises(ConfigError):
        ep.apply_planner_action({"rates": (0.1,) * 6})      # wrong arity
    with pytest.raises(ConfigError):
        ep.apply_planner_action({"rates": (0.1,) * 7, "ranking": (0, 0, 1, 2)})
    with pytest.raises(ConfigError):
        ep.apply_planner_action({"schedule": (0.1,) * 7})
    ep.apply_planner_action({"rates": (0.05,) * 7, "ranking": (3, 2, 1, 0)})
    assert ep.schedule.rates == (0.05,) * 7
    assert ep.planner_ranking == (3, 2, 1, 0)


# -- stepping -------------------------------------------------------------------

def test_noop_step_changes_nothing_visible():
    ep = fresh_episode()
    pos = [tuple(ep.world.agent_pos[i]) for i in range(6)]
    rewards, planner_rew, done = ep.step(NOOPS)
    assert rewards == [0.0] * 6
    assert planner_rew == 0.0
    assert not done
    assert [tuple(ep.world.agent_pos[i]) for i in range(6)] == pos
    assert all(a.coin == 0 and a.labor == 0.0 for a in ep.agents)


def test_malformed_actions_rejected():
    ep = fresh_episode()
    with pytest.raises(ValueError):
        ep.step([121] + [A_NOOP] * 5)
    with pytest.raises(ValueError):
        ep.step(["up"] + [A_NOOP] * 5)
    with pytest.raises(ValueError):
        ep.step([A_NOOP] * 4)


def test_masked_action_becomes_noop_and_is_counted():
    ep = fresh_episode()
    ep.step([trade_action(0, ASK, 5)] + [A_NOOP] * 5)  # no inventory: masked
    assert ep.masked_replacements == 1
    assert ep.log.steps[0]["actions"][0] == A_NOOP
    assert ep.agents[0].labor == 0.0


def test_move_costs_labor_even_when_blocked():
    ep = fresh_episode()
    put(ep, 0, 0, 0)
    scatter_others(ep, keep=(0,))
    ep.step([1] + [A_NOOP] * 5)  # "up" from the edge: blocked
    assert tuple(ep.world.agent_pos[0]) == (0, 0)
    assert ep.agents[0].labor == pytest.approx(0.21)


def test_move_onto_deposit_gathers():
    ep = fresh_episode()
    put(ep, 0, 10, 10)
    scatter_others(ep, keep=(0,))
    ep.world.deposit_mat[10, 11] = 3
    ep.world.deposit_units[10, 11] = 1
    ep.agents[0].gather_skill = 0.0
    ep.step([4] + [A_NOOP] * 5)  # move right onto the deposit
    assert ep.agents[0].inventory[3] == 1
    assert ep.agents[0].labor == pytest.approx(0.21 + 0.21)
    assert ep.world.deposit_units[10, 11] == 0


def test_build_alone_consumes_and_pays():
    ep = fresh_episode()
    agent = ep.agents[0]
    agent.inventory[0] = 2
    agent.inventory[1] = 1
    income = ep.build_alone(0, RED)
    assert income == agent.build_skill_alone
    assert agent.coin == agent.build_skill_alone
    assert list(agent.inventory[:2]) == [1, 0]
    assert ep.world.house_type[agent.y, agent.x] == RED
    assert list(ep.world.house_owner[agent.y, agent.x]) == [0, -1]
    assert agent.labor == pytest.approx(2.1)
    # the cell is occupied now: a second build is a paid-labor no-op
    agent.inventory[1] = 1
    assert ep.build_alone(0, RED) == 0
    assert agent.labor == pytest.approx(4.2)


def joint_setup(house=RED, languages=("abcd", "abcd")):
    ep = fresh_episode()
    put(ep, 0, 10, 10)
    put(ep, 1, 11, 10)
    scatter_others(ep)
    ep.agents[0].language = list(languages[0])
    ep.agents[1].language = list(languages[1])
    m1, m2 = (0, 1) if house == RED else (2, 3)
    ep.agents[0].inventory[m1] = 1
    ep.agents[1].inventory[m2] = 1
    return ep


def test_joint_build_success():
    ep = joint_setup(RED)
    ep.step([build_together_action(RED)] + [A_NOOP] * 5)
    a0, a1 = ep.agents[0], ep.agents[1]
    assert a0.coin == a0.build_skill_together
    assert a1.coin == a1.build_skill_together
    assert a0.inventory[0] == 0 and a1.inventory[1] == 0
    assert ep.world.house_type[10, 10] == RED
    assert sorted(ep.world.house_owner[10, 10]) == [0, 1]
    assert a0.labor == a1.labor == pytest.approx(3.15)
    assert ep.joint_attempts == [(0, 0, 1, RED, "success")]


def test_joint_build_correction_needs_no_materials():
    ep = joint_setup(RED, languages=("abcd", "badc"))
    ep.agents[0].inventory[:] = 0
    ep.agents[1].inventory[:] = 0
    ep.step([build_together_action(RED)] + [A_NOOP] * 5)
    a0, a1 = ep.agents[0], ep.agents[1]
    assert a0.coin == a1.coin == ep.config.small_reward
    assert a1.language == list("aadc")  # lowest misaligned letter adopted
    assert ep.world.house_type[10, 10] == -1
    assert ep.corrections == 1
    assert ep.joint_attempts[0][4] == "corrected:0"


def test_joint_build_without_materials_is_noop():
    ep = joint_setup(RED)
    ep.agents[0].inventory[:] = 0
    ep.agents[1].inventory[:] = 0
    ep.step([build_together_action(RED)] + [A_NOOP] * 5)
    assert ep.agents[0].coin == 0
    assert ep.joint_attempts[0][4] == "noop"
    # labor is still spent on the attempt
    assert ep.agents[0].labor == pytest.approx(3.15)


def test_joint_build_initiator_contributes_first_material():
    # both agents hold both materials: the initiator gives m1, partner m2
    ep = joint_setup(RED)
    ep.agents[0].inventory[:2] = 1
    ep.agents[1].inventory[:2] = 1
    ep.step([build_together_action(RED)] + [A_NOOP] * 5)
    assert list(ep.agents[0].inventory[:2]) == [0, 1]
    assert list(ep.agents[1].inventory[:2]) == [1, 0]


def test_partner_choice_nearest_then_lowest_id():
    ep = fresh_episode()
    put(ep, 0, 10, 10)
    put(ep, 1, 10, 13)   # distance 3
    put(ep, 2, 12, 10)   # distance 2: nearest
    put(ep, 3, 10, 7)    # distance 3
    put(ep, 4, 24, 0)
    put(ep, 5, 24, 1)
    assert ep._pick_partner(0, engaged=set()) == 2
    assert ep._pick_partner(0, engaged={2}) == 1  # tie at 3: lowest id
    assert ep._pick_partner(0, engaged={1, 2, 3, 4, 5}) is None


def test_each_agent_joins_one_attempt_per_step():
    # two simultaneous initiators cannot share a partner
    ep = fresh_episode()
    for aid, xy in enumerate([(10, 10), (11, 10), (12, 10), (24, 0), (24, 1), (24, 2)]):
        put(ep, aid, *xy)
    for a in ep.agents:
        a.language = list("abcd")
    ep.step([build_together_action(RED), A_NOOP, build_together_action(RED)]
            + [A_NOOP] * 3)
    partners = [(rec[1], rec[2]) for rec in ep.joint_attempts]
    flat = [aid for pair in partners for aid in pair]
    assert len(flat) == len(set(flat))


def test_votes_recorded_and_counted_at_settlement():
    ep = fresh_episode(horizon=100, tax_period=100)
    ballot_idx = BALLOTS.index((2, 0, 1, 3))
    ep.step([vote_action(ballot_idx)] + [A_NOOP] * 5)
    assert ep.ballots[0] == (2, 0, 1, 3)
    for _ in range(99):
        ep.step(NOOPS)
    period = ep.log.periods[0]
    assert period["votes"][0] == [2, 0, 1, 3]
    assert period["votes"][1] is None
    assert period["borda_scores"] == [2, 1, 3, 0]
    assert ep.ballots == [None] * 6  # reset for the next period


def test_settlement_taxes_and_redistributes():
    ep = fresh_episode(horizon=100, tax_period=100)
    ep.agents[0].coin = 100  # exogenous income for the test
    total_before = sum(a.total_coin() for a in ep.agents)
    for _ in range(100):
        ep.step(NOOPS)
    period = ep.log.periods[0]
    assert period["incomes"][0] == 100
    assert period["taxes"][0] == 10  # flat 10% on 100
    assert sum(period["deltas"]) == 0
    assert sum(a.total_coin() for a in ep.agents) == total_before
    assert all(a.period_start_coin == a.total_coin() for a in ep.agents)
    assert period["coin_total_after"] == total_before


def test_settlement_invests_revenue_into_regen():
    ep = fresh_episode(horizon=100, tax_period=100, system="full_utilitarian")
    ep.apply_planner_action({"rates": (0.1,) * 7, "ranking": (0, 1, 2, 3)})
    ep.agents[0].coin = 600
    before = ep.world.material_regen.copy()
    for _ in range(100):
        ep.step(NOOPS)
    deltas = np.array(ep.log.periods[0]["regen_deltas"])
    assert deltas[0] > deltas[1] > deltas[2] > deltas[3] == 0
    assert np.allclose(ep.world.material_regen, before + deltas)


def test_reward_telescoping_random_episode():
    cfg = make_config(horizon=100, tax_period=50, seed=13)
    log = run_episode(cfg, [RandomPolicy() for _ in range(6)], FlatTaxPlanner(0.1))
    total = np.zeros(6)
    for step in log.steps:
        total += step["rewards"]
    u0 = np.array(log.summary["u0"])
    u_end = np.array(log.steps[-1]["utilities"])
    assert np.allclose(total, u_end - u0, atol=1e-9)
    swf_total = sum(s["planner_reward"] for s in log.steps)
    assert swf_total == pytest.approx(log.steps[-1]["swf"] - log.summary["swf0"], abs=1e-9)


def test_identical_seed_reproduces_log_bytes():
    cfg = make_config(horizon=100, tax_period=50, seed=21)
    def go():
        return run_episode(cfg, [RandomPolicy() for _ in range(6)],
                           FlatTaxPlanner(0.1)).to_bytes()
    assert go() == go()
    other = make_config(horizon=100, tax_period=50, seed=22)
    assert run_episode(other, [RandomPolicy() for _ in range(6)],
                       FlatTaxPlanner(0.1)).to_bytes() != go()


def test_episode_invariants_under_random_play():
    # regen and investment disabled: total material + 2 * houses is constant
    cfg = make_config(horizon=100, tax_period=50, seed=31,
                      deposit_density=0.08, deposit_units=3,
                      initial_regen=0.0, kappa=0.0)
    ep = Episode(cfg)
    policies = [RandomPolicy() for _ in range(6)]
    rng = np.random.default_rng([ep.seed, 1])

    def material_total():
        held = sum(int((a.inventory + a.escrow_units).sum()) for a in ep.agents)
        houses = int((ep.world.house_type >= 0).sum())
        return int(ep.world.deposit_units.sum()) + held + 2 * houses

    base = material_total()
    labor_prev = np.zeros(6)
    done = False
    while not done:
        actions = [p.act(obs, rng) for p, obs in zip(policies, ep.observe_all())]
        _, _, done = ep.step(actions)
        assert material_total() == base
        # occupancy is consistent and exclusive
        for aid, a in enumerate(ep.agents):
            assert ep.world.occupant[a.y, a.x] == aid
            assert tuple(ep.world.agent_pos[aid]) == (a.x, a.y)
        assert (ep.world.occupant >= 0).sum() == 6
        # coins and escrow never go negative; labor never decreases
        for a in ep.agents:
            assert a.coin >= 0 and a.escrow_coin >= 0
            assert (a.inventory >= 0).all() and (a.escrow_units >= 0).all()
        labor = np.array([a.labor for a in ep.agents])
        assert (labor >= labor_prev - 1e-12).all()
        labor_prev = labor
    assert ep.masked_replacements == 0  # RandomPolicy respects the mask


def test_always_teach_reaches_full_alignment():
    cfg = make_config(variant="teaching", horizon=100, tax_period=100, seed=3)
    ep = Episode(cfg)
    policies = [AlwaysTeachPolicy() for _ in range(6)]
    rng = np.random.default_rng([ep.seed, 1])
    trace = []
    done = False
    while not done:
        actions = [p.act(obs, rng) for p, obs in zip(policies, ep.observe_all())]
        _, _, done = ep.step(actions)
        trace.append(ep.log.steps[-1]["alignment"])
        if trace[-1] == 4.0:
            break
    assert trace[-1] == 4.0
    assert len(ep.joint_attempts) <= 12
    assert all(a <= b for a, b in zip(trace, trace[1:]))


def test_run_episode_validates_policy_count():
    with pytest.raises(ConfigError):
        run_episode(make_config(), [NoOpPolicy()], FlatTaxPlanner())
