"""Shared test helpers and fixtures."""

import numpy as np
import pytest

from gtbsim.agents import AgentState
from gtbsim.config import EpisodeConfig


def make_config(**overrides):
    """EpisodeConfig with short-episode defaults for fast tests."""
    base = dict(horizon=100, tax_period=100, seed=7)
    base.update(overrides)
    return EpisodeConfig(**base)


def make_agent(i, coin=0, inventory=(0, 0, 0, 0), **kwargs):
    return AgentState(id=i, coin=coin,
                      inventory=np.array(inventory, dtype=np.int64), **kwargs)


def make_agents(n=6, coin=20, units=3):
    return {i: make_agent(i, coin=coin, inventory=(units,) * 4) for i in range(n)}


def place(world, agent_id, x, y):
    """Teleport an agent (test-only world surgery)."""
    ox, oy = world.agent_pos[agent_id]
    world.occupant[oy, ox] = -1
    world.agent_pos[agent_id] = (x, y)
    world.occupant[y, x] = agent_id


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
