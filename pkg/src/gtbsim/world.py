"""The 2-D grid: material deposits, regeneration, houses, movement, gathering.

The grid is stored as dense numpy arrays rather than per-cell objects so a
1000-step episode stays cheap.  All randomness flows through the world's own
generator; identical (config, seed) produce bit-identical worlds.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .config import ConfigError, EpisodeConfig

MATERIALS = ("wood", "stone", "iron", "soil")
WOOD, STONE, IRON, SOIL = range(4)
N_MATERIALS = 4

# red houses consume wood+stone, blue houses consume iron+soil
RED, BLUE = 0, 1
HOUSE_RECIPES = {RED: (WOOD, STONE), BLUE: (IRON, SOIL)}
HOUSE_NAMES = ("red", "blue")

DIRECTIONS = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}


class GridWorld:
    """World state for one episode.  Single-writer; never shared while live."""

    def __init__(self, config: EpisodeConfig, seed: int):
        self.config = config
        self.rng_seed = seed
        self.rng = np.random.default_rng(seed)
        self.width = config.width
        self.height = config.height
        h, w = self.height, self.width

        self.deposit_mat = np.full((h, w), -1, dtype=np.int8)
        self.deposit_units = np.zeros((h, w), dtype=np.int16)
        self.obstacle = np.zeros((h, w), dtype=bool)
        self.house_type = np.full((h, w), -1, dtype=np.int8)
        self.house_owner = np.full((h, w, 2), -1, dtype=np.int8)
        self.occupant = np.full((h, w), -1, dtype=np.int8)
        self.agent_pos = np.zeros((config.n_agents, 2), dtype=np.int64)  # (x, y)
        self.material_regen = np.full(N_MATERIALS, config.initial_regen, dtype=np.float64)

        self._place_deposits()
        self._place_agents()
        self._rebuild_deposit_cache()

    def _rebuild_deposit_cache(self):
        # deposit cells never move during an episode; cache their coordinates
        dys, dxs = np.nonzero(self.deposit_mat >= 0)
        self._dep_ys, self._dep_xs = dys, dxs
        self._dep_mats = self.deposit_mat[dys, dxs].astype(np.int64)

    # -- initialisation -------------------------------------------------

    def _place_deposits(self):
        d = self.config.deposit_density
        o = self.config.obstacle_density
        if 4 * d + o > 1.0:
            raise ConfigError("deposit/obstacle densities exceed 1")
        if d == 0.0 and o == 0.0:
            return
        u = self.rng.random((self.height, self.width))
        for m in range(N_MATERIALS):
            mask = (u >= m * d) & (u < (m + 1) * d)
            self.deposit_mat[mask] = m
            self.deposit_units[mask] = self.config.deposit_units
        self.obstacle[(u >= 4 * d) & (u < 4 * d + o)] = True

    def _place_agents(self):
        free = (self.deposit_mat < 0) & ~self.obstacle
        ys, xs = np.nonzero(free)
        n = self.config.n_agents
        if len(ys) < n:
            raise ConfigError("not enough empty cells to place agents")
        picks = self.rng.choice(len(ys), size=n, replace=False)
        for aid, k in enumerate(picks):
            x, y = int(xs[k]), int(ys[k])
            self.agent_pos[aid] = (x, y)
            self.occupant[y, x] = aid

    # -- queries ---------------------------------------------------------

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def buildable(self, x: int, y: int) -> bool:
        # no building on regeneration (deposit) cells or existing houses
        return (
            self.in_bounds(x, y)
            and not self.obstacle[y, x]
            and self.deposit_mat[y, x] < 0
            and self.house_type[y, x] < 0
        )

    def passable(self, x: int, y: int, agent_id: int) -> bool:
        if not self.in_bounds(x, y) or self.obstacle[y, x]:
            return False
        if self.occupant[y, x] >= 0:
            return False
        if self.house_type[y, x] >= 0 and agent_id not in self.house_owner[y, x]:
            return False
        return True

    # -- operations -------------------------------------------------------

    def move_agent(self, agent_id: int, direction: str) -> bool:
        """Move one cell; blocked moves return False and change nothing."""
        dx, dy = DIRECTIONS[direction]
        x, y = self.agent_pos[agent_id]
        nx, ny = int(x) + dx, int(y) + dy
        if not self.passable(nx, ny, agent_id):
            return False
        self.occupant[y, x] = -1
        self.occupant[ny, nx] = agent_id
        self.agent_pos[agent_id] = (nx, ny)
        return True

    def gather(self, agent_id: int, gather_skill: float):
        """Collect from the deposit under the agent, if stocked.

        Returns (material, units) with units in {0, 1, 2}; a bonus unit is
        taken with probability gather_skill when the deposit can supply it.
        """
        x, y = self.agent_pos[agent_id]
        m = int(self.deposit_mat[y, x])
        if m < 0 or self.deposit_units[y, x] <= 0:
            return -1, 0
        take = 1
        if self.rng.random() < gather_skill and self.deposit_units[y, x] >= 2:
            take = 2
        self.deposit_units[y, x] -= take
        return m, take

    def place_house(self, x: int, y: int, house_type: int, owners):
        self.house_type[y, x] = house_type
        for slot, owner in enumerate(owners):
            self.house_owner[y, x, slot] = owner

    def step_regen(self, rates=None):
        """Respawn one unit on each exhausted deposit cell with its
        material's rate; stocked deposit cells are unchanged."""
        if rates is None:
            rates = self.material_regen
        ys, xs, mats = self._dep_ys, self._dep_xs, self._dep_mats
        if len(ys) == 0:
            return 0
        empty = self.deposit_units[ys, xs] == 0
        n_empty = int(empty.sum())
        if n_empty == 0:
            return 0
        draws = self.rng.random(n_empty)
        hit = draws < np.asarray(rates)[mats[empty]]
        self.deposit_units[ys[empty][hit], xs[empty][hit]] = 1
        return int(hit.sum())

    # -- serialization ----------------------------------------------------

    def snapshot(self) -> dict:
        """Flat JSON view of every non-empty cell (used by replay)."""
        cells = []
        for y in range(self.height):
            for x in range(self.width):
                m = int(self.deposit_mat[y, x])
                ht = int(self.house_type[y, x])
                occ = int(self.occupant[y, x])
                if m < 0 and ht < 0 and occ < 0 and not self.obstacle[y, x]:
                    continue
                cell = {"x": x, "y": y}
                if m >= 0:
                    cell["material"] = MATERIALS[m]
                    cell["units"] = int(self.deposit_units[y, x])
                    cell["regen_prob"] = float(self.material_regen[m])
                if ht >= 0:
                    owners = [int(o) for o in self.house_owner[y, x] if o >= 0]
                    cell["house"] = {"type": HOUSE_NAMES[ht], "owners": owners}
                if occ >= 0:
                    cell["occupant"] = occ
                if self.obstacle[y, x]:
                    cell["obstacle"] = True
                cells.append(cell)
        return {"width": self.width, "height": self.height, "cells": cells}

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.deposit_mat, self.deposit_units, self.house_type,
                    self.house_owner, self.occupant, self.agent_pos):
            h.update(arr.tobytes())
        h.update(self.material_regen.tobytes())
        return h.hexdigest()


def init_world(config: EpisodeConfig, seed: int) -> GridWorld:
    return GridWorld(config, seed)
