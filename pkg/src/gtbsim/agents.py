"""Per-agent economic state shared by the market, language, and engine layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .world import N_MATERIALS

PLAIN, TEACHER, STUDENT = "plain", "teacher", "student"


@dataclass
class AgentState:
    id: int
    x: int = 0
    y: int = 0
    coin: int = 0
    escrow_coin: int = 0
    labor: float = 0.0
    build_skill_alone: int = 10
    build_skill_together: int = 15
    gather_skill: float = 0.2
    language: list = field(default_factory=lambda: ["a", "b", "c", "d"])
    role: str = PLAIN
    inventory: np.ndarray = field(default_factory=lambda: np.zeros(N_MATERIALS, dtype=np.int64))
    escrow_units: np.ndarray = field(default_factory=lambda: np.zeros(N_MATERIALS, dtype=np.int64))
    period_start_coin: int = 0

    def total_coin(self) -> int:
        return self.coin + self.escrow_coin

    def holds(self, material: int) -> bool:
        return self.inventory[material] >= 1
