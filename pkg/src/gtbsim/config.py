"""Episode configuration: flat key-value config with validated defaults.

Every default is echoed into the episode log header so a run is fully
reproducible from (config digest, seed).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

VARIANTS = ("communication", "teaching")
SYSTEMS = ("full_libertarian", "semi_libertarian_utilitarian", "full_utilitarian")
OBJECTIVES = ("inverse_income", "eq_times_prod")
REVENUE_MODES = ("redistribute", "sink")
ORDER_CAP_SCOPES = ("per_side", "per_material")


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration."""


@dataclass
class EpisodeConfig:
    # scenario
    variant: str = "communication"
    system: str = "semi_libertarian_utilitarian"
    objective: str = "eq_times_prod"
    n_agents: int = 6
    horizon: int = 1000
    tax_period: int = 100

    # world
    width: int = 25
    height: int = 25
    deposit_density: float = 0.05        # per material, probability per cell
    initial_regen: float = 0.01          # per material, respawn probability
    deposit_units: int = 1               # units stocked per deposit cell at start
    obstacle_density: float = 0.0        # impassable cells, off by default
    gather_skill: float = 0.2            # bonus-unit probability, equal across agents

    # skills and rewards (coins are integers throughout)
    build_skill_min: int = 10
    build_skill_max: int = 30
    build_skill_pareto_shape: float = 4.0
    build_together_multiplier: float = 1.5
    build_together_cap: int = 45
    small_reward: int = 1
    initial_coin: int = 0

    # labor costs per action class
    labor_move: float = 0.21
    labor_gather: float = 0.21
    labor_trade: float = 0.05
    labor_build_alone: float = 2.1
    labor_build_together: float = 3.15
    labor_vote: float = 0.0

    # market
    order_cap: int = 5
    order_cap_scope: str = "per_side"    # or "per_material" (bids+asks pooled)
    order_expiry: int = 50

    # taxation / governance
    bracket_cutoffs: tuple = (0, 10, 25, 50, 100, 200, 400)
    rate_grid_size: int = 21             # {0, 0.05, ..., 1.0}
    initial_rates: tuple = (0.1,) * 7
    revenue_mode: str = "redistribute"
    kappa: float = 0.005                 # regen-rate delta per invested coin
    regen_max: float = 0.2

    # utility
    eta: float = 0.5
    coin_floor: float = 1e-6             # clamp for C=0 when eta > 1

    seed: int = 0

    def __post_init__(self):
        self.bracket_cutoffs = tuple(self.bracket_cutoffs)
        self.initial_rates = tuple(self.initial_rates)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.revenue_mode not in REVENUE_MODES:
            raise ConfigError(f"revenue_mode must be one of {REVENUE_MODES}")
        if self.order_cap_scope not in ORDER_CAP_SCOPES:
            raise ConfigError(f"order_cap_scope must be one of {ORDER_CAP_SCOPES}")
        if self.n_agents != 6:
            raise ConfigError("exactly 6 agents are supported")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("grid dimensions must be positive")
        if not 0.0 <= self.deposit_density <= 1.0:
            raise ConfigError("deposit_density must be in [0, 1]")
        if 4 * self.deposit_density + self.obstacle_density > 1.0:
            raise ConfigError("deposit and obstacle densities exceed the grid")
        if not 0.0 <= self.initial_regen <= 1.0:
            raise ConfigError("initial_regen must be in [0, 1]")
        if not 0.0 <= self.gather_skill <= 1.0:
            raise ConfigError("gather_skill must be in [0, 1]")
        if self.horizon < self.tax_period:
            raise ConfigError("horizon must cover at least one tax period")
        if self.horizon % self.tax_period != 0:
            raise ConfigError("horizon must be divisible by tax_period")
        if self.eta <= 0 or self.eta == 1.0:
            raise ConfigError("eta must be positive and != 1")
        cuts = self.bracket_cutoffs
        if len(cuts) != 7 or cuts[0] != 0 or list(cuts) != sorted(cuts):
            raise ConfigError("bracket_cutoffs must be 7 ascending values starting at 0")
        if len(self.initial_rates) != 7:
            raise ConfigError("initial_rates must have 7 entries")
        grid = self.rate_grid()
        for r in self.initial_rates:
            if not any(abs(r - g) < 1e-12 for g in grid):
                raise ConfigError(f"initial rate {r} is not on the rate grid")

    def rate_grid(self):
        n = self.rate_grid_size
        return tuple(i / (n - 1) for i in range(n))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bracket_cutoffs"] = list(self.bracket_cutoffs)
        d["initial_rates"] = list(self.initial_rates)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path: str) -> "EpisodeConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}")
        for key in ("bracket_cutoffs", "initial_rates"):
            if key in data:
                data[key] = tuple(data[key])
        return cls.from_dict(data)


def split_seed(master: int, index: int) -> int:
    """Per-run seed derived from a master seed and run index.

    Uses sha256(f"{master}:{index}") so runs are independent and the split
    is stable across platforms and process counts.
    """
    digest = hashlib.sha256(f"{master}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
