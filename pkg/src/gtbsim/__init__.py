"""gtbsim: a deterministic gather-trade-build economy with voting, taxation,
signaling-game language alignment, and post-hoc inequity-aversion fitting.

Six agents move on a grid, gather four materials (wood, stone, iron, soil),
trade them through a continuous double auction, and build red houses
(wood + stone) or blue houses (iron + soil), alone or jointly.  Joint
building is gated by a four-letter naming convention that agents align one
letter at a time.  A central planner taxes income in brackets, redistributes
revenue, and -- depending on the governing system -- invests it into material
regeneration rates weighted by agent votes (Borda count), individual ballots,
or its own ranking.
"""

__version__ = "0.1.0"

from .config import ConfigError, EpisodeConfig
from .engine import Episode, run_episode

__all__ = ["ConfigError", "EpisodeConfig", "Episode", "run_episode", "__version__"]
