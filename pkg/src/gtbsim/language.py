"""Signaling-game layer: language maps, alignment, and the one-letter
correction protocol used by joint building.

Each agent names the four materials (wood, stone, iron, soil) with letters
from {a, b, c, d}.  A joint build succeeds when both participants use the
same letters for the two recipe materials of the attempted house type;
otherwise one misaligned letter is corrected and both get a small reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .agents import PLAIN, STUDENT, TEACHER, AgentState
from .config import ConfigError
from .world import HOUSE_RECIPES

LETTERS = ("a", "b", "c", "d")

# the six initial maps of the communication variant, in agent-id order
COMMUNICATION_INIT = (
    ("a", "b", "c", "d"),
    ("d", "a", "b", "c"),
    ("c", "d", "a", "b"),
    ("b", "c", "d", "a"),
    ("d", "c", "b", "a"),
    ("b", "a", "d", "c"),
)

TEACHER_MAP = ("a", "b", "c", "d")
STUDENT_INIT = (
    ("d", "a", "b", "c"),
    ("c", "d", "a", "b"),
    ("b", "c", "d", "a"),
)


def init_languages(variant: str, n_agents: int = 6):
    """Initial language maps and roles, in agent-id order.

    Teaching assigns agents 0-2 as teachers (fixed reference map) and 3-5 as
    students.
    """
    if n_agents != 6:
        raise ConfigError(f"{variant} variant requires 6 agents, got {n_agents}")
    if variant == "communication":
        languages = [list(m) for m in COMMUNICATION_INIT]
        roles = [PLAIN] * 6
    elif variant == "teaching":
        languages = [list(TEACHER_MAP) for _ in range(3)] + [list(m) for m in STUDENT_INIT]
        roles = [TEACHER] * 3 + [STUDENT] * 3
    else:
        raise ConfigError(f"unknown variant: {variant!r}")
    return languages, roles


def pair_alignment(l1, l2) -> int:
    """Number of positions (0..4) where two language maps agree."""
    return sum(1 for a, b in zip(l1, l2) if a == b)


def population_alignment(languages) -> float:
    """Mean pair alignment over all unordered agent pairs."""
    pairs = list(combinations(range(len(languages)), 2))
    if not pairs:
        raise ValueError("population alignment needs at least 2 agents")
    return sum(pair_alignment(languages[i], languages[j]) for i, j in pairs) / len(pairs)


def pair_matrix(languages):
    n = len(languages)
    mat = [[4] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                mat[i][j] = pair_alignment(languages[i], languages[j])
    return mat


@dataclass
class Success:
    pass


@dataclass
class Corrected:
    position: int


def recipe_aligned(l1, l2, house_type: int) -> bool:
    return all(l1[m] == l2[m] for m in HOUSE_RECIPES[house_type])


def signal(initiator: AgentState, partner: AgentState, house_type: int):
    """Run the letter protocol for one joint-build attempt.

    Success when both letters of the house recipe agree.  Otherwise the
    lowest-index misaligned position over all four letters is corrected:
    the partner adopts the initiator's letter, except that a student always
    adopts the teacher's letter (the teacher's map never changes).
    """
    if recipe_aligned(initiator.language, partner.language, house_type):
        return Success()
    pos = next(
        i for i in range(4) if initiator.language[i] != partner.language[i]
    )
    if initiator.role == STUDENT and partner.role == TEACHER:
        initiator.language[pos] = partner.language[pos]
    else:
        partner.language[pos] = initiator.language[pos]
    return Corrected(pos)
