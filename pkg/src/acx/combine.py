"""Pattern-combination evaluation: top-N selection, rewards, termination."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Union

from .library import AreaModel, CellLibrary, merged_cell_area

if TYPE_CHECKING:
    from .mining import PatternGroup

log = logging.getLogger(__name__)


@dataclass
class PatternCombination:
    groups: List["PatternGroup"] = field(default_factory=list)
    reward_approx: float = 0.0
    reward_area: Optional[float] = None

    @property
    def coverage(self) -> int:
        return sum(g.coverage for g in self.groups)

    @property
    def pattern_sizes(self) -> str:
        return "/".join(str(g.size) for g in self.groups)

    def __len__(self):
        return len(self.groups)


def reward_approx(c: PatternCombination, K: float = 1.0) -> float:
    """Coverage proxy for area saving: ``K * sum(coverage)``."""
    if not K > 0:
        raise ValueError("K must be positive")
    return K * sum(g.coverage for g in c.groups)


def select_combination(groups: Sequence["PatternGroup"], n_p: int,
                       K: float = 1.0) -> PatternCombination:
    """First ``n_p`` groups of a coverage-sorted pattern list."""
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    c = PatternCombination([g.snapshot() for g in groups[:n_p]])
    c.reward_approx = reward_approx(c, K)
    return c


def group_saving(group: "PatternGroup", lib: CellLibrary, model: AreaModel,
                 spice_path: Optional[str] = None) -> float:
    """Area saved per occurrence of ``group``, clamped at zero."""
    members = [lib[name] for name in group.members]
    saving = sum(c.area for c in members) - merged_cell_area(model, members, spice_path)
    if saving < 0:
        log.warning("pattern %s would grow area by %.4g per occurrence; counting 0",
                    group.code, -saving)
        return 0.0
    return saving


def reward_area(c: PatternCombination, lib: CellLibrary, model: AreaModel,
                spice_paths: Optional[Dict[str, str]] = None) -> float:
    spice_paths = spice_paths or {}
    total = 0.0
    for g in c.groups:
        total += len(g.subgraphs) * group_saving(g, lib, model, spice_paths.get(g.code))
    return total


@dataclass
class RewardRecord:
    iteration: int
    combination: PatternCombination
    reward: float
    list_size: int = 0


class RewardHistory:
    """Append-only per-iteration record of the evaluated combination."""

    def __init__(self):
        self.records: List[RewardRecord] = []

    def append(self, iteration: int, combination: PatternCombination, list_size: int = 0):
        if self.records and iteration <= self.records[-1].iteration:
            raise ValueError("history iterations must be strictly increasing")
        self.records.append(RewardRecord(iteration, combination, combination.reward_approx,
                                         list_size))

    @property
    def rewards(self) -> List[float]:
        return [r.reward for r in self.records]

    def best(self) -> RewardRecord:
        """Earliest record with the maximal reward."""
        if not self.records:
            raise ValueError("empty history")
        best = self.records[0]
        for r in self.records[1:]:
            if r.reward > best.reward:
                best = r
        return best

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def should_terminate(h: Union[RewardHistory, Sequence[float]]) -> bool:
    """True once the reward fell in each of the last two iterations."""
    rewards = h.rewards if isinstance(h, RewardHistory) else list(h)
    if len(rewards) < 3:
        return False
    return rewards[-1] < rewards[-2] < rewards[-3]
