import itertools
import logging

import pytest
from hypothesis import given, strategies as st

from acx.combine import (PatternCombination, RewardHistory, reward_approx, reward_area,
                         select_combination, should_terminate)
from acx.library import AreaModel, CellLibrary, CellType
from acx.mining import PatternGroup, PatternSubgraph


def group(gid, size, count, members=None, code=None):
    members = members or tuple(["a"] * size)
    g = PatternGroup(gid, code or f"g{gid}", size, members)
    for k in range(count):
        g.add(PatternSubgraph(gid * 1000 + k, gid, tuple(range(size)), ()))
    return g


def lib_ab():
    cells = {"a": CellType("a", ("A",), ("Y",), (("A",),), 3.0),
             "b": CellType("b", ("A",), ("Y",), (("A",),), 2.0)}
    return CellLibrary("t", cells, K=1.0)


def test_select_top_np():
    gs = sorted([group(i, 2 + i % 3, 1 + i) for i in range(7)], key=lambda g: g.sort_key())
    c = select_combination(gs, 5)
    assert [g.gid for g in c.groups] == [g.gid for g in gs[:5]]
    assert len(select_combination(gs[:3], 5)) == 3
    empty = select_combination([], 5)
    assert empty.groups == [] and empty.reward_approx == 0
    with pytest.raises(ValueError):
        select_combination(gs, 0)


def test_reward_approx_examples():
    assert reward_approx(PatternCombination([group(0, 4, 3)]), 1.0) == 12
    assert reward_approx(PatternCombination([]), 1.0) == 0
    assert reward_approx(PatternCombination([group(0, 4, 5), group(1, 5, 3)]), 2.0) == 70
    with pytest.raises(ValueError):
        reward_approx(PatternCombination([]), 0)


def test_reward_area_examples():
    lib = lib_ab()
    c = PatternCombination([group(0, 2, 2, ("a", "b"))])
    assert reward_area(c, lib, AreaModel("linear", K=1.0)) == pytest.approx(4.0)
    assert reward_area(c, lib, AreaModel("sum_scaled", alpha=1.0)) == 0


def test_reward_area_clamps_losses(caplog):
    lib = lib_ab()
    c = PatternCombination([group(0, 2, 2, ("a", "b"))])
    with caplog.at_level(logging.WARNING):
        got = reward_area(c, lib, AreaModel("external", external_cmd="echo 9.0"), {"g0": "x"})
    assert got == 0 and "grow area" in caplog.text


def test_should_terminate_examples():
    assert should_terminate([10, 9, 8])
    assert not should_terminate([10, 9, 11])
    assert not should_terminate([10])
    assert not should_terminate([10, 10, 9])


def test_history():
    h = RewardHistory()
    for i, r in enumerate([3, 5, 5, 4]):
        c = PatternCombination([], reward_approx=r)
        h.append(i, c)
    assert h.rewards == [3, 5, 5, 4] and h.best().iteration == 1
    with pytest.raises(ValueError):
        h.append(2, PatternCombination([]))
    with pytest.raises(ValueError):
        RewardHistory().best()


@given(st.lists(st.tuples(st.integers(2, 6), st.integers(1, 9)), min_size=0, max_size=8),
       st.integers(1, 6))
def test_selection_is_best_subset(spec, n_p):
    gs = sorted([group(i, s, c) for i, (s, c) in enumerate(spec)], key=lambda g: g.sort_key())
    got = select_combination(gs, n_p).reward_approx
    best = 0
    for k in range(0, min(n_p, len(gs)) + 1):
        for sub in itertools.combinations(gs, k):
            best = max(best, sum(g.coverage for g in sub))
    assert got == best


@given(st.lists(st.tuples(st.integers(2, 6), st.integers(1, 9)), max_size=6),
       st.integers(2, 6), st.integers(1, 9))
def test_reward_monotone_in_coverage(spec, size, count):
    gs = [group(i, s, c) for i, (s, c) in enumerate(spec)]
    base = reward_approx(PatternCombination(gs))
    assert reward_approx(PatternCombination(gs + [group(99, size, count)])) > base
