"""Frequent, non-overlapping pattern mining on a :class:`NetlistGraph`.

The miner seeds pattern groups with canonically encoded 2-level fan-in trees,
then repeatedly grows the highest-coverage group by absorbing the most common
neighbor attachment. A single occupancy map keeps every graph vertex in at
most one live pattern occurrence.
"""

from __future__ import annotations

import logging
import re
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

from .combine import (PatternCombination, RewardHistory, select_combination,
                      should_terminate)
from .library import CellLibrary
from .netlist import NetlistGraph

log = logging.getLogger(__name__)

FREE = -1


@dataclass(frozen=True)
class TreeCode:
    """``[root](leaf,out,in)...`` with leaf codes in lexicographic order.

    A leaf that drives the root through several pins carries all of its
    (out, in) pairs in one leaf code: ``(leaf,out1,in1,out2,in2)``.
    """
    text: str

    _LEAF = re.compile(r"\(([^()]*)\)")

    @property
    def root_type(self) -> str:
        return self.text[1:self.text.index("]")]

    @property
    def leaves(self) -> List[Tuple[str, Tuple[Tuple[str, str], ...]]]:
        body = self.text[self.text.index("]") + 1:]
        out = []
        for m in self._LEAF.finditer(body):
            parts = m.group(1).split(",")
            out.append((parts[0], tuple(zip(parts[1::2], parts[2::2]))))
        return out

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class NeighborCode:
    text: str

    def __str__(self):
        return self.text


@dataclass(eq=False)
class PatternSubgraph:
    """One occurrence of a pattern. ``vertices[i]`` has in-pattern index ``i``;
    ``edge_ids`` are the accumulated graph edges of the occurrence."""
    sid: int
    group_id: int
    vertices: Tuple[int, ...]
    edge_ids: Tuple[int, ...]
    abandoned: bool = False

    def __len__(self):
        return len(self.vertices)

    def edges(self, graph: NetlistGraph) -> List[Tuple[int, int, str, str]]:
        pos = {v: i for i, v in enumerate(self.vertices)}
        out = []
        for eid in self.edge_ids:
            e = graph.edges[eid]
            out.append((pos[e.driver], pos[e.sink], e.out_pin, e.in_canon))
        return out


class PatternGroup:
    """Mutually isomorphic, vertex-disjoint occurrences sharing one code."""

    def __init__(self, gid: int, code: str, size: int, members: Tuple[str, ...]):
        self.gid = gid
        self.code = code
        self.size = size
        self.members = members  # cell type per in-pattern index
        self._subs: Dict[int, PatternSubgraph] = {}
        self.mature = False

    @property
    def subgraphs(self) -> List[PatternSubgraph]:
        return list(self._subs.values())

    @property
    def coverage(self) -> int:
        return len(self._subs) * self.size

    def add(self, sub: PatternSubgraph):
        sub.group_id = self.gid
        self._subs[sub.sid] = sub

    def remove(self, sub: PatternSubgraph):
        del self._subs[sub.sid]

    def __len__(self):
        return len(self._subs)

    def sort_key(self):
        return (-self.coverage, self.code)

    def snapshot(self) -> "PatternGroup":
        g = PatternGroup(self.gid, self.code, self.size, self.members)
        g._subs = dict(self._subs)
        return g

    def __repr__(self):
        return f"PatternGroup({self.code!r}, size={self.size}, count={len(self._subs)})"


class OccupancyMap:
    """Vertex -> owning subgraph id (or FREE) plus the vertex's in-pattern index."""

    def __init__(self, n: int):
        self.owner = [FREE] * n
        self.index = [-1] * n
        self.subgraphs: Dict[int, PatternSubgraph] = {}

    def is_free(self, v: int) -> bool:
        return self.owner[v] == FREE

    def occupy(self, sub: PatternSubgraph):
        owner, index = self.owner, self.index
        for i, v in enumerate(sub.vertices):
            if owner[v] != FREE:
                raise AssertionError(f"vertex {v} already owned by subgraph {owner[v]}")
            owner[v] = sub.sid
            index[v] = i
        self.subgraphs[sub.sid] = sub

    def release(self, sub: PatternSubgraph):
        owner, index = self.owner, self.index
        for v in sub.vertices:
            if owner[v] == sub.sid:
                owner[v] = FREE
                index[v] = -1
        del self.subgraphs[sub.sid]

    def free_vertices(self) -> List[int]:
        return [v for v, o in enumerate(self.owner) if o == FREE]

    def check(self, groups) -> None:
        """Raise AssertionError unless ownership matches live group membership exactly."""
        expected = [FREE] * len(self.owner)
        live = {}
        for g in groups:
            for s in g.subgraphs:
                if s.abandoned:
                    raise AssertionError(f"abandoned subgraph {s.sid} still in {g.code}")
                if s.group_id != g.gid:
                    raise AssertionError(f"subgraph {s.sid} has stale group id")
                live[s.sid] = s
                for i, v in enumerate(s.vertices):
                    if expected[v] != FREE:
                        raise AssertionError(f"vertex {v} in subgraphs {expected[v]} and {s.sid}")
                    expected[v] = s.sid
                    if self.index[v] != i:
                        raise AssertionError(f"vertex {v} has index {self.index[v]}, expected {i}")
        if expected != self.owner:
            bad = next(v for v, (a, b) in enumerate(zip(expected, self.owner)) if a != b)
            raise AssertionError(f"occupancy of vertex {bad} is {self.owner[bad]}, "
                                 f"expected {expected[bad]}")
        if set(live) != set(self.subgraphs):
            raise AssertionError("occupancy subgraph registry out of sync")


class PatternList:
    """Pattern groups kept sorted by descending coverage, then code.

    Adding a group whose code is already present merges the occurrences into
    the existing group, so codes stay unique.
    """

    def __init__(self):
        self.groups: List[PatternGroup] = []
        self._by_code: Dict[str, PatternGroup] = {}
        self._by_id: Dict[int, PatternGroup] = {}

    def add(self, g: PatternGroup) -> PatternGroup:
        have = self._by_code.get(g.code)
        if have is None:
            self.groups.append(g)
            self._by_code[g.code] = g
            self._by_id[g.gid] = g
            return g
        for s in g.subgraphs:
            have.add(s)
        have.mature = False
        return have

    def remove(self, g: PatternGroup):
        self.groups.remove(g)
        del self._by_code[g.code]
        del self._by_id[g.gid]

    def by_id(self, gid: int) -> PatternGroup:
        return self._by_id[gid]

    def drop_empty(self):
        for g in [g for g in self.groups if not len(g)]:
            self.remove(g)

    def sort(self):
        self.groups.sort(key=PatternGroup.sort_key)

    def __iter__(self):
        return iter(self.groups)

    def __len__(self):
        return len(self.groups)

    def __getitem__(self, i):
        return self.groups[i]


@dataclass
class MiningConfig:
    n_p: int = 5
    s_p: int = 10
    prune_ratio: float = 0.025
    max_iterations: Optional[int] = None  # default s_p + 5
    min_support: int = 2  # a pattern must occur at least this often


    def __post_init__(self):
        if self.n_p < 1:
            raise ValueError("n_p must be >= 1")
        if self.s_p < 2:
            raise ValueError("s_p must be >= 2")
        if not 0 <= self.prune_ratio < 1:
            raise ValueError("prune_ratio must be in [0, 1)")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if self.max_iterations is None:
            self.max_iterations = self.s_p + 5


class NeighborIndex(NamedTuple):
    code2neighbors: Dict[str, List[int]]
    neighbor2subgraph: Dict[int, PatternSubgraph]
    neighbor_edges: Dict[int, List[int]]


@dataclass
class GrowthStep:
    iteration: int
    target_code: str
    neighbor_code: str
    target_count: int
    new_count: int
    abandoned: int


@dataclass
class Counters:
    edge_visits: int = 0
    vertex_visits: int = 0


@dataclass
class MiningResult:
    best: PatternCombination
    history: RewardHistory
    growth: List[GrowthStep]
    iterations: int
    fsm_seconds: float
    final: List[PatternGroup] = field(default_factory=list)
    best_iteration: int = 0


def _leaves(graph: NetlistGraph, root: int, owner: Optional[List[int]]):
    """Leaf codes of ``root``'s fan-in tree, sorted; optionally only FREE drivers."""
    edges = graph.edges
    ct = graph.cell_type
    by_driver: Dict[int, List[int]] = {}
    for eid in graph.preds[root]:
        d = edges[eid].driver
        if d == root or (owner is not None and owner[d] != FREE):
            continue
        lst = by_driver.get(d)
        if lst is None:
            by_driver[d] = [eid]
        else:
            lst.append(eid)
    leaves = []
    for d, eids in by_driver.items():
        if len(eids) == 1:
            e = edges[eids[0]]
            leaves.append((f"({ct[d]},{e.out_pin},{e.in_canon})", d, eids))
        else:
            lab = sorted((edges[x].out_pin, edges[x].in_canon, x) for x in eids)
            code = "(" + ct[d] + "," + ",".join(f"{o},{i}" for o, i, _ in lab) + ")"
            leaves.append((code, d, [x for _, _, x in lab]))
    leaves.sort()
    return leaves


def tree_encode(graph: NetlistGraph, root: int) -> TreeCode:
    """Canonical code of the 2-level tree formed by ``root`` and its predecessors.

    Input pins are already canonicalized in the graph's edges.
    """
    leaves = _leaves(graph, root, None)
    return TreeCode(f"[{graph.cell_type[root]}]" + "".join(c for c, _, _ in leaves))


def neighbor_encode(graph: NetlistGraph, neighbor: int, sub: PatternSubgraph) -> NeighborCode:
    pos = {v: i for i, v in enumerate(sub.vertices)}
    if neighbor in pos:
        raise ValueError("neighbor is a vertex of the subgraph")
    code, _ = _neighbor_code(graph, neighbor, pos.get)
    if code is None:
        raise ValueError(f"vertex {neighbor} has no edge into the subgraph")
    return NeighborCode(code)


def _neighbor_code(graph: NetlistGraph, w: int, index_of):
    """Edge codes between ``w`` and a subgraph; ``index_of(v)`` gives v's
    in-pattern index or None when v is outside the subgraph."""
    edges = graph.edges
    codes = []
    for eid in graph.preds[w]:
        e = edges[eid]
        i = index_of(e.driver)
        if i is not None:
            codes.append((f"({i},{e.out_pin},{e.in_canon})", eid))
    for eid in graph.succs[w]:
        e = edges[eid]
        i = index_of(e.sink)
        if i is not None:
            codes.append((f"({e.out_pin},{e.in_canon},{i})", eid))
    if not codes:
        return None, []
    codes.sort()
    return f"[{graph.cell_type[w]}]" + "".join(c for c, _ in codes), [x for _, x in codes]


class PatternMiner:
    """Holds the mutable mining state for one graph. Not thread-safe."""

    def __init__(self, graph: NetlistGraph, lib: Optional[CellLibrary] = None,
                 config: Optional[MiningConfig] = None, check: bool = False):
        self.graph = graph
        self.lib = lib
        self.config = config or MiningConfig()
        self.K = lib.K if lib is not None else 1.0
        self.occ = OccupancyMap(graph.num_vertices)
        self.patterns = PatternList()
        self.counters = Counters()
        self.growth: List[GrowthStep] = []
        self.check = check
        self._next_sid = 0
        self._next_gid = 0
        self._iteration = 0

    def _new_group(self, code, size, members) -> PatternGroup:
        g = PatternGroup(self._next_gid, code, size, members)
        self._next_gid += 1
        return g

    def _new_sub(self, gid, vertices, edge_ids) -> PatternSubgraph:
        s = PatternSubgraph(self._next_sid, gid, tuple(vertices), tuple(edge_ids))
        self._next_sid += 1
        return s

    def verify(self):
        self.occ.check(self.patterns)
        for g in self.patterns:
            for s in g.subgraphs:
                if len(s.vertices) != g.size or g.size > self.config.s_p:
                    raise AssertionError(f"subgraph {s.sid} size mismatch in {g.code}")

    def _seed(self) -> List[PatternGroup]:
        """Encode fan-in trees over FREE vertices, then keep non-overlapping
        trees, most frequent code first."""
        graph, owner, ct = self.graph, self.occ.owner, self.graph.cell_type
        code2trees: Dict[str, list] = defaultdict(list)
        for root in range(graph.num_vertices):
            if owner[root] != FREE:
                continue
            leaves = _leaves(graph, root, owner)
            if not leaves or len(leaves) + 1 > self.config.s_p:
                continue
            code = f"[{ct[root]}]" + "".join(c for c, _, _ in leaves)
            verts = [root] + [d for _, d, _ in leaves]
            eids = [x for _, _, es in leaves for x in es]
            code2trees[code].append((verts, eids))

        groups = []
        for code in sorted(code2trees, key=lambda c: (-len(code2trees[c]), c)):
            trees = code2trees[code]
            g = None
            for verts, eids in trees:
                if any(owner[v] != FREE for v in verts):
                    continue
                if g is None:
                    g = self._new_group(code, len(verts), tuple(ct[v] for v in verts))
                s = self._new_sub(g.gid, verts, eids)
                self.occ.occupy(s)
                g.add(s)
            if g is None:
                continue
            if len(g) < self.config.min_support:
                for s in g.subgraphs:
                    self.occ.release(s)
                continue
            groups.append(g)
        return groups

    def identify_initial_seeds(self) -> PatternList:
        for g in self._seed():
            self.patterns.add(g)
        self.patterns.sort()
        # Same coverage floor as after growth, so iteration 0 is scored like the rest.
        self._prune()
        if self.check:
            self.verify()
        return self.patterns

    def pattern_seed_supplement(self) -> List[PatternGroup]:
        return self._seed()

    def enumerate_neighbors(self, tgt: PatternGroup) -> NeighborIndex:
        graph, edges = self.graph, self.graph.edges
        owner, index, subs = self.occ.owner, self.occ.index, self.occ.subgraphs
        gid = tgt.gid
        code2nb: Dict[str, List[int]] = {}
        nb2sub: Dict[int, PatternSubgraph] = {}
        nb_edges: Dict[int, List[int]] = {}
        encoded = set()
        visits = 0
        for sub in tgt.subgraphs:
            sid = sub.sid

            def index_of(v, sid=sid):
                return index[v] if owner[v] == sid else None

            for u in sub.vertices:
                for adj, far in ((graph.preds[u], 0), (graph.succs[u], 1)):
                    for eid in adj:
                        visits += 1
                        e = edges[eid]
                        w = e.driver if far == 0 else e.sink
                        if w in encoded:
                            continue
                        o = owner[w]
                        if o != FREE and subs[o].group_id == gid:
                            continue
                        encoded.add(w)
                        code, eids = _neighbor_code(graph, w, index_of)
                        visits += len(graph.preds[w]) + len(graph.succs[w])
                        lst = code2nb.get(code)
                        if lst is None:
                            code2nb[code] = [w]
                        else:
                            lst.append(w)
                        nb2sub[w] = sub
                        nb_edges[w] = eids
        self.counters.edge_visits += visits
        return NeighborIndex(code2nb, nb2sub, nb_edges)

    def grow_pattern(self, tgt: PatternGroup, nbi: NeighborIndex) -> PatternList:
        if not nbi.code2neighbors:
            raise ValueError("grow_pattern needs at least one neighbor code")
        if tgt.size >= self.config.s_p:
            raise ValueError("target group is already at the size limit")
        occ, owner, subs = self.occ, self.occ.owner, self.occ.subgraphs
        ct = self.graph.cell_type
        code = min(nbi.code2neighbors, key=lambda c: (-len(nbi.code2neighbors[c]), c))
        before = len(tgt)
        new = self._new_group(f"{tgt.code}|{code}", tgt.size + 1, None)
        abandoned = 0
        visits = 0
        for w in nbi.code2neighbors[code]:
            visits += 1
            osub = nbi.neighbor2subgraph[w]
            if osub.abandoned:
                continue
            o = owner[w]
            if o != FREE:
                other = subs[o]
                other.abandoned = True
                self.patterns.by_id(other.group_id).remove(other)
                occ.release(other)
                visits += len(other.vertices)
                abandoned += 1
            if new.members is None:
                new.members = tgt.members + (ct[w],)
            s = self._new_sub(new.gid, osub.vertices + (w,),
                              osub.edge_ids + tuple(nbi.neighbor_edges[w]))
            osub.abandoned = True
            tgt.remove(osub)
            occ.release(osub)
            occ.occupy(s)
            visits += 2 * len(s.vertices)
            new.add(s)
        self.counters.vertex_visits += visits
        self.growth.append(GrowthStep(self._iteration, tgt.code, code, before, len(new),
                                      abandoned))

        self.patterns.drop_empty()
        if len(new):
            self.patterns.add(new)
        for g in self.pattern_seed_supplement():
            self.patterns.add(g)
        self.patterns.sort()
        self._prune()
        if self.check:
            self.verify()
        return self.patterns

    def _prune(self):
        limit = self.config.prune_ratio * self.graph.num_vertices
        low = [g for g in self.patterns
               if g.coverage < limit or len(g) < self.config.min_support]
        for g in low:
            for s in g.subgraphs:
                s.abandoned = True
                self.occ.release(s)
            self.patterns.remove(g)

    def _pick_target(self):
        for g in self.patterns:
            if g.mature:
                continue
            if g.size >= self.config.s_p:
                g.mature = True
                continue
            nbi = self.enumerate_neighbors(g)
            top = max((len(v) for v in nbi.code2neighbors.values()), default=0)
            if top < self.config.min_support:
                g.mature = True
                continue
            return g, nbi
        return None, None

    def _evaluate(self, history: RewardHistory):
        c = select_combination(self.patterns.groups, self.config.n_p, self.K)
        history.append(self._iteration, c, len(self.patterns))

    def run(self) -> MiningResult:
        t0 = time.perf_counter()
        history = RewardHistory()
        if self.graph.num_vertices:
            self.identify_initial_seeds()
        self._evaluate(history)
        while self._iteration < self.config.max_iterations:
            tgt, nbi = self._pick_target()
            if tgt is None:
                break
            self._iteration += 1
            self.grow_pattern(tgt, nbi)
            self._evaluate(history)
            log.debug("iteration %d: grew %s, reward %.4g, %d groups", self._iteration,
                      tgt.code, history.rewards[-1], len(self.patterns))
            if should_terminate(history):
                break
        best = history.best()
        return MiningResult(best.combination, history, self.growth, self._iteration,
                            time.perf_counter() - t0, list(self.patterns.groups),
                            best.iteration)


def mine(graph: NetlistGraph, lib: Optional[CellLibrary] = None,
         config: Optional[MiningConfig] = None, check: bool = False) -> MiningResult:
    """Run seed identification and the growth loop; return the best-reward
    combination seen across iterations."""
    return PatternMiner(graph, lib, config, check).run()
