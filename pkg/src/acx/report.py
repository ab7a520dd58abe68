"""Mining reports (JSON + CSV) and the saved mining-result file that lets
``rewrite``/``spice``/``report`` run without re-mining."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .combine import PatternCombination, group_saving
from .library import AreaModel, CellLibrary
from .mining import MiningConfig, MiningResult, PatternGroup, PatternSubgraph
from .netlist import Model, NetlistGraph

RESULT_FORMAT = 1


@dataclass
class GroupRow:
    name: str
    code: str
    size: int
    count: int
    coverage_pct: float
    saving_area: float


@dataclass
class MiningReport:
    design: str
    num_vertices: int
    original_area: float
    groups: List[GroupRow] = field(default_factory=list)
    iterations: int = 0
    best_iteration: int = 0
    fsm_seconds: Optional[float] = None
    rewards: List[float] = field(default_factory=list)

    @property
    def saving(self) -> float:
        return sum(g.saving_area for g in self.groups)

    @property
    def optimized_area(self) -> float:
        return self.original_area - self.saving

    @property
    def reduction_pct(self) -> float:
        if self.original_area <= 0:
            return 0.0
        return 100.0 * (self.original_area - self.optimized_area) / self.original_area

    @property
    def pattern_sizes(self) -> str:
        return "/".join(str(g.size) for g in self.groups)

    @property
    def coverage_pct(self) -> float:
        return sum(g.coverage_pct for g in self.groups)


def design_area(model: Model, lib: CellLibrary) -> float:
    return sum(lib[g.cell].area for g in model.gates)


def build_report(design: str, graph: NetlistGraph, lib: CellLibrary, model: AreaModel,
                 combination: PatternCombination, result: Optional[MiningResult] = None,
                 spice_paths: Optional[Dict[str, str]] = None,
                 names: Optional[Dict[str, str]] = None) -> MiningReport:
    from .emit import custom_cell_name

    spice_paths = spice_paths or {}
    n = max(graph.num_vertices, 1)
    rows = []
    for g in combination.groups:
        per = group_saving(g, lib, model, spice_paths.get(g.code))
        rows.append(GroupRow((names or {}).get(g.code) or custom_cell_name(g.code), g.code,
                             g.size, len(g), 100.0 * g.coverage / n, per * len(g)))
    rep = MiningReport(design, graph.num_vertices, design_area(graph.model, lib), rows)
    if result is not None:
        rep.iterations = result.iterations
        rep.best_iteration = result.best_iteration
        rep.fsm_seconds = result.fsm_seconds
        rep.rewards = result.history.rewards
    return rep


def report_dict(rep: MiningReport) -> dict:
    return {
        "design": rep.design,
        "original_area": rep.original_area,
        "optimized_area": rep.optimized_area,
        "reduction_pct": rep.reduction_pct,
        "iterations": rep.iterations,
        "fsm_seconds": rep.fsm_seconds,
        "pattern_sizes": rep.pattern_sizes,
        "pattern_cov_pct": rep.coverage_pct,
        "num_vertices": rep.num_vertices,
        "best_iteration": rep.best_iteration,
        "rewards": rep.rewards,
        "groups": [
            {"name": g.name, "code": g.code, "size": g.size, "count": g.count,
             "coverage_pct": g.coverage_pct, "saving_area": g.saving_area}
            for g in rep.groups
        ],
    }


def emit_report(rep: MiningReport) -> str:
    return json.dumps(report_dict(rep), indent=2) + "\n"


CSV_FIELDS = ["name", "code", "size", "count", "coverage_pct", "saving_area"]


def emit_csv(rep: MiningReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for g in rep.groups:
        w.writerow([g.name, g.code, g.size, g.count, repr(g.coverage_pct), repr(g.saving_area)])
    return buf.getvalue()


def load_report(text: str) -> MiningReport:
    d = json.loads(text)
    rows = [GroupRow(g["name"], g["code"], g["size"], g["count"], g["coverage_pct"],
                     g["saving_area"]) for g in d["groups"]]
    return MiningReport(d["design"], d.get("num_vertices", 0), d["original_area"], rows,
                        d.get("iterations", 0), d.get("best_iteration", 0),
                        d.get("fsm_seconds"), d.get("rewards", []))


def dump_result(design: str, result: MiningResult, config: MiningConfig,
                graph: NetlistGraph) -> str:
    """Serialize the best combination with every occurrence's vertices and edges."""
    groups = []
    for g in result.best.groups:
        groups.append({
            "code": g.code, "size": g.size, "members": list(g.members),
            "subgraphs": [{"vertices": list(s.vertices), "edges": list(s.edge_ids)}
                          for s in g.subgraphs],
        })
    d = {
        "format": RESULT_FORMAT,
        "design": design,
        "num_vertices": graph.num_vertices,
        "num_edges": len(graph.edges),
        "config": {"n_p": config.n_p, "s_p": config.s_p, "prune_ratio": config.prune_ratio,
                   "max_iterations": config.max_iterations},
        "iterations": result.iterations,
        "best_iteration": result.best_iteration,
        "fsm_seconds": result.fsm_seconds,
        "rewards": result.history.rewards,
        "growth": [{"iteration": s.iteration, "target": s.target_code,
                    "neighbor": s.neighbor_code, "target_count": s.target_count,
                    "new_count": s.new_count, "abandoned": s.abandoned}
                   for s in result.growth],
        "groups": groups,
    }
    return json.dumps(d, indent=1) + "\n"


class ResultError(ValueError):
    pass


def load_result(text: str, graph: NetlistGraph) -> tuple:
    """Rebuild (design, combination, raw dict) against ``graph``; the graph
    must be the one the result was mined from."""
    d = json.loads(text)
    if d.get("format") != RESULT_FORMAT:
        raise ResultError("unsupported result file format")
    if d["num_vertices"] != graph.num_vertices or d["num_edges"] != len(graph.edges):
        raise ResultError("result file does not match this netlist")
    groups = []
    sid = 0
    for gid, gd in enumerate(d["groups"]):
        g = PatternGroup(gid, gd["code"], gd["size"], tuple(gd["members"]))
        for sd in gd["subgraphs"]:
            verts = tuple(sd["vertices"])
            if tuple(graph.cell_type[v] for v in verts) != g.members:
                raise ResultError(f"occurrence cell types disagree with pattern {g.code}")
            g.add(PatternSubgraph(sid, gid, verts, tuple(sd["edges"])))
            sid += 1
        groups.append(g)
    c = PatternCombination(groups)
    rewards = d.get("rewards") or []
    if d.get("best_iteration", 0) < len(rewards):
        c.reward_approx = rewards[d["best_iteration"]]
    return d["design"], c, d
