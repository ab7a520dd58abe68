"""Technology-mapped BLIF netlists and the labeled cell graph mined for patterns.

Supported BLIF subset: ``.model .inputs .outputs .gate .subckt .latch .end``.
``.names`` covers are rejected because the miner only works on mapped cells.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

from .library import CellLibrary

log = logging.getLogger(__name__)

Conns = Tuple[Tuple[str, str], ...]


class BlifError(ValueError):
    pass


class NetlistError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    cell: str
    conns: Conns  # (pin, net) in file order

    def net(self, pin: str) -> Optional[str]:
        for p, n in self.conns:
            if p == pin:
                return n
        return None


@dataclass(frozen=True)
class Subckt:
    model: str
    conns: Conns


@dataclass(frozen=True)
class Latch:
    input: str
    output: str
    kind: Optional[str] = None
    clock: Optional[str] = None
    init: Optional[str] = None


@dataclass
class Model:
    name: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    gates: List[Gate] = field(default_factory=list)
    subckts: List[Subckt] = field(default_factory=list)
    latches: List[Latch] = field(default_factory=list)

    @property
    def is_flat(self) -> bool:
        return not self.subckts


@dataclass
class HierNetlist:
    models: Dict[str, Model]
    top: str

    @property
    def top_model(self) -> Model:
        return self.models[self.top]


def _logical_lines(text: str):
    """Yield (lineno, tokens), joining backslash continuations and dropping comments."""
    buf: List[str] = []
    start = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if start is None:
            start = lineno
        if line.endswith("\\"):
            buf.append(line[:-1])
            continue
        buf.append(line)
        toks = " ".join(buf).split()
        buf = []
        if toks:
            yield start, toks
        start = None
    if buf:
        toks = " ".join(buf).split()
        if toks:
            yield start, toks


def _conns(toks, lineno) -> Conns:
    out = []
    for t in toks:
        pin, eq, net = t.partition("=")
        if not eq or not pin or not net:
            raise BlifError(f"line {lineno}: expected <pin>=<net>, got {t!r}")
        out.append((pin, net))
    return tuple(out)


def parse_blif(text: str) -> HierNetlist:
    models: Dict[str, Model] = {}
    order: List[str] = []
    cur: Optional[Model] = None
    sub_lines: List[Tuple[str, Subckt, int]] = []

    for lineno, toks in _logical_lines(text):
        kw = toks[0]
        if kw == ".model":
            if cur is not None:
                raise BlifError(f"line {lineno}: .model {cur.name} is missing .end")
            if len(toks) != 2:
                raise BlifError(f"line {lineno}: .model takes one name")
            if toks[1] in models:
                raise BlifError(f"line {lineno}: duplicate model {toks[1]!r}")
            cur = Model(toks[1])
            models[cur.name] = cur
            order.append(cur.name)
            continue
        if cur is None:
            raise BlifError(f"line {lineno}: {kw} outside of a .model")
        if kw == ".inputs":
            cur.inputs.extend(toks[1:])
        elif kw == ".outputs":
            cur.outputs.extend(toks[1:])
        elif kw == ".gate":
            if len(toks) < 2:
                raise BlifError(f"line {lineno}: .gate needs a cell name")
            cur.gates.append(Gate(toks[1], _conns(toks[2:], lineno)))
        elif kw == ".subckt":
            if len(toks) < 2:
                raise BlifError(f"line {lineno}: .subckt needs a model name")
            s = Subckt(toks[1], _conns(toks[2:], lineno))
            cur.subckts.append(s)
            sub_lines.append((cur.name, s, lineno))
        elif kw == ".latch":
            args = toks[1:]
            if len(args) == 2:
                cur.latches.append(Latch(*args))
            elif len(args) == 3:
                cur.latches.append(Latch(args[0], args[1], init=args[2]))
            elif len(args) in (4, 5):
                cur.latches.append(Latch(*args))
            else:
                raise BlifError(f"line {lineno}: malformed .latch")
        elif kw == ".end":
            cur = None
        elif kw == ".names":
            raise BlifError(f"line {lineno}: unmapped logic; run technology mapping")
        else:
            raise BlifError(f"line {lineno}: unsupported construct {kw!r}")

    if cur is not None:
        raise BlifError(f"model {cur.name!r} is missing .end")
    if not order:
        raise BlifError("no .model found")

    for parent, s, lineno in sub_lines:
        child = models.get(s.model)
        if child is None:
            raise BlifError(f"line {lineno}: .subckt references unknown model {s.model!r}")
        ports = set(child.inputs) | set(child.outputs)
        for pin, _ in s.conns:
            if pin not in ports:
                raise BlifError(
                    f"line {lineno}: dangling net reference, model {s.model!r} has no port {pin!r}")
    for m in models.values():
        used = set(m.inputs)
        for g in m.gates:
            used.update(n for _, n in g.conns)
        for s in m.subckts:
            used.update(n for _, n in s.conns)
        for l in m.latches:
            used.update((l.input, l.output))
        for o in m.outputs:
            if o not in used:
                raise BlifError(f"model {m.name!r}: dangling net reference, output {o!r} is "
                                "never connected")
    _check_acyclic_hierarchy(models, order[0])
    return HierNetlist(models, order[0])


def _check_acyclic_hierarchy(models, top):
    state: Dict[str, int] = {}

    def visit(name):
        if state.get(name) == 1:
            raise BlifError(f"recursive instantiation of model {name!r}")
        if state.get(name) == 2:
            return
        state[name] = 1
        for s in models[name].subckts:
            visit(s.model)
        state[name] = 2

    visit(top)


def _fmt_conns(conns: Conns) -> str:
    return " ".join(f"{p}={n}" for p, n in conns)


def write_blif(h: HierNetlist) -> str:
    names = [h.top] + [n for n in h.models if n != h.top]
    out = []
    for name in names:
        m = h.models[name]
        out.append(f".model {m.name}")
        if m.inputs:
            out.append(".inputs " + " ".join(m.inputs))
        if m.outputs:
            out.append(".outputs " + " ".join(m.outputs))
        for g in m.gates:
            out.append(f".gate {g.cell} {_fmt_conns(g.conns)}".rstrip())
        for s in m.subckts:
            out.append(f".subckt {s.model} {_fmt_conns(s.conns)}".rstrip())
        for l in m.latches:
            args = [l.input, l.output]
            if l.kind is not None:
                args += [l.kind, l.clock]
            if l.init is not None:
                args.append(l.init)
            out.append(".latch " + " ".join(args))
        out.append(".end")
        out.append("")
    return "\n".join(out)


def _instance_names(model: Model) -> List[str]:
    counts = Counter(s.model for s in model.subckts)
    seen: Counter = Counter()
    names = []
    for s in model.subckts:
        if counts[s.model] == 1:
            names.append(s.model)
        else:
            names.append(f"{s.model}_{seen[s.model]}")
            seen[s.model] += 1
    return names


def _flatten_into(h: HierNetlist, model: Model, prefix: str, netmap: Dict[str, str],
                  out: Model):
    def rn(net):
        got = netmap.get(net)
        if got is None:
            got = prefix + net
            netmap[net] = got
        return got

    for g in model.gates:
        out.gates.append(Gate(g.cell, tuple((p, rn(n)) for p, n in g.conns)))
    for l in model.latches:
        out.latches.append(Latch(rn(l.input), rn(l.output), l.kind,
                                 rn(l.clock) if l.clock not in (None, "NIL") else l.clock,
                                 l.init))
    for inst, s in zip(_instance_names(model), model.subckts):
        child = h.models[s.model]
        child_map = {port: rn(net) for port, net in s.conns}
        _flatten_into(h, child, f"{prefix}{inst}/", child_map, out)


def flatten(h: HierNetlist, model: Optional[str] = None) -> Model:
    """Flatten ``model`` (default: top). Nets local to an instance are prefixed
    with the instance path; port nets take the parent's name."""
    m = h.models[model or h.top]
    out = Model(m.name, list(m.inputs), list(m.outputs))
    _flatten_into(h, m, "", {n: n for n in m.inputs + m.outputs}, out)
    return out


def hierarchy_depth(h: HierNetlist, model: Optional[str] = None) -> int:
    m = h.models[model or h.top]
    if not m.subckts:
        return 0
    return 1 + max(hierarchy_depth(h, s.model) for s in m.subckts)


def _instances_at(h: HierNetlist, model: Model, path: str, depth: int):
    if depth == 0:
        yield path, model
        return
    for inst, s in zip(_instance_names(model), model.subckts):
        yield from _instances_at(h, h.models[s.model], f"{path}/{inst}" if path else inst,
                                 depth - 1)


def partition(h: HierNetlist, depth: int) -> List[Tuple[str, HierNetlist]]:
    """One flattened netlist per instance exactly ``depth`` levels below top.

    A partition's ports are the instance's model ports, so nets crossing the
    partition boundary become its primary I/O.
    """
    if depth < 0:
        raise ValueError("partition depth must be non-negative")
    max_depth = hierarchy_depth(h)
    if depth > max_depth:
        log.warning("requested partition depth %d exceeds hierarchy depth %d; using %d",
                    depth, max_depth, max_depth)
        depth = max_depth
    if depth == 0:
        flat = flatten(h)
        return [(h.top, HierNetlist({flat.name: flat}, flat.name))]
    parts = []
    for path, model in _instances_at(h, h.top_model, "", depth):
        flat = flatten(h, model.name)
        flat.name = path
        parts.append((path, HierNetlist({path: flat}, path)))
    return parts


class Edge(NamedTuple):
    driver: int
    sink: int
    out_pin: str
    in_pin: str
    in_canon: str  # in_pin after equivalent-pin canonicalization


class NetlistGraph:
    """Labeled directed cell graph: one vertex per combinational gate, one
    edge per (driver output pin, sink input pin) pair sharing a net.

    Vertex ids are dense and follow gate order in the flat model;
    ``gate_index[v]`` maps back to ``model.gates``.
    """

    def __init__(self, model: Model, cell_type: List[str], gate_index: List[int],
                 edges: List[Edge], boundary_nets: FrozenSet[str]):
        self.model = model
        self.cell_type = cell_type
        self.gate_index = gate_index
        self.edges = edges
        self.boundary_nets = boundary_nets
        n = len(cell_type)
        self.preds: List[List[int]] = [[] for _ in range(n)]
        self.succs: List[List[int]] = [[] for _ in range(n)]
        for eid, e in enumerate(edges):
            self.succs[e.driver].append(eid)
            self.preds[e.sink].append(eid)

    @property
    def num_vertices(self) -> int:
        return len(self.cell_type)

    @property
    def vertices(self):
        return [{"id": v, "cell_type": c} for v, c in enumerate(self.cell_type)]

    def gate(self, v: int) -> Gate:
        return self.model.gates[self.gate_index[v]]

    def __repr__(self):
        return f"NetlistGraph(|V|={len(self.cell_type)}, |E|={len(self.edges)})"


def build_graph(n: Model, lib: CellLibrary) -> NetlistGraph:
    if isinstance(n, HierNetlist):
        if len(n.models) != 1 and not n.top_model.is_flat:
            raise NetlistError("build_graph needs a flat netlist; flatten or partition first")
        n = n.top_model
    if not n.is_flat:
        raise NetlistError("build_graph needs a flat netlist; flatten or partition first")

    cell_type: List[str] = []
    gate_index: List[int] = []
    vertex_of: Dict[int, int] = {}
    drivers: Dict[str, Tuple[int, str]] = {}  # net -> (vertex or -1, pin)
    boundary = set(n.inputs) | set(n.outputs)

    def drive(net, who, what):
        if net in drivers:
            raise NetlistError(f"net {net!r} driven by two outputs ({what} and an earlier one)")
        drivers[net] = who

    for net in n.inputs:
        drivers[net] = (-1, "")
    for gi, g in enumerate(n.gates):
        cell = lib[g.cell]
        for pin, net in g.conns:
            if not (cell.is_input(pin) or cell.is_output(pin)):
                raise NetlistError(f"gate #{gi} ({g.cell}) has no pin {pin!r}")
        if cell.is_sequential:
            for pin, net in g.conns:
                boundary.add(net)
                if cell.is_output(pin):
                    drive(net, (-1, pin), f"{g.cell}.{pin}")
            continue
        v = len(cell_type)
        vertex_of[gi] = v
        cell_type.append(g.cell)
        gate_index.append(gi)
        for pin, net in g.conns:
            if cell.is_output(pin):
                drive(net, (v, pin), f"{g.cell}.{pin}")
    for l in n.latches:
        boundary.update((l.input, l.output))
        drive(l.output, (-1, ""), "latch")

    edges: List[Edge] = []
    for v, gi in enumerate(gate_index):
        g = n.gates[gi]
        cell = lib[g.cell]
        for pin, net in g.conns:
            if not cell.is_input(pin):
                continue
            d = drivers.get(net)
            if d is None or d[0] < 0:
                continue
            edges.append(Edge(d[0], v, d[1], pin, cell.canonical(pin)))
    return NetlistGraph(n, cell_type, gate_index, edges, frozenset(boundary))
