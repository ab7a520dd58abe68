"""Custom cells for selected pattern groups: interface derivation with
internal-pin removal, merged SPICE subcircuits, and netlist rewriting."""

from __future__ import annotations

import hashlib
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .library import AreaModel, CellLibrary, CellType, merged_cell_area
from .mining import PatternGroup, PatternSubgraph
from .netlist import Gate, HierNetlist, Model, NetlistGraph


class EmitError(RuntimeError):
    pass


def custom_cell_name(code: str) -> str:
    return "ACX_" + hashlib.sha256(code.encode()).hexdigest()[:8]


def port_name(idx: int, pin: str) -> str:
    return f"{pin}_{idx}"


@dataclass
class CustomCellSpec:
    """Interface and internal wiring of one custom cell.

    ``internal`` lists (driver index, out pin, sink index, sink pin) wires
    inside the cell, using the cell's own (template) pin names.
    ``bindings`` holds, per occurrence, port name -> net (None if unconnected).
    """
    name: str
    code: str
    members: Tuple[str, ...]
    external_pins: List[Tuple[int, str, str]]  # (member index, pin, "in"/"out")
    internal: List[Tuple[int, str, int, str]]
    internal_nets: List[Tuple[int, str]]       # member outputs hidden inside the cell
    occurrences: List[Tuple[int, ...]] = field(default_factory=list)  # vertex ids
    occurrence_gates: List[Tuple[int, ...]] = field(default_factory=list)  # flat gate indices
    bindings: List[Dict[str, Optional[str]]] = field(default_factory=list)
    group: Optional[PatternGroup] = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def inputs(self) -> List[str]:
        return [port_name(i, p) for i, p, d in self.external_pins if d == "in"]

    @property
    def outputs(self) -> List[str]:
        return [port_name(i, p) for i, p, d in self.external_pins if d == "out"]

    @property
    def ports(self) -> List[str]:
        return self.inputs + self.outputs


def _sink_counts(model: Model, lib: CellLibrary) -> Counter:
    """Sink connections per net: gate inputs of any cell, latch inputs and
    clocks, and primary outputs."""
    fan: Counter = Counter()
    for g in model.gates:
        cell = lib[g.cell]
        for pin, net in g.conns:
            if cell.is_input(pin):
                fan[net] += 1
    for l in model.latches:
        fan[l.input] += 1
        if l.clock not in (None, "NIL"):
            fan[l.clock] += 1
    for o in model.outputs:
        fan[o] += 1
    return fan


def _class_of(cell: CellType) -> Dict[str, Tuple[str, ...]]:
    out = {}
    for cls in cell.equiv_classes:
        s = tuple(sorted(cls))
        for p in cls:
            out[p] = s
    return out


def _occurrence_pin_map(graph: NetlistGraph, sub: PatternSubgraph,
                        classes: List[Dict[str, Tuple[str, ...]]],
                        template_internal: Dict[Tuple[int, Tuple[str, ...]], List[str]]):
    """Per member index: actual input pin -> template pin, plus the actual
    pins fed by accumulated edges (keyed by (driver idx, out pin))."""
    pos = {v: i for i, v in enumerate(sub.vertices)}
    fed: Dict[Tuple[int, Tuple[str, ...]], List[Tuple[int, str, str]]] = defaultdict(list)
    for eid in sub.edge_ids:
        e = graph.edges[eid]
        j = pos[e.sink]
        fed[(j, classes[j][e.in_pin])].append((pos[e.driver], e.out_pin, e.in_pin))
    maps = []
    for j in range(len(sub.vertices)):
        m: Dict[str, str] = {}
        for cls in dict.fromkeys(classes[j].values()):
            tmpl_int = template_internal.get((j, cls), [])
            actual_int = [p for _, _, p in sorted(fed.get((j, cls), []))]
            if len(actual_int) != len(tmpl_int):
                raise EmitError(f"occurrence {sub.sid} does not match its pattern wiring")
            for a, t in zip(actual_int, tmpl_int):
                m[a] = t
            rest_a = [p for p in cls if p not in m]
            rest_t = [p for p in cls if p not in tmpl_int]
            for a, t in zip(rest_a, rest_t):
                m[a] = t
        maps.append(m)
    return maps


def build_custom_cell(group: PatternGroup, graph: NetlistGraph, lib: CellLibrary) -> CustomCellSpec:
    subs = group.subgraphs
    if not subs:
        raise EmitError(f"group {group.code} has no occurrences")
    members = tuple(group.members)
    cells = [lib[c] for c in members]
    classes = [_class_of(c) for c in cells]

    # Template wiring: each internal edge landing on class C of member j takes
    # the next unused pin of C, in (driver index, out pin) order.
    first = subs[0]
    labels = sorted((t, f, o, i) for f, t, o, i in first.edges(graph))
    by_class: Dict[Tuple[int, Tuple[str, ...]], List[Tuple[int, str]]] = defaultdict(list)
    for t, f, o, i in labels:
        by_class[(t, classes[t][i])].append((f, o))
    template_internal: Dict[Tuple[int, Tuple[str, ...]], List[str]] = {}
    internal: List[Tuple[int, str, int, str]] = []
    for (t, cls), drivers in sorted(by_class.items()):
        drivers.sort()
        if len(drivers) > len(cls):
            raise EmitError(f"pattern {group.code}: more internal wires than pins")
        pins = list(cls[:len(drivers)])
        template_internal[(t, cls)] = pins
        for (f, o), p in zip(drivers, pins):
            internal.append((f, o, t, p))
    internal.sort()

    fan = _sink_counts(graph.model, lib)
    boundary_outs = set(graph.model.outputs)
    internal_fed = {(t, p) for _, _, t, p in internal}
    occurrences = []
    pin_maps = []
    exposed_outputs = set()
    for s in subs:
        pm = _occurrence_pin_map(graph, s, classes, template_internal)
        pin_maps.append(pm)
        occurrences.append(s.vertices)
        inner = Counter()
        pos = {v: i for i, v in enumerate(s.vertices)}
        for eid in s.edge_ids:
            e = graph.edges[eid]
            inner[(pos[e.driver], e.out_pin)] += 1
        for j, v in enumerate(s.vertices):
            g = graph.gate(v)
            for p in cells[j].output_pins:
                net = g.net(p)
                if net is None:
                    continue
                if net in boundary_outs or fan[net] != inner[(j, p)]:
                    exposed_outputs.add((j, p))

    external = []
    hidden = []
    for j, c in enumerate(cells):
        for p in c.input_pins:
            if (j, p) not in internal_fed:
                external.append((j, p, "in"))
    for j, c in enumerate(cells):
        for p in c.output_pins:
            if (j, p) in exposed_outputs:
                external.append((j, p, "out"))
            else:
                hidden.append((j, p))

    bindings = []
    for s, pm in zip(subs, pin_maps):
        b: Dict[str, Optional[str]] = {}
        for j, v in enumerate(s.vertices):
            g = graph.gate(v)
            inv = {t: a for a, t in pm[j].items()}
            for jj, p, d in external:
                if jj != j:
                    continue
                actual = inv.get(p, p) if d == "in" else p
                b[port_name(j, p)] = g.net(actual)
        bindings.append(b)

    return CustomCellSpec(custom_cell_name(group.code), group.code, members, external,
                          internal, hidden, occurrences,
                          [tuple(graph.gate_index[v] for v in occ) for occ in occurrences],
                          bindings, group)


_SUBCKT_RE = re.compile(r"^\s*\.subckt\s+(\S+)((?:\s+[^\s=]+)*)", re.IGNORECASE)


def _subckt_ports(cell: CellType) -> List[str]:
    if not cell.spice_body:
        raise EmitError(f"cell {cell.name} has no SPICE body in the library")
    for line in cell.spice_body.splitlines():
        m = _SUBCKT_RE.match(line)
        if m and m.group(1).upper() == cell.name.upper():
            return m.group(2).split()
    raise EmitError(f"SPICE body of {cell.name} has no .SUBCKT {cell.name} line")


def generate_spice(spec: CustomCellSpec, lib: CellLibrary, include_members: bool = True) -> str:
    """``.SUBCKT`` for the custom cell instantiating each member cell.

    Member pins that are not logical pins (supplies, bulk) become shared ports
    appended after the logical ports.
    """
    cells = [lib[m] for m in spec.members]
    headers = [_subckt_ports(c) for c in cells]
    supplies: List[str] = []
    for c, hdr in zip(cells, headers):
        for p in hdr:
            if not (c.is_input(p) or c.is_output(p)) and p not in supplies:
                supplies.append(p)

    out_net: Dict[Tuple[int, str], str] = {}
    for j, p in spec.internal_nets:
        out_net[(j, p)] = f"n{j}_{p}"
    for j, p, d in spec.external_pins:
        if d == "out":
            out_net[(j, p)] = port_name(j, p)
    in_net: Dict[Tuple[int, str], str] = {}
    for f, o, t, p in spec.internal:
        in_net[(t, p)] = out_net[(f, o)]
    for j, p, d in spec.external_pins:
        if d == "in":
            in_net[(j, p)] = port_name(j, p)

    lines = [f"* custom cell {spec.name}: {spec.code}",
             f".SUBCKT {spec.name} " + " ".join(spec.ports + supplies)]
    for j, (c, hdr) in enumerate(zip(cells, headers)):
        nets = []
        for p in hdr:
            if c.is_input(p):
                nets.append(in_net[(j, p)])
            elif c.is_output(p):
                nets.append(out_net[(j, p)])
            else:
                nets.append(p)
        lines.append(f"X{j} " + " ".join(nets) + f" {c.name}")
    lines.append(f".ENDS {spec.name}")
    text = "\n".join(lines) + "\n"
    if include_members:
        seen = []
        for c in cells:
            if c.name not in seen:
                seen.append(c.name)
        text += "".join("\n" + lib[n].spice_body.rstrip("\n") + "\n" for n in seen)
    return text


def custom_cell_type(spec: CustomCellSpec, lib: CellLibrary, model: AreaModel,
                     spice_path: Optional[str] = None) -> CellType:
    members = [lib[m] for m in spec.members]
    body = None
    if all(c.spice_body for c in members):
        body = generate_spice(spec, lib, include_members=False)
    return CellType(spec.name, tuple(spec.inputs), tuple(spec.outputs),
                    tuple((p,) for p in spec.inputs), merged_cell_area(model, members, spice_path),
                    False, body)


def rewrite_netlist(n: Model, specs: Sequence[CustomCellSpec]) -> HierNetlist:
    """Replace each occurrence with one custom-cell ``.gate`` placed where its
    first member gate was. Other gates and latches are untouched."""
    if isinstance(n, HierNetlist):
        n = n.top_model
    owner: Dict[int, Tuple[CustomCellSpec, int]] = {}
    for spec in specs:
        for k, occ in enumerate(spec.occurrence_gates):
            for gi in occ:
                if gi in owner:
                    raise EmitError(f"gate #{gi} claimed by two pattern occurrences")
                owner[gi] = (spec, k)
    placed = set()
    gates: List[Gate] = []
    for gi, g in enumerate(n.gates):
        hit = owner.get(gi)
        if hit is None:
            gates.append(g)
            continue
        key = (hit[0].name, hit[1])
        if key in placed:
            continue
        placed.add(key)
        spec, k = hit
        b = spec.bindings[k]
        gates.append(Gate(spec.name, tuple((p, b[p]) for p in spec.ports if b.get(p) is not None)))
    m = Model(n.name, list(n.inputs), list(n.outputs), gates, [], list(n.latches))
    return HierNetlist({m.name: m}, m.name)


def expand_netlist(n: Model, specs: Iterable[CustomCellSpec]) -> Model:
    """Inverse of :func:`rewrite_netlist`: each custom-cell gate becomes its
    member gates, hidden signals get fresh local net names."""
    if isinstance(n, HierNetlist):
        n = n.top_model
    by_name = {s.name: s for s in specs}
    gates: List[Gate] = []
    k = 0
    for g in n.gates:
        spec = by_name.get(g.cell)
        if spec is None:
            gates.append(g)
            continue
        bound = dict(g.conns)
        out_net: Dict[Tuple[int, str], Optional[str]] = {}
        for j, p in spec.internal_nets:
            out_net[(j, p)] = f"_acx{k}_{j}_{p}"
        for j, p, d in spec.external_pins:
            if d == "out":
                out_net[(j, p)] = bound.get(port_name(j, p))
        in_net: Dict[Tuple[int, str], Optional[str]] = {}
        for f, o, t, p in spec.internal:
            in_net[(t, p)] = out_net[(f, o)]
        for j, p, d in spec.external_pins:
            if d == "in":
                in_net[(j, p)] = bound.get(port_name(j, p))
        pins_of = defaultdict(list)
        for j, p, d in spec.external_pins:
            pins_of[j].append((p, d))
        for j, p in spec.internal_nets:
            pins_of[j].append((p, "out"))
        for f, o, t, p in spec.internal:
            pins_of[t].append((p, "in"))
        for j, cell in enumerate(spec.members):
            conns = []
            for p, d in sorted(pins_of[j], key=lambda x: (x[1] != "in", x[0])):
                net = in_net[(j, p)] if d == "in" else out_net[(j, p)]
                if net is not None:
                    conns.append((p, net))
            gates.append(Gate(cell, tuple(conns)))
        k += 1
    return Model(n.name, list(n.inputs), list(n.outputs), gates, list(n.subckts),
                 list(n.latches))
