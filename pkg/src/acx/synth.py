"""Seeded synthetic netlists with planted isomorphic gate clusters.

Planted occurrences are embedded in random combinational filler (plus a few
flip-flops) and recorded in a ground-truth dict, so recovery can be scored.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

# name: (area um^2, inputs, equiv classes, pull-down network, output inverter)
# Pull-down networks are nested ("s"|"p", ...) series/parallel trees of inputs.
_CELLS = {
    "INVX1": (0.532, "A", ["A"], "A", False),
    "BUFX2": (0.798, "A", ["A"], "A", True),
    "NAND2X1": (0.798, "AB", ["AB"], ("s", "A", "B"), False),
    "NOR2X1": (0.798, "AB", ["AB"], ("p", "A", "B"), False),
    "AND2X2": (1.064, "AB", ["AB"], ("s", "A", "B"), True),
    "OR2X1": (1.064, "AB", ["AB"], ("p", "A", "B"), True),
    "NAND3X1": (1.064, "ABC", ["ABC"], ("s", "A", "B", "C"), False),
    "NOR3X1": (1.064, "ABC", ["A", "B", "C"], ("p", "A", "B", "C"), False),
    "OR3X1": (1.330, "ABC", ["ABC"], ("p", "A", "B", "C"), True),
    "AOI21X1": (1.064, "ABC", ["AB", "C"], ("p", ("s", "A", "B"), "C"), False),
    "OAI21X1": (1.064, "ABC", ["AB", "C"], ("s", ("p", "A", "B"), "C"), False),
}
_DFF_AREA = 4.522
SYNTH_K = 0.2


def _dual(net):
    if isinstance(net, str):
        return net
    kind = "p" if net[0] == "s" else "s"
    return (kind,) + tuple(_dual(x) for x in net[1:])


class _Mos:
    def __init__(self, name):
        self.name = name
        self.lines: List[str] = []
        self.k = 0

    def fresh(self):
        self.k += 1
        return f"n{self.k}"

    def build(self, net, top, bot, typ, bulk):
        # Series stacks get intermediate diffusion nodes, parallel branches share ends.
        if isinstance(net, str):
            model, w = ("NMOS_VTL", "0.09u") if typ == "n" else ("PMOS_VTL", "0.135u")
            self.lines.append(f"M{len(self.lines)} {top} {net} {bot} {bulk} {model} "
                              f"W={w} L=0.05u")
        elif net[0] == "s":
            nodes = [top] + [self.fresh() for _ in net[2:]] + [bot]
            for i, sub in enumerate(net[1:]):
                self.build(sub, nodes[i], nodes[i + 1], typ, bulk)
        else:
            for sub in net[1:]:
                self.build(sub, top, bot, typ, bulk)


def cmos_subckt(name: str, inputs: str, pulldown, out_inv: bool) -> str:
    m = _Mos(name)
    core = "Y" if not out_inv else "yb"
    m.build(pulldown, core, "GND", "n", "GND")
    m.build(_dual(pulldown), "VDD", core, "p", "VDD")
    if out_inv:
        m.build("yb", "Y", "GND", "n", "GND")
        m.build("yb", "VDD", "Y", "p", "VDD")
    ports = " ".join(list(inputs) + ["Y", "VDD", "GND"])
    return "\n".join([f".SUBCKT {name} {ports}"] + m.lines + [f".ENDS {name}"]) + "\n"


def synthetic_library_text(name: str = "synth45") -> str:
    out = [f"# synthetic CMOS library", f"library {name} K={SYNTH_K}"]
    for cell, (area, ins, classes, pd, inv) in _CELLS.items():
        out.append(f"cell {cell} area={area}")
        out.append("  in " + " ".join(ins))
        out.append("  out Y")
        for cls in classes:
            if len(cls) > 1:
                out.append("  equiv " + " ".join(cls))
        out.append("  spice <<EOF")
        out.append(cmos_subckt(cell, ins, pd, inv).rstrip("\n"))
        out.append("EOF")
        out.append("end")
    out.append(f"cell DFFX1 area={_DFF_AREA} seq")
    out.append("  in D CLK")
    out.append("  out Q")
    out.append("end")
    return "\n".join(out) + "\n"


COMB_CELLS = list(_CELLS)


@dataclass
class PatternTemplate:
    cells: List[str]                            # index 0 is the root
    wires: List[Tuple[int, int, str]]           # (child, parent, parent input pin)

    def to_dict(self):
        return {"cells": self.cells,
                "wires": [{"driver": c, "sink": p, "pin": pin} for c, p, pin in self.wires]}


def random_pattern(rng: random.Random, size: int) -> PatternTemplate:
    """In-tree of ``size`` cells whose root inputs are all driven inside the pattern."""
    if size < 2:
        raise ValueError("planted pattern size must be >= 2")
    roots = [c for c in COMB_CELLS if len(_CELLS[c][1]) <= size - 1]
    cells = [rng.choice(roots)]
    wires = []
    free: List[Tuple[int, str]] = []
    for pin in _CELLS[cells[0]][1]:
        k = len(cells)
        cells.append(rng.choice(COMB_CELLS))
        wires.append((k, 0, pin))
        free.extend((k, p) for p in _CELLS[cells[k]][1])
    while len(cells) < size:
        j = rng.randrange(len(free))
        parent, pin = free.pop(j)
        k = len(cells)
        cells.append(rng.choice(COMB_CELLS))
        wires.append((k, parent, pin))
        free.extend((k, p) for p in _CELLS[cells[k]][1])
    return PatternTemplate(cells, wires)


class InfeasibleSpec(ValueError):
    pass


def generate(seed: int, vertices: int, pattern_size: int, occurrences: int,
             dff_ratio: float = 0.02, fanout_prob: float = 0.1,
             pattern: Optional[PatternTemplate] = None) -> Tuple[str, Dict]:
    """Return (BLIF text, ground truth). ``vertices`` counts combinational gates."""
    if occurrences * pattern_size > vertices:
        raise InfeasibleSpec(f"{occurrences} x {pattern_size} planted cells exceed the "
                             f"{vertices}-cell budget")
    rng = random.Random(seed)
    pat = pattern or random_pattern(rng, pattern_size)
    filler = vertices - occurrences * pattern_size
    n_pi = max(4, vertices // 20)
    pool = [f"pi{i}" for i in range(n_pi)]
    n_dff = int(round(dff_ratio * vertices))
    gates: List[str] = []
    dffs: List[Tuple[str, str]] = []
    sinks: Dict[str, int] = {}
    planted = []
    vid = 0
    netk = 0

    def net():
        nonlocal netk
        netk += 1
        return f"n{netk}"

    def pick():
        s = rng.choice(pool)
        sinks[s] = sinks.get(s, 0) + 1
        return s

    # Interleave filler gates, planted occurrences and flip-flops in random order.
    events = ["f"] * filler + ["p"] * occurrences + ["d"] * n_dff
    rng.shuffle(events)
    for ev in events:
        if ev == "d":
            q = net()
            dffs.append((pick(), q))
            pool.append(q)
        elif ev == "f":
            cell = rng.choice(COMB_CELLS)
            y = net()
            conns = [f"{p}={pick()}" for p in _CELLS[cell][1]]
            gates.append(f".gate {cell} {' '.join(conns)} Y={y}")
            pool.append(y)
            vid += 1
        else:
            outs = [net() for _ in pat.cells]
            driven = {(parent, pin): outs[child] for child, parent, pin in pat.wires}
            order = list(range(len(pat.cells)))[::-1]  # children were created after parents
            ids = {}
            for k in order:
                cell = pat.cells[k]
                conns = []
                for p in _CELLS[cell][1]:
                    n = driven.get((k, p))
                    if n is None:
                        n = pick()
                    else:
                        sinks[n] = sinks.get(n, 0) + 1
                    conns.append(f"{p}={n}")
                gates.append(f".gate {cell} {' '.join(conns)} Y={outs[k]}")
                ids[k] = vid
                vid += 1
            pool.append(outs[0])
            for k in range(1, len(pat.cells)):
                if rng.random() < fanout_prob:
                    pool.append(outs[k])
            planted.append([ids[k] for k in range(len(pat.cells))])

    pos =[n for n in pool if not n.startswith("pi") and sinks.get(n, 0) == 0]
    lines = [f".model synth_s{seed}", ".inputs " + " ".join(f"pi{i}" for i in range(n_pi))
             + (" clk" if dffs else "")]
    lines.append(".outputs " + " ".join(pos))
    lines.extend(gates)
    for d, q in dffs:
        lines.append(f".gate DFFX1 D={d} CLK=clk Q={q}")
    lines.append(".end")
    truth = {
        "seed": seed,
        "vertices": vertices,
        "pattern_size": pattern_size,
        "occurrences": occurrences,
        "planted_coverage": occurrences * pattern_size / vertices,
        "pattern": pat.to_dict(),
        "planted": planted,
    }
    return "\n".join(lines) + "\n", truth


def truth_json(truth: Dict) -> str:
    return json.dumps(truth, indent=1) + "\n"
