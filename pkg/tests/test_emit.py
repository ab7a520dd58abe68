import random

import pytest
from hypothesis import given, settings, strategies as st

from acx.combine import reward_area
from acx.emit import (EmitError, build_custom_cell, custom_cell_name, custom_cell_type,
                      expand_netlist, generate_spice, rewrite_netlist)
from acx.library import AreaModel, parse_library
from acx.mining import MiningConfig, PatternGroup, PatternMiner, PatternSubgraph, mine
from acx.netlist import build_graph, parse_blif, write_blif
from acx.synth import generate, synthetic_library_text

from emit_helpers import nx_isomorphic, round_trip
from oracles import demo_lib, nor_trees_graph, random_graph_blif

SPICE_LIB = """library sp K=0.5
cell INVX1 area=1.0
  in A
  out Y
  spice <<SP
.SUBCKT INVX1 A Y VDD GND
M0 Y A GND GND nmos
M1 Y A VDD VDD pmos
.ENDS INVX1
SP
end
cell NAND2X1 area=1.5
  in A B
  out Y
  equiv A B
  spice <<SP
.SUBCKT NAND2X1 A B Y VDD GND
M0 Y A n1 GND nmos
M1 n1 B GND GND nmos
M2 Y A VDD VDD pmos
M3 Y B VDD VDD pmos
.ENDS NAND2X1
SP
end
"""


def inv_pair_design(extra_sink):
    gates = []
    for k in range(3):
        gates += [f".gate INVX1 A=a{k} Y=m{k}", f".gate NAND2X1 A=m{k} B=b{k} Y=z{k}"]
    if extra_sink:
        gates.append(".gate INVX1 A=m1 Y=tap")
    outs = " ".join(f"z{k}" for k in range(3)) + (" tap" if extra_sink else "")
    ins = " ".join(f"a{k} b{k}" for k in range(3))
    return "\n".join([".model p", f".inputs {ins}", f".outputs {outs}", *gates, ".end"]) + "\n"


def mined_spec(text, libtext=SPICE_LIB):
    lib = parse_library(libtext)
    model = parse_blif(text).top_model
    g = build_graph(model, lib)
    r = mine(g, lib, MiningConfig(prune_ratio=0.0))
    return lib, model, g, r, [build_custom_cell(grp, g, lib) for grp in r.best.groups]


def test_internal_net_removed_when_internal_everywhere():
    lib, model, g, r, specs = mined_spec(inv_pair_design(False))
    (spec,) = specs
    assert spec.size == 2 and spec.members == ("NAND2X1", "INVX1")
    # member pins INV{A,Y} + NAND{A,B,Y}; the INV->NAND net is no longer a pin
    assert spec.ports == ["B_0", "A_1", "Y_0"]
    sp = generate_spice(spec, lib)
    header = [l for l in sp.splitlines() if l.startswith(".SUBCKT " + spec.name)][0]
    assert header.split()[2:] == spec.ports + ["VDD", "GND"]


def test_internal_net_kept_when_tapped_anywhere():
    lib, model, g, r, specs = mined_spec(inv_pair_design(True))
    (spec,) = specs
    assert spec.ports == ["B_0", "A_1", "Y_0", "Y_1"]
    # occurrences without the tap leave the exposed pin's net unused elsewhere
    assert [b["Y_1"] for b in spec.bindings] == ["m0", "m1", "m2"]


def test_removed_pins_never_leak():
    lib, model, g, r, specs = mined_spec(inv_pair_design(False))
    rewritten = rewrite_netlist(model, specs).top_model
    hidden_nets = set()
    for spec in specs:
        for occ in spec.occurrences:
            for j, p in spec.internal_nets:
                hidden_nets.add(g.gate(occ[j]).net(p))
    used = {n for gate in rewritten.gates for _, n in gate.conns}
    assert hidden_nets == {"m0", "m1", "m2"} and not hidden_nets & used


def test_single_cell_spec_wraps_cell():
    lib = parse_library(SPICE_LIB)
    model = parse_blif(".model s\n.inputs a\n.outputs y\n.gate INVX1 A=a Y=y\n.end\n").top_model
    g = build_graph(model, lib)
    grp = PatternGroup(0, "[INVX1]", 1, ("INVX1",))
    grp.add(PatternSubgraph(0, 0, (0,), ()))
    spec = build_custom_cell(grp, g, lib)
    assert spec.ports == ["A_0", "Y_0"] and spec.internal == []
    text = generate_spice(spec, lib, include_members=False)
    assert text.splitlines()[1:] == [f".SUBCKT {spec.name} A_0 Y_0 VDD GND",
                                     "X0 A_0 Y_0 VDD GND INVX1", f".ENDS {spec.name}"]


def test_spice_members_included_once():
    lib, model, g, r, specs = mined_spec(inv_pair_design(False))
    sp = generate_spice(specs[0], lib)
    assert sp.count(".SUBCKT INVX1 ") == 1 and sp.count(".SUBCKT NAND2X1 ") == 1
    assert sum(1 for l in sp.splitlines() if l.startswith("X")) == specs[0].size
    # the hidden net connects X1's output to X0's input inside the cell
    assert "X0 n1_Y B_0 Y_0 VDD GND NAND2X1" in sp and "X1 A_1 n1_Y VDD GND INVX1" in sp


def test_spice_requires_bodies():
    g, lib, _ = nor_trees_graph()
    r = mine(g, lib)
    spec = build_custom_cell(r.best.groups[0], g, lib)
    with pytest.raises(EmitError, match="no SPICE body"):
        generate_spice(spec, lib)


def test_rewrite_replacement_count():
    g, lib, model = nor_trees_graph(or3=(), or2=None)
    assert len(model.gates) == 20
    m = PatternMiner(g, lib)
    m.identify_initial_seeds()
    grp = m.patterns[0].snapshot()
    for s in grp.subgraphs[3:]:
        grp.remove(s)
    assert len(grp) == 3 and grp.size == 4
    spec = build_custom_cell(grp, g, lib)
    out = rewrite_netlist(model, [spec]).top_model
    assert len(out.gates) == 20 - 12 + 3


def test_empty_combination_is_identity():
    g, lib, model = nor_trees_graph()
    out = rewrite_netlist(model, [])
    assert out.top_model.gates == model.gates
    assert out.top_model.inputs == model.inputs and out.top_model.outputs == model.outputs


def test_overlapping_specs_rejected():
    g, lib, model = nor_trees_graph(or3=(), or2=None)
    m = PatternMiner(g, lib)
    m.identify_initial_seeds()
    spec = build_custom_cell(m.patterns[0], g, lib)
    with pytest.raises(EmitError):
        rewrite_netlist(model, [spec, spec])


def test_nor_trees_round_trip():
    g, lib, model = nor_trees_graph()
    r = mine(g, lib)
    ok, why = round_trip(model, lib, r.best.groups, g)
    assert ok, why
    specs = [build_custom_cell(grp, g, lib) for grp in r.best.groups]
    expanded = expand_netlist(rewrite_netlist(model, specs), specs)
    assert nx_isomorphic(build_graph(expanded, lib), g)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(5, 120))
def test_round_trip_random(seed, n):
    lib = demo_lib()
    model = parse_blif(random_graph_blif(random.Random(seed), n, dff_prob=0.05)).top_model
    g = build_graph(model, lib)
    r = mine(g, lib, MiningConfig(prune_ratio=0.0))
    ok, why = round_trip(model, lib, r.best.groups, g)
    assert ok, why
    if n <= 40:
        specs = [build_custom_cell(grp, g, lib) for grp in r.best.groups]
        expanded = expand_netlist(rewrite_netlist(model, specs), specs)
        assert nx_isomorphic(build_graph(expanded, lib), g)


def test_rewritten_blif_parses_with_extension():
    lib, model, g, r, specs = mined_spec(inv_pair_design(True))
    area = AreaModel("linear", K=lib.K)
    ext = lib.extended([custom_cell_type(s, lib, area) for s in specs])
    text = write_blif(rewrite_netlist(model, specs))
    g2 = build_graph(parse_blif(text).top_model, ext)
    assert g2.num_vertices == len(model.gates) - sum(len(s.occurrences) * (s.size - 1)
                                                     for s in specs)


def test_planted_counts_and_area_accounting():
    lib = parse_library(synthetic_library_text())
    text, truth = generate(11, 1000, 4, 60)
    model = parse_blif(text).top_model
    g = build_graph(model, lib)
    r = mine(g, lib)
    specs = [build_custom_cell(grp, g, lib) for grp in r.best.groups]
    out = rewrite_netlist(model, specs).top_model
    # independent recount: every covered gate disappears, each occurrence adds one
    covered = {gi for s in specs for occ in s.occurrence_gates for gi in occ}
    n_occ = sum(len(grp) for grp in r.best.groups)
    assert len(out.gates) == len(model.gates) - len(covered) + n_occ
    area = AreaModel("linear", K=lib.K)
    ext = lib.extended([custom_cell_type(s, lib, area) for s in specs])
    before = sum(lib[x.cell].area for x in model.gates)
    after = sum(ext[x.cell].area for x in out.gates)
    assert before - after == pytest.approx(reward_area(r.best, lib, area))


def test_names_are_deterministic():
    code = "[NOR3X1](AND2X2,Y,A)(AND2X2,Y,B)(NOR3X1,Y,C)"
    assert custom_cell_name(code) == custom_cell_name(code)
    assert custom_cell_name(code) != custom_cell_name(code + "|[OR3X1](Y,A,1)")
    assert custom_cell_name(code).startswith("ACX_") and len(custom_cell_name(code)) == 12


def test_equivalent_pin_permutation_round_trips():
    # Occurrences feed the NAND through different (equivalent) pins.
    gates = [".gate INVX1 A=a0 Y=m0", ".gate NAND2X1 A=m0 B=b0 Y=z0",
             ".gate INVX1 A=a1 Y=m1", ".gate NAND2X1 B=m1 A=b1 Y=z1"]
    text = "\n".join([".model q", ".inputs a0 b0 a1 b1", ".outputs z0 z1", *gates, ".end"]) + "\n"
    lib, model, g, r, specs = mined_spec(text)
    assert len(specs) == 1 and len(specs[0].occurrences) == 2
    ok, why = round_trip(model, lib, r.best.groups, g)
    assert ok, why
    b = specs[0].bindings
    assert b[0]["B_0"] == "b0" and b[1]["B_0"] == "b1"
