"""Standard-cell library model, the line-oriented library file format, and
the merged-cell area model."""

from __future__ import annotations

import logging
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)


class LibraryError(ValueError):
    """Raised for malformed library text or invalid library lookups."""


@dataclass(frozen=True)
class CellType:
    name: str
    input_pins: Tuple[str, ...]
    output_pins: Tuple[str, ...]
    equiv_classes: Tuple[Tuple[str, ...], ...]
    area: float
    is_sequential: bool = False
    spice_body: Optional[str] = None
    _canon: Dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        pins = self.input_pins + self.output_pins
        if len(set(pins)) != len(pins):
            raise LibraryError(f"cell {self.name}: duplicate pin names")
        if not self.area > 0:
            raise LibraryError(f"cell {self.name}: area must be positive")
        seen = [p for cls in self.equiv_classes for p in cls]
        if sorted(seen) != sorted(self.input_pins):
            raise LibraryError(
                f"cell {self.name}: equivalence classes must partition the input pins")
        canon = self._canon
        for cls in self.equiv_classes:
            rep = min(cls)
            for p in cls:
                canon[p] = rep
        for p in self.output_pins:
            canon[p] = p

    def canonical(self, pin: str) -> str:
        try:
            return self._canon[pin]
        except KeyError:
            raise LibraryError(f"cell {self.name} has no pin {pin!r}") from None

    def is_input(self, pin: str) -> bool:
        return pin in self.input_pins

    def is_output(self, pin: str) -> bool:
        return pin in self.output_pins


class CellLibrary:
    """Immutable map of cell name to :class:`CellType`.

    ``K`` is the per-merged-cell area saving declared in the library header;
    it feeds both the coverage reward and the linear area model.
    """

    def __init__(self, name: str, cells: Dict[str, CellType], K: float = 1.0):
        if not K > 0:
            raise LibraryError("library K must be positive")
        self.name = name
        self.K = float(K)
        self._cells = dict(cells)

    @property
    def cells(self) -> Dict[str, CellType]:
        return dict(self._cells)

    def __getitem__(self, name: str) -> CellType:
        try:
            return self._cells[name]
        except KeyError:
            raise LibraryError(f"unknown cell type {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._cells

    def __iter__(self):
        return iter(self._cells.values())

    def __len__(self):
        return len(self._cells)

    def extended(self, cells: Iterable[CellType], name: Optional[str] = None) -> "CellLibrary":
        merged = dict(self._cells)
        for c in cells:
            if c.name in merged:
                raise LibraryError(f"duplicate cell name {c.name!r}")
            merged[c.name] = c
        return CellLibrary(name or self.name, merged, self.K)


_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_LIB_RE = re.compile(rf"^library\s+(\S+)(?:\s+K=({_FLOAT}))?$")
_CELL_RE = re.compile(rf"^cell\s+(\S+)\s+area=({_FLOAT})(\s+seq)?$")
_HEREDOC_RE = re.compile(r"^spice\s+<<(\S+)$")


def parse_library(text: str) -> CellLibrary:
    """Parse the library file format.

    Every error message carries the 1-based line number it refers to.
    """
    lib_name = None
    K = 1.0
    cells: Dict[str, CellType] = {}
    declared_at: Dict[str, int] = {}
    cur = None  # open cell: dict of partially collected fields

    lines = text.splitlines()
    i = 0

    def fail(msg, lineno):
        raise LibraryError(f"line {lineno}: {msg}")

    def close(lineno):
        nonlocal cur
        ins, outs = cur["in"], cur["out"]
        all_pins = ins + outs
        if len(set(all_pins)) != len(all_pins):
            fail(f"cell {cur['name']}: duplicate pin names", cur["line"])
        classes = []
        in_class = {}
        for pins, ln in cur["equiv"]:
            for p in pins:
                if p not in ins:
                    fail(f"cell {cur['name']}: equiv pin {p!r} is not a declared input", ln)
                if p in in_class:
                    fail(f"cell {cur['name']}: pin {p!r} appears in two equiv classes", ln)
                in_class[p] = len(classes)
            classes.append(tuple(pins))
        for p in ins:
            if p not in in_class:
                classes.append((p,))
        try:
            cells[cur["name"]] = CellType(
                name=cur["name"], input_pins=tuple(ins), output_pins=tuple(outs),
                equiv_classes=tuple(classes), area=cur["area"], is_sequential=cur["seq"],
                spice_body=cur["spice"])
        except LibraryError as e:
            fail(str(e), cur["line"])
        cur = None

    while i < len(lines):
        lineno = i + 1
        raw = lines[i]
        i += 1
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kw = toks[0]
        if kw == "library":
            m = _LIB_RE.match(line)
            if not m:
                fail("malformed library header", lineno)
            if lib_name is not None:
                fail("second library header", lineno)
            lib_name = m.group(1)
            if m.group(2) is not None:
                K = float(m.group(2))
                if not K > 0:
                    fail("K must be positive", lineno)
        elif kw == "cell":
            if cur is not None:
                fail(f"cell {cur['name']} not closed with 'end'", lineno)
            m = _CELL_RE.match(line)
            if not m:
                fail("malformed cell header", lineno)
            name, area = m.group(1), float(m.group(2))
            if name in declared_at:
                fail(f"duplicate cell {name!r} (first declared on line {declared_at[name]})",
                     lineno)
            if not area > 0:
                fail(f"cell {name}: area must be positive", lineno)
            declared_at[name] = lineno
            cur = {"name": name, "area": area, "seq": bool(m.group(3)), "in": [], "out": [],
                   "equiv": [], "spice": None, "line": lineno}
        elif kw in ("in", "out", "equiv", "spice", "end"):
            if cur is None:
                fail(f"{kw!r} outside of a cell block", lineno)
            if kw == "in":
                cur["in"].extend(toks[1:])
            elif kw == "out":
                cur["out"].extend(toks[1:])
            elif kw == "equiv":
                if len(toks) < 3:
                    fail("equiv needs at least two pins", lineno)
                cur["equiv"].append((toks[1:], lineno))
            elif kw == "spice":
                m = _HEREDOC_RE.match(line)
                if not m:
                    fail("malformed spice block, expected 'spice <<TAG'", lineno)
                tag = m.group(1)
                body = []
                while True:
                    if i >= len(lines):
                        fail(f"unterminated spice block (missing {tag})", lineno)
                    nxt = lines[i]
                    i += 1
                    if nxt.strip() == tag:
                        break
                    body.append(nxt)
                cur["spice"] = "\n".join(body) + "\n"
            else:
                if len(toks) != 1:
                    fail("trailing tokens after 'end'", lineno)
                if not cur["out"]:
                    fail(f"cell {cur['name']} declares no output pin", cur["line"])
                close(lineno)
        else:
            fail(f"unknown directive {kw!r}", lineno)

    if cur is not None:
        fail(f"cell {cur['name']} not closed with 'end'", len(lines))
    if lib_name is None:
        raise LibraryError("line 1: missing 'library <name>' header")
    return CellLibrary(lib_name, cells, K)


def format_cell(cell: CellType) -> str:
    out = [f"cell {cell.name} area={cell.area:.6g}" + (" seq" if cell.is_sequential else "")]
    if cell.input_pins:
        out.append("  in " + " ".join(cell.input_pins))
    out.append("  out " + " ".join(cell.output_pins))
    for cls in cell.equiv_classes:
        if len(cls) > 1:
            out.append("  equiv " + " ".join(cls))
    if cell.spice_body:
        out.append("  spice <<EOF")
        out.append(cell.spice_body.rstrip("\n"))
        out.append("EOF")
    out.append("end")
    return "\n".join(out)


def format_library(lib: CellLibrary) -> str:
    parts = [f"library {lib.name} K={lib.K:.6g}"]
    parts.extend(format_cell(c) for c in lib)
    return "\n".join(parts) + "\n"


def canonical_pin(lib: CellLibrary, cell: str, pin: str) -> str:
    """Representative of ``pin``'s equivalence class: the lexicographically
    smallest member. Outputs and singleton inputs map to themselves."""
    return lib[cell].canonical(pin)


@dataclass(frozen=True)
class AreaModel:
    mode: str = "linear"
    K: float = 1.0
    alpha: float = 1.0
    external_cmd: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("linear", "sum_scaled", "external"):
            raise ValueError(f"unknown area model mode {self.mode!r}")
        if self.mode == "linear" and not self.K > 0:
            raise ValueError("linear area model needs K > 0")
        if self.mode == "sum_scaled" and not 0 < self.alpha <= 1:
            raise ValueError("sum_scaled area model needs 0 < alpha <= 1")
        if self.mode == "external" and not self.external_cmd:
            raise ValueError("external area model needs external_cmd")

    @classmethod
    def for_library(cls, lib: CellLibrary) -> "AreaModel":
        return cls(mode="linear", K=lib.K)


class AreaModelError(RuntimeError):
    pass


def merged_cell_area(model: AreaModel, member_cells: Sequence[CellType],
                     spice_path: Optional[str] = None) -> float:
    """Estimated area of one custom cell merging ``member_cells``.

    External mode substitutes ``{spice}`` in the command template with
    ``spice_path`` and expects exactly one number on stdout.
    """
    if not member_cells:
        raise ValueError("merged_cell_area needs at least one member cell")
    total = sum(c.area for c in member_cells)
    if model.mode == "linear":
        return total - model.K * len(member_cells)
    if model.mode == "sum_scaled":
        return model.alpha * total
    if spice_path is None:
        raise AreaModelError("external area model needs a SPICE file path")
    cmd = model.external_cmd.replace("{spice}", shlex.quote(spice_path))
    proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
    if proc.returncode != 0:
        raise AreaModelError(
            f"area command failed ({proc.returncode}): {cmd}\n{proc.stderr.strip()}")
    toks = proc.stdout.split()
    if len(toks) != 1:
        raise AreaModelError(f"area command printed {len(toks)} tokens, expected one number")
    try:
        return float(toks[0])
    except ValueError:
        raise AreaModelError(f"area command output {toks[0]!r} is not a number") from None


def fit_linear_k(pattern_sizes: Sequence[int], saved_areas: Sequence[float]) -> float:
    """Least-squares slope of saved area against pattern size.

    Used to calibrate ``K`` from characterized merged cells.
    """
    x = np.asarray(pattern_sizes, dtype=float)
    y = np.asarray(saved_areas, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct pattern sizes to fit K")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
