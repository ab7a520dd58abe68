"""Command-line interface: ``acx <subcommand> ...``.

Every option may also come from a ``--config`` file of ``key=value`` lines
(keys are option names, dashes or underscores); command-line flags win.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

from . import synth
from .combine import reward_area
from .emit import (EmitError, build_custom_cell, custom_cell_type, generate_spice,
                   rewrite_netlist)
from .library import (AreaModel, AreaModelError, CellLibrary, LibraryError, format_cell,
                      parse_library)
from .mining import MiningConfig, mine
from .netlist import (BlifError, HierNetlist, NetlistError, build_graph, flatten, parse_blif,
                      partition, write_blif)
from .report import (ResultError, build_report, dump_result, emit_csv, emit_report,
                     load_result)

log = logging.getLogger("acx")

_ERRORS = (LibraryError, BlifError, NetlistError, EmitError, AreaModelError, ResultError,
           ValueError, OSError)


class ConfigError(ValueError):
    pass


def read_config(path: str) -> Dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _read(path):
    with open(path) as fh:
        return fh.read()


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _area_model(args, lib: CellLibrary) -> AreaModel:
    K = args.k if args.k is not None else lib.K
    return AreaModel(args.area_model, K=K, alpha=args.alpha, external_cmd=args.area_cmd)


def _config(args) -> MiningConfig:
    return MiningConfig(n_p=args.np, s_p=args.sp, prune_ratio=args.prune_ratio,
                        max_iterations=args.max_iterations)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "__", name).strip("_") or "top"


def _emit_artifacts(design, model, graph, lib, area, combination, result, out, args):
    """Write SPICE, extension library, rewritten BLIF, report and figures."""
    specs = [build_custom_cell(g, graph, lib) for g in combination.groups]
    spice_paths = {}
    names = {}
    for spec in specs:
        names[spec.code] = spec.name
        if all(lib[m].spice_body for m in spec.members):
            path = os.path.join(out, "spice", spec.name + ".sp")
            _write(path, generate_spice(spec, lib))
            spice_paths[spec.code] = path
        else:
            log.warning("%s: member cells lack SPICE bodies; no .sp written", spec.name)
    cells = [custom_cell_type(s, lib, area, spice_paths.get(s.code)) for s in specs]
    ext = [f"library {lib.name}_acx K={lib.K!r}"] + [format_cell(c) for c in cells]
    _write(os.path.join(out, "extension.lib"), "\n".join(ext) + "\n")
    _write(os.path.join(out, "rewritten.blif"), write_blif(rewrite_netlist(model, specs)))
    combination.reward_area = reward_area(combination, lib, area, spice_paths)
    rep = build_report(design, graph, lib, area, combination, result, spice_paths, names)
    if args.reproducible:
        rep.fsm_seconds = None
    _write(os.path.join(out, "report.json"), emit_report(rep))
    _write(os.path.join(out, "report.csv"), emit_csv(rep))
    if not args.no_plots:
        from .plots import plot_group_coverage, plot_reward_history

        plot_reward_history(rep, os.path.join(out, "reward.png"))
        plot_group_coverage(rep, os.path.join(out, "coverage.png"))
    return rep


def _mine_partition(job):
    name, h, lib_text, args, out = job
    lib = parse_library(lib_text)
    model = h.top_model
    graph = build_graph(model, lib)
    area = _area_model(args, lib)
    cfg = _config(args)
    result = mine(graph, lib, cfg, check=args.check)
    if args.reproducible:
        result.fsm_seconds = None
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "netlist.blif"), write_blif(h))
    _write(os.path.join(out, "result.json"), dump_result(name, result, cfg, graph))
    rep = _emit_artifacts(name, model, graph, lib, area, result.best, result, out, args)
    log.info("%s: %d vertices, %d iterations, reduction %.2f%%", name, graph.num_vertices,
             result.iterations, rep.reduction_pct)
    return name, out, rep.reduction_pct, rep.pattern_sizes


def cmd_mine(args):
    lib_text = _read(args.lib)
    parse_library(lib_text)
    h = parse_blif(_read(args.blif))
    parts = partition(h, args.depth)
    if len(parts) == 1:
        jobs = [(parts[0][0], parts[0][1], lib_text, args, args.out)]
    else:
        jobs = [(name, p, lib_text, args, os.path.join(args.out, _safe(name)))
                for name, p in parts]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_mine_partition, jobs))
    else:
        rows = [_mine_partition(j) for j in jobs]
    if len(rows) > 1:
        lines = ["partition,directory,reduction_pct,pattern_sizes"]
        lines += [f"{n},{os.path.relpath(d, args.out)},{r!r},{s}" for n, d, r, s in rows]
        _write(os.path.join(args.out, "partitions.csv"), "\n".join(lines) + "\n")
    return 0


def _load_mined(args):
    lib = parse_library(_read(args.lib))
    model = flatten(parse_blif(_read(args.blif)))
    graph = build_graph(model, lib)
    design, combination, _ = load_result(_read(args.result), graph)
    return lib, model, graph, design, combination


def cmd_rewrite(args):
    lib, model, graph, _, combination = _load_mined(args)
    specs = [build_custom_cell(g, graph, lib) for g in combination.groups]
    area = _area_model(args, lib)
    text = write_blif(rewrite_netlist(model, specs))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write(args.out, text)
    if args.ext_lib:
        cells = [custom_cell_type(s, lib, area) for s in specs]
        ext = [f"library {lib.name}_acx K={lib.K!r}"] + [format_cell(c) for c in cells]
        _write(args.ext_lib, "\n".join(ext) + "\n")
    return 0


def cmd_spice(args):
    lib, _, graph, _, combination = _load_mined(args)
    os.makedirs(args.out, exist_ok=True)
    for g in combination.groups:
        spec = build_custom_cell(g, graph, lib)
        _write(os.path.join(args.out, spec.name + ".sp"),
               generate_spice(spec, lib, include_members=not args.no_members))
    return 0


def cmd_report(args):
    lib, model, graph, design, combination = _load_mined(args)
    os.makedirs(args.out, exist_ok=True)
    _emit_artifacts(design, model, graph, lib, _area_model(args, lib), combination, None,
                    args.out, args)
    return 0


def cmd_partition(args):
    h = parse_blif(_read(args.blif))
    os.makedirs(args.out, exist_ok=True)
    for name, p in partition(h, args.depth):
        _write(os.path.join(args.out, _safe(name) + ".blif"), write_blif(p))
    return 0


def cmd_gen_synthetic(args):
    blif, truth = synth.generate(args.seed, args.vertices, args.pattern_size, args.occurrences,
                                 dff_ratio=args.dff_ratio, fanout_prob=args.fanout_prob)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "design.blif"), blif)
    _write(os.path.join(args.out, "library.lib"), synth.synthetic_library_text())
    _write(os.path.join(args.out, "truth.json"), synth.truth_json(truth))
    return 0


def _common(p):
    p.add_argument("--config", help="key=value file supplying option defaults")


def _area_args(p):
    p.add_argument("--area-model", choices=["linear", "sum_scaled", "external"],
                   default="linear")
    p.add_argument("--k", type=float, default=None, help="override the library K")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--area-cmd", default=None,
                   help="command printing one area number; {spice} is the .sp path")


def _emit_args(p):
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--reproducible", action="store_true",
                   help="omit wall-clock timings so reports are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acx", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key=value file supplying option defaults")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="mine patterns and write all artifacts")
    p.add_argument("--blif", required=True)
    p.add_argument("--lib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--np", type=_positive_int, default=5, help="patterns kept (N_p)")
    p.add_argument("--sp", type=_positive_int, default=10, help="max pattern size (S_p)")
    p.add_argument("--prune-ratio", type=float, default=0.025)
    p.add_argument("--max-iterations", type=_nonneg_int, default=None)
    p.add_argument("--depth", type=_nonneg_int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--check", action="store_true", help="verify invariants after each step")
    _area_args(p)
    _emit_args(p)
    _common(p)
    p.set_defaults(func=cmd_mine)

    for name, func, helptext in (("rewrite", cmd_rewrite, "write the rewritten BLIF"),
                                 ("spice", cmd_spice, "write custom-cell SPICE files"),
                                 ("report", cmd_report, "regenerate report and figures")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--blif", required=True, help="the (partition) netlist that was mined")
        p.add_argument("--lib", required=True)
        p.add_argument("--result", required=True, help="result.json written by mine")
        p.add_argument("--out", required=True)
        _area_args(p)
        if name == "rewrite":
            p.add_argument("--ext-lib", default=None, help="also write the library extension")
        if name == "spice":
            p.add_argument("--no-members", action="store_true",
                           help="omit member-cell definitions")
        if name == "report":
            _emit_args(p)
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("partition", help="split a hierarchical BLIF at a depth")
    p.add_argument("--blif", required=True)
    p.add_argument("--depth", type=_nonneg_int, default=0)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("gen-synthetic", help="netlist with planted pattern occurrences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vertices", type=_positive_int, default=1000)
    p.add_argument("--pattern-size", type=_positive_int, default=4)
    p.add_argument("--occurrences", type=_nonneg_int, default=50)
    p.add_argument("--dff-ratio", type=float, default=0.02)
    p.add_argument("--fanout-prob", type=float, default=0.1)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_gen_synthetic)
    return ap


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    ap = build_parser()
    if known.config:
        subs = ap._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in subs), None)
        if command is not None:
            _apply_config(subs[command], known.config)
    return ap.parse_args(argv)


def _apply_config(sp: argparse.ArgumentParser, path: str):
    cfg = read_config(path)
    known = {a.dest for a in sp._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown option(s) {', '.join(unknown)}")
    defaults = {}
    for a in sp._actions:
        if a.dest not in cfg or a.dest == "config":
            continue
        raw = cfg[a.dest]
        if a.nargs == 0:
            defaults[a.dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[a.dest] = a.type(raw) if a.type else raw
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise ConfigError(f"{path}: {a.dest}: {e}") from None
            if a.choices and defaults[a.dest] not in a.choices:
                raise ConfigError(f"{path}: {a.dest}: invalid choice {raw!r}")
        a.required = False
    sp.set_defaults(**defaults)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("ACX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        return args.func(args)
    except _ERRORS as e:
        print(f"acx: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
