"""Command-line entry point.

Every subcommand takes its parameters either as flags or from a JSON config
(``nematic-dimers run CONFIG.json``). Outputs embed the normalized config so
a run can be reproduced from its own artifact. Exit codes: 0 success,
1 invalid input, 2 size cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import traceback
from pathlib import Path

from . import __version__, decomposition, gibbs, montecarlo, polymer_cluster, transfer1d
from .errors import NematicDimersError, SizeCapError
from .gibbs import BoundaryCondition
from .lattice import Orientation, Region, boundary, parse_edge, parse_region
from .transfer1d import ModelParams

EXIT_OK, EXIT_INVALID, EXIT_CAP = 0, 1, 2


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input (exit 1); exit 2 is reserved for size caps."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# Parameter schema: key -> (default, kind). A default of REQUIRED must be given.
REQUIRED = object()

_MODEL = {"z": (REQUIRED, "float"), "J": (REQUIRED, "float")}
_BC = {"q": ("v", "str"), "ell0": (0, "int"), "magnetized": ("none", "json")}
_REGION = {"rect": (None, "rect"), "region": (None, "json")}

SCHEMAS = {
    "transfer": {**_MODEL, "ell": (REQUIRED, "int"), "left": ("open", "str"), "right": ("open", "str")},
    "enumerate": {**_MODEL, **_REGION, **_BC, "sources": ([], "edges"), "edges": ([], "edges")},
    "oriented": {**_MODEL, **_REGION, **_BC, "c": (None, "str")},
    "decompose": {"dimers": (REQUIRED, "edges"), "q": ("v", "str"), "sources": ([], "edges"),
                  **_REGION, "ell0": (0, "int")},
    "factorization-check": {**_MODEL, **_REGION, **_BC, "tol": (1e-9, "float")},
    "cluster": {"system": (REQUIRED, "json"), "max_order": (4, "int"), "pinned": (None, "int")},
    "mc": {**_MODEL, **_REGION, **_BC, "seed": (0, "int"), "sweeps": (10_000, "int"),
           "therm": (1_000, "int"), "bin": (100, "int"), "init": ("empty", "str"),
           "edge": ([], "edges"), "pair": ([], "pairs"), "seeds": ([], "ints")},
    "nematic-scan": {"boxes": (REQUIRED, "ints"), "zs": (REQUIRED, "floats"), "Js": (REQUIRED, "floats"),
                     "q": ("v", "str"), "ell0": (0, "int"), "magnetized": ("none", "str"),
                     "seed": (0, "int"), "sweeps": (20_000, "int"), "therm": (2_000, "int"),
                     "bin": (500, "int"), "init": ("packed", "str")},
}
COMMON = {"subcommand", "output", "threads"}


# ---------------------------------------------------------------- parsing

def _parse_flag(text: str, kind: str):
    """Turn a flag string into a JSON-like value."""
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "str":
        return text
    if kind == "rect":
        w, h = text.lower().replace("x", ",").split(",")
        return [int(w), int(h)]
    if kind in ("ints", "floats"):
        cast = int if kind == "ints" else float
        return [cast(t) for t in text.split(",") if t]
    if kind == "edge":
        x, y, o = text.split(",")
        return [int(x), int(y), o]
    if kind == "pair":
        a, b = text.split(";") if ";" in text else (text.split(",")[:3], text.split(",")[3:])
        if isinstance(a, str):
            return [_parse_flag(a, "edge"), _parse_flag(b, "edge")]
        return [[int(a[0]), int(a[1]), a[2]], [int(b[0]), int(b[1]), b[2]]]
    return json.loads(text)


def normalize(config: dict) -> dict:
    """Check keys against the schema, fill defaults, coerce types."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in config and "result" in config:
        config = config["config"]  # re-run from an artifact
    sub = config.get("subcommand")
    if sub not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {sub!r}; expected one of {sorted(SCHEMAS)}")
    schema = SCHEMAS[sub]
    unknown = set(config) - set(schema) - COMMON
    if unknown:
        raise ConfigError(f"unknown keys for {sub}: {sorted(unknown)}")
    out = {"subcommand": sub}
    for key, (default, kind) in schema.items():
        if key in config and config[key] is not None:
            out[key] = _coerce(config[key], kind, key)
        elif default is REQUIRED:
            raise ConfigError(f"{sub} needs {key!r}")
        else:
            out[key] = default
    if "rect" in schema and sub != "decompose" and out.get("rect") is None and out.get("region") is None:
        raise ConfigError(f"{sub} needs 'rect' or 'region'")
    for key in ("output", "threads"):
        if config.get(key) is not None:
            out[key] = config[key]
    return out


def _coerce(value, kind, key):
    try:
        if kind == "float":
            return float(value)
        if kind == "int":
            if float(value) != int(value):
                raise ValueError
            return int(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind == "rect":
            w, h = value
            return [int(w), int(h)]
        if kind == "ints":
            return [int(v) for v in value]
        if kind == "floats":
            return [float(v) for v in value]
        if kind == "edges":
            return [parse_edge(v).to_json() for v in value]
        if kind == "pairs":
            return [[parse_edge(a).to_json(), parse_edge(b).to_json()] for a, b in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return value


# ---------------------------------------------------------------- builders

def _region(cfg) -> Region:
    if cfg.get("region") is not None:
        return parse_region(cfg["region"])
    w, h = cfg["rect"]
    return Region.rect(w, h)


def _params(cfg) -> ModelParams:
    return ModelParams(cfg["z"], cfg["J"])


def _bc(cfg, region: Region) -> BoundaryCondition:
    q = Orientation.parse(cfg["q"])
    mag = cfg.get("magnetized", "none")
    if mag in (None, "none"):
        edges = frozenset()
    elif mag == "q":
        edges = frozenset(e for e in boundary(region) if e.orientation is q)
    elif mag == "all":
        edges = boundary(region)
    elif isinstance(mag, list):
        edges = frozenset(parse_edge(e) for e in mag)
    else:
        raise ConfigError(f"magnetized must be 'none', 'q', 'all' or a list of edges, got {mag!r}")
    return BoundaryCondition(q, edges, cfg["ell0"])


def _edges(values):
    return [parse_edge(v) for v in values]


def _edge_label(e) -> str:
    return f"{e.a.x},{e.a.y},{e.orientation}"


# ---------------------------------------------------------------- commands

def cmd_transfer(cfg):
    p = _params(cfg)
    sol = transfer1d.solve(p)
    left = transfer1d.boundary_vector(cfg["left"], p)
    right = transfer1d.boundary_vector(cfg["right"], p)
    log_psi = transfer1d.log_psi(sol, cfg["ell"], left, right)
    result = {
        "psi": transfer1d.psi(sol, cfg["ell"], left, right),
        "log_psi": log_psi,
        "eigenvalues": list(sol.eigenvalues),
    }
    if cfg["left"] == cfg["right"]:
        result["exp_minus_W"] = transfer1d.interaction_weight_W(sol, cfg["ell"], (left, right))
    return result, f"psi = {result['psi']:.17g} (log {log_psi:.17g})"


def cmd_enumerate(cfg):
    region = _region(cfg)
    p = _params(cfg)
    bc = _bc(cfg, region)
    poly = gibbs.count_polynomial(region, bc, _edges(cfg["sources"]))
    log_z = gibbs.evaluate_log(poly, p)
    result = {
        "Z": gibbs.evaluate(poly, p),
        "log_Z": log_z,
        "configurations": sum(poly.values()),
        "count_polynomial": [[n, k, c] for (n, k), c in sorted(poly.items())],
    }
    if cfg["edges"]:
        occ = gibbs.edge_occupations(region, p, bc, _edges(cfg["edges"]))
        result["occupations"] = {_edge_label(e): v for e, v in occ.items()}
    return result, f"Z = {result['Z']:.17g} over {result['configurations']} configurations"


def cmd_oriented(cfg):
    region = _region(cfg)
    p = _params(cfg)
    bc = _bc(cfg, region)
    log_z = gibbs.oriented_log_Z(region, p, bc, cfg["c"])
    result = {"Z": math.exp(log_z) if log_z < 700 else math.inf, "log_Z": log_z}
    return result, f"oriented Z = {result['Z']:.17g}"


def cmd_decompose(cfg):
    dimers = _edges(cfg["dimers"])
    sources = _edges(cfg["sources"])
    fam = decomposition.build_loop_family(dimers, cfg["q"], sources)
    result = {"family": fam.to_json()}
    if cfg.get("rect") is not None or cfg.get("region") is not None:
        region = _region(cfg)
        cs = decomposition.contours(fam, cfg["ell0"], region, sources)
        ext = decomposition.external_contours(cs, fam)
        result["contours"] = [c.to_json(fam) for c in cs]
        result["external_contours"] = [cs.index(c) for c in ext]
    return result, f"{len(fam.loops)} loops"


def cmd_factorization(cfg):
    region = _region(cfg)
    p = _params(cfg)
    bc = _bc(cfg, region)
    rep = decomposition.verify_loop_factorization(region, p, bc)
    result = {
        "configurations": rep.configurations,
        "families": rep.families,
        "max_rel_discrepancy": rep.max_rel_discrepancy,
        "passed": rep.passed(cfg["tol"]),
    }
    return result, (f"{'PASS' if result['passed'] else 'FAIL'}: {rep.families} families, "
                    f"max relative discrepancy {rep.max_rel_discrepancy:.3g}")


def cmd_cluster(cfg):
    sys_ = polymer_cluster.PolymerSystem.from_json(cfg["system"])
    conv = polymer_cluster.check_convergence(sys_)
    result = {
        "exact_log_partition": polymer_cluster.exact_log_partition(sys_),
        "truncated_log_partition": polymer_cluster.truncated_log_partition(sys_, cfg["max_order"]),
        "max_order": cfg["max_order"],
        "convergence": {"holds": conv.holds, "witnesses": [list(w) for w in conv.witnesses]},
    }
    if cfg["pinned"] is not None:
        rep = polymer_cluster.remainder_bound_check(sys_, cfg["pinned"])
        result["remainder"] = {"total": rep.total, "bound": rep.bound, "within_bound": rep.within_bound}
    return result, (f"log Z = {result['exact_log_partition']:.17g}, order {cfg['max_order']}: "
                    f"{result['truncated_log_partition']:.17g}")


def cmd_mc(cfg):
    region = _region(cfg)
    sc = montecarlo.SamplerConfig(region, _params(cfg), _bc(cfg, region), cfg["seed"], cfg["sweeps"],
                                  cfg["therm"], cfg["bin"], cfg["init"])
    edges = _edges(cfg["edge"])
    pairs = [tuple(_edges(p)) for p in cfg["pair"]]
    if not edges and not pairs:
        edges = [montecarlo.central_edge(region, "v"), montecarlo.central_edge(region, "h")]
    if cfg["seeds"]:
        per, res = montecarlo.run_seeds(sc, cfg["seeds"], edges, pairs, cfg["threads"])
    else:
        res = montecarlo.estimate(sc, edges, pairs)
    rows = []
    for e in edges:
        rows.append([f"occ[{_edge_label(e)}]", res[e].mean, res[e].stderr, res[e].bins])
    for a, b in pairs:
        est = res[(a, b)]
        rows.append([f"conn[{_edge_label(a)};{_edge_label(b)}]", est.mean, est.stderr, est.bins])
    table = {"columns": ["observable", "mean", "stderr", "bins"], "rows": rows, "metadata": sc.metadata()}
    return table, f"{len(rows)} observables over {sc.n_bins} bins"


def cmd_scan(cfg):
    grid = [(z, J) for z in cfg["zs"] for J in cfg["Js"]]
    rows = montecarlo.nematic_scan(cfg["boxes"], grid, cfg["q"], cfg["ell0"], cfg["sweeps"], cfg["therm"],
                                   cfg["bin"], cfg["seed"], cfg["magnetized"], cfg["init"], cfg["threads"])
    cols = ["L", "z", "J", "epsilon", "occ_v", "occ_v_stderr", "occ_h", "occ_h_stderr",
            "ratio_h_over_v", "abs_occ_v_minus_half", "bins"]
    data = [[r.to_json()[c] for c in cols] for r in rows]
    meta = rows[0].meta if rows else {}
    return {"columns": cols, "rows": data, "metadata": meta}, f"{len(rows)} scan points"


COMMANDS = {
    "transfer": cmd_transfer,
    "enumerate": cmd_enumerate,
    "oriented": cmd_oriented,
    "decompose": cmd_decompose,
    "factorization-check": cmd_factorization,
    "cluster": cmd_cluster,
    "mc": cmd_mc,
    "nematic-scan": cmd_scan,
}
TABLE_COMMANDS = {"mc", "nematic-scan"}


# ---------------------------------------------------------------- output

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return dumps(obj.item(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_table(path: Path, table: dict, config: dict) -> Path:
    """CSV of the table plus a JSON sidecar with config and metadata."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([_fmt_float(v) if isinstance(v, float) else v for v in row])
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(dumps({"config": config, "result": {"csv": path.name}, "metadata": table["metadata"],
                                "version": __version__}) + "\n")
    return meta_path


def execute(config: dict, out=sys.stdout) -> int:
    cfg = normalize(config)
    cfg["threads"] = int(cfg.get("threads") or os.environ.get("NEMATIC_THREADS") or 1)
    result, summary = COMMANDS[cfg["subcommand"]](cfg)
    embedded = {k: v for k, v in cfg.items() if k not in ("output", "threads")}
    output = cfg.get("output")
    if cfg["subcommand"] in TABLE_COMMANDS:
        if output:
            write_table(Path(output), result, embedded)
        else:
            w = csv.writer(out)
            w.writerow(result["columns"])
            for row in result["rows"]:
                w.writerow([_fmt_float(v) if isinstance(v, float) else v for v in row])
    else:
        doc = dumps({"config": embedded, "result": result, "version": __version__}) + "\n"
        if output:
            Path(output).write_text(doc)
        else:
            out.write(doc)
    print(f"{cfg['subcommand']}: {summary}", file=sys.stdout if output else sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nematic-dimers", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    run = subs.add_parser("run", help="run a JSON config file")
    run.add_argument("config", help="path to a JSON config or a previous artifact ('-' for stdin)")
    run.add_argument("--output", "-o")
    run.add_argument("--threads", type=int)
    flag_names = {"therm": "therm", "bin": "bin"}
    for name, schema in SCHEMAS.items():
        sp = subs.add_parser(name, help=f"{name} (flags mirror the JSON keys)")
        for key, (default, kind) in schema.items():
            flag_kind = {"edges": "edge", "pairs": "pair"}.get(kind, kind)
            repeat = kind in ("edges", "pairs")
            sp.add_argument(
                f"--{flag_names.get(key, key)}", dest=key, action="append" if repeat else "store",
                type=lambda t, k=flag_kind: _parse_flag(t, k),
                help=f"{kind}{'' if default is REQUIRED else f' (default {default!r})'}"
                     f"{'; repeatable' if repeat else ''}",
            )
        sp.add_argument("--output", "-o")
        sp.add_argument("--threads", type=int)
    return parser


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the error came from."""
    name = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("nematic_dimers."):
            name = mod.split(".", 1)[1]
    return name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.subcommand == "run":
            text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
            try:
                config = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
            if isinstance(config, dict) and "config" in config and "result" in config:
                config = config["config"]
        else:
            config = {k: v for k, v in vars(args).items() if v is not None}
        if isinstance(config, dict):
            if args.output:
                config["output"] = args.output
            if args.threads:
                config["threads"] = args.threads
        return execute(config)
    except SizeCapError as exc:
        print(f"error [{_origin(exc)}]: size cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (NematicDimersError, ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
