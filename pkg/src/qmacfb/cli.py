"""Command-line front end.

Exit codes: 0 success, 1 numeric failure (for example an infinite divergence
where a finite value was required), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import (
    DimensionMismatch,
    DomainError,
    InvalidConfig,
    InvalidEpsilon,
    InvalidRates,
    InvalidState,
    MissingStateAssignment,
    NotClassicalComplete,
    NotTracePreserving,
    QmacError,
)

COMMANDS = ("region-adder", "region-qcl", "region-general", "simulate-qcl", "dh", "stein-probe",
            "codebook-gen", "compare")
RUNTIME_KEYS = ("out", "threads", "dot")


class ParseError(InvalidConfig):
    """Malformed command line or configuration document."""


class ValidationError(InvalidConfig):
    """Well-formed input whose values are out of range; ``problems`` lists (field, reason)."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {r}" for f, r in self.problems))


@dataclass(frozen=True)
class Opt:
    kind: type
    default: object
    help: str
    nargs: object = None
    choices: tuple | None = None
    check: Callable | None = None


def _in(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        vals = v if isinstance(v, list) else [v]
        for x in vals:
            if (x < lo or (lo_open and x == lo)) or (x > hi or (hi_open and x == hi)):
                left = "(" if lo_open else "["
                right = ")" if hi_open else "]"
                return f"{x} outside {left}{lo}, {hi}{right}"
        return None
    return check


SEED = Opt(int, 0, "random seed", check=_in(0, 2**63 - 1))
FMT = lambda d: Opt(str, d, "output format", choices=("csv", "json"))
CHANNEL = Opt(str, "adder", "channel: 'adder', 'identity' or a JSON file")
INSTRUMENT = Opt(str, "adder", "instrument: 'adder', 'adder-lueders', 'identity' or a JSON file")
P_U = Opt(float, 0.5, "P(U = 1) for the binary time-sharing variable", check=_in(0.0, 1.0))
FULL = Opt(bool, False, "allow adder parameters in [0, 1] instead of [0, 1/2]")
PARAMS = Opt(float, None, "adder parameters alpha0 alpha1 beta0 beta1", nargs=4, check=_in(0.0, 1.0))

SCHEMA: dict[str, dict[str, Opt]] = {
    "region-adder": {
        "grid": Opt(int, 33, "grid points per parameter axis", check=_in(1, 129)),
        "refine": Opt(bool, False, "polish the hull with Nelder-Mead"),
        "directions": Opt(int, 64, "refinement directions", check=_in(2, 4097)),
        "full_range": FULL,
        "p_u": P_U,
        "params": PARAMS,
        "seed": SEED,
        "format": FMT("csv"),
    },
    "region-qcl": {
        "channel": CHANNEL,
        "instrument": INSTRUMENT,
        "ensemble": Opt(str, None, "input ensemble JSON; omit to trace the adder parameter grid"),
        "variant": Opt(str, "statement", "bound variant", choices=("statement", "outline", "swapped")),
        "grid": Opt(int, 5, "grid points per parameter axis", check=_in(1, 33)),
        "p_u": P_U,
        "seed": SEED,
        "format": FMT("csv"),
    },
    "region-general": {
        "channel": CHANNEL,
        "instrument": INSTRUMENT,
        "ensemble": Opt(str, None, "input ensemble JSON (default: uniform adder, trivial V)"),
        "packing_rates": Opt(float, None, "R1' R1'' R2' R2'' to check against the packing conditions",
                             nargs=4, check=_in(0.0, math.inf)),
        "seed": SEED,
        "format": FMT("csv"),
    },
    "simulate-qcl": {
        "channel": CHANNEL,
        "instrument": INSTRUMENT,
        "params": Opt(float, [0.5, 0.5, 0.5, 0.5], PARAMS.help, nargs=4, check=_in(0.0, 1.0)),
        "ensemble": Opt(str, None, "input ensemble JSON (overrides --params)"),
        "full_range": FULL,
        "p_u": P_U,
        "rates": Opt(float, [0.6, 0.6], "R1 R2 (or R1' R1'' R2' R2'' with --ratesplit)", nargs="+",
                     check=_in(0.0, math.inf)),
        "blocklen": Opt(int, 200, "block length n", check=_in(1, 10**6)),
        "blocks": Opt(int, 4, "number of blocks T", check=_in(2, 1000)),
        "delta": Opt(float, 0.1, "typicality band", check=_in(0.0, 1.0, lo_open=True)),
        "trials": Opt(int, 200, "Monte Carlo trials", check=_in(1, 10**7)),
        "mode": Opt(str, "auto", "codebook handling", choices=("auto", "explicit", "ensemble")),
        "decoder": Opt(str, "typicality", "decoder ('ml' is an extension)", choices=("typicality", "ml")),
        "ratesplit": Opt(bool, False, "simulate the rate-splitting scheme (explicit codebook, slow)"),
        "seed": SEED,
        "format": FMT("json"),
    },
    "dh": {
        "rho": Opt(str, None, "state JSON for rho"),
        "sigma": Opt(str, None, "state JSON for sigma"),
        "eps": Opt(float, 0.1, "type-I error budget", check=_in(0.0, 1.0, hi_open=True)),
        "seed": SEED,
        "format": FMT("json"),
    },
    "stein-probe": {
        "rho": Opt(str, None, "state JSON for rho"),
        "sigma": Opt(str, None, "state JSON for sigma"),
        "eps": Opt(float, 0.05, "type-I error budget", check=_in(0.0, 1.0, hi_open=True)),
        "n_max": Opt(int, 4, "largest tensor power", check=_in(1, 12)),
        "seed": SEED,
        "format": FMT("csv"),
    },
    "codebook-gen": {
        "network": Opt(str, "example-mac", "network family", choices=("example-mac", "qcl", "ratesplit")),
        "blocklen": Opt(int, 8, "block length n", check=_in(1, 10**6)),
        "blocks": Opt(int, 2, "number of blocks T (qcl, ratesplit)", check=_in(2, 1000)),
        "rates": Opt(float, [0.5, 0.25], "rates (2 values, or 4 for ratesplit)", nargs="+",
                     check=_in(0.0, math.inf)),
        "include_tables": Opt(bool, False, "embed every codeword table in the JSON output"),
        "seed": SEED,
        "format": FMT("json"),
    },
    "compare": {
        "a": Opt(str, None, "boundary CSV of region A"),
        "b": Opt(str, "no-feedback", "boundary CSV of region B, or 'no-feedback'"),
        "directions": Opt(int, 257, "support directions", check=_in(2, 100001)),
        "tol": Opt(float, 1e-9, "containment tolerance", check=_in(0.0, 1.0)),
        "seed": SEED,
        "format": FMT("json"),
    },
}
REQUIRED = {"dh": ("rho", "sigma"), "stein-probe": ("rho", "sigma"), "compare": ("a",)}


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration; ``options`` is echoed into every artifact.

    ``out``, ``threads`` and ``dot`` only steer where and how fast results are
    produced, so they are kept out of the echo (outputs stay byte-identical).
    """

    command: str
    options: dict
    out: str | None = None
    threads: int | None = None
    dot: str | None = None

    def echo(self) -> dict:
        return {"command": self.command, **self.options}

    @property
    def seed(self) -> int:
        return int(self.options.get("seed", 0))


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmacfb", description="Quantum MAC with feedback: regions, codes, divergences.")
    parser.add_argument("--version", action="version", version=f"qmacfb {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"{cmd} command")
        for name, o in SCHEMA[cmd].items():
            if o.kind is bool:
                p.add_argument(_flag(name), dest=name, action="store_true", default=None, help=o.help)
            else:
                p.add_argument(_flag(name), dest=name, type=o.kind, nargs=o.nargs, choices=o.choices,
                               default=None, help=f"{o.help} (default: {o.default})")
        p.add_argument("--config", default=None, help="JSON document of options (command-line flags win)")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (capped by QMACFB_THREADS)")
        if cmd == "codebook-gen":
            p.add_argument("--dot", default=None, help="also write the network as a DOT graph")
    return parser


def _coerce(name: str, o: Opt, value, problems: list):
    """Type-check a value coming from a JSON document."""
    def scalar(x):
        if o.kind is bool:
            ok = isinstance(x, bool)
        elif o.kind is int:
            ok = isinstance(x, int) and not isinstance(x, bool)
        elif o.kind is float:
            ok = isinstance(x, (int, float)) and not isinstance(x, bool)
        else:
            ok = isinstance(x, str)
        if not ok:
            problems.append((name, f"expected {o.kind.__name__}, got {type(x).__name__}"))
            return None
        return float(x) if o.kind is float else x

    if value is None:
        return None
    if o.nargs is not None:
        if not isinstance(value, list):
            problems.append((name, "expected a list"))
            return None
        return [scalar(x) for x in value]
    return scalar(value)


def _validate(command: str, opts: dict) -> list:
    problems = []
    for name, o in SCHEMA[command].items():
        v = opts.get(name)
        if v is None or (isinstance(v, list) and any(x is None for x in v)):
            continue
        if o.choices and v not in o.choices:
            problems.append((name, f"{v!r} not in {list(o.choices)}"))
        if isinstance(o.nargs, int) and len(v) != o.nargs:
            problems.append((name, f"expected {o.nargs} values, got {len(v)}"))
        if o.nargs == "+" and not v:
            problems.append((name, "expected at least one value"))
        if o.check and (msg := o.check(v)):
            problems.append((name, msg))
    for name in REQUIRED.get(command, ()):
        if opts.get(name) is None:
            problems.append((name, "required"))
    if opts.get("params") is not None and not opts.get("full_range"):
        for nm, x in zip(("alpha0", "alpha1", "beta0", "beta1"), opts["params"]):
            if x > 0.5:
                problems.append(("params", f"{nm} = {x} is outside the adder example's domain [0, 1/2]; "
                                           "pass --full-range to allow [0, 1]"))
    if command == "simulate-qcl" and opts.get("rates") is not None:
        want = 4 if opts.get("ratesplit") else 2
        if len(opts["rates"]) != want:
            problems.append(("rates", f"expected {want} values, got {len(opts['rates'])}"))
    if command == "codebook-gen" and opts.get("rates") is not None:
        want = 4 if opts.get("network") == "ratesplit" else 2
        if len(opts["rates"]) != want:
            problems.append(("rates", f"expected {want} values for {opts.get('network')}, got {len(opts['rates'])}"))
    return problems


def parse_config(argv=None, document: dict | None = None) -> RunConfig:
    """Merge defaults, a JSON document and command-line flags into a validated RunConfig.

    Raises ParseError or ValidationError (both exit with status 2 from ``main``).
    """
    parser = build_parser()
    argv = list(argv or [])
    explicit: dict = {}
    runtime: dict = {}
    command = None
    if argv:
        try:
            ns = parser.parse_args(argv)
        except SystemExit as exc:
            if exc.code == 0:
                raise
            raise ParseError(f"could not parse arguments {argv}") from None
        command = ns.command
        explicit = {k: v for k, v in vars(ns).items() if k in SCHEMA.get(command, {}) and v is not None}
        runtime = {k: getattr(ns, k, None) for k in RUNTIME_KEYS}
        if ns.config:
            from .jsonio import load_json
            document = {**(document or {}), **load_json(ns.config)}
    doc = dict(document or {})
    doc_cmd = doc.pop("command", None)
    if command is None:
        command = doc_cmd
    elif doc_cmd is not None and doc_cmd != command:
        raise ParseError(f"config command {doc_cmd!r} does not match {command!r}")
    if command not in SCHEMA:
        raise ParseError(f"missing or unknown command {command!r}; choose from {list(COMMANDS)}")
    schema = SCHEMA[command]
    problems = []
    for key in doc:
        if key in RUNTIME_KEYS:
            runtime.setdefault(key, None)
            if runtime[key] is None:
                runtime[key] = doc[key]
        elif key not in schema:
            problems.append((key, f"unknown key for {command}"))
    opts = {}
    for name, o in schema.items():
        if name in explicit:
            opts[name] = explicit[name]
        elif name in doc:
            opts[name] = _coerce(name, o, doc[name], problems)
        else:
            opts[name] = list(o.default) if isinstance(o.default, list) else o.default
    problems += _validate(command, opts)
    if problems:
        raise ValidationError(problems)
    return RunConfig(command, opts, runtime.get("out"), runtime.get("threads"), runtime.get("dot"))


# ---------------------------------------------------------------------------
# output


class NumericFailure(QmacError):
    pass


def _header_lines(cfg: RunConfig) -> list[str]:
    return [f"# qmacfb {__version__}", f"# seed={cfg.seed}",
            "# config=" + json.dumps(cfg.echo(), sort_keys=True, separators=(",", ":"))]


def _json_ready(x):
    if isinstance(x, dict):
        return {k: _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_ready(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_ready(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def render(cfg: RunConfig, result) -> str:
    """Artifact text: CSV rows (``result`` is a list of lines) or a JSON document."""
    if cfg.options.get("format") == "csv":
        rows = result["csv"] if isinstance(result, dict) else result
        return "\n".join(_header_lines(cfg) + list(rows)) + "\n"
    body = result["json"] if isinstance(result, dict) and "json" in result else result
    doc = {"tool": "qmacfb", "version": __version__, "seed": cfg.seed, "config": cfg.echo(), "result": body}
    return json.dumps(_json_ready(doc), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands


def _adder_region(o):
    from .regions import AdderFamily, AdderParams, adder_closed_form, adder_grid, bounds_to_pentagon, trace_boundary

    if o["params"] is not None:
        a0, a1, b0, b1 = o["params"]
        b = adder_closed_form(AdderParams(a0, a1, b0, b1, o["p_u"], o["full_range"]))
        region, extra = bounds_to_pentagon(b), {"bounds": list(b.as_tuple())}
    else:
        fam = AdderFamily(o["p_u"], o["full_range"])
        region = trace_boundary(fam, adder_grid(o["grid"], o["full_range"]), refine=o["refine"],
                                n_directions=o["directions"])
        extra = {}
    return {"csv": region.to_csv_rows(),
            "json": {"vertices": region.vertices, **extra}}


def _channel_inst(o):
    from .jsonio import channel_from_json, instrument_from_json

    return channel_from_json(o["channel"]), instrument_from_json(o["instrument"])


def _qcl_region(o):
    from .ensemble import adder_ensemble, build_joint_state
    from .jsonio import ensemble_from_json
    from .regions import PipelineFamily, adder_grid, bounds_to_pentagon, qcl_bounds, trace_boundary

    ch, inst = _channel_inst(o)
    if o["ensemble"] is not None:
        b = qcl_bounds(build_joint_state(ensemble_from_json(o["ensemble"]), ch, inst), o["variant"])
        region, extra = bounds_to_pentagon(b), {"bounds": list(b.as_tuple())}
    else:
        p_u = o["p_u"]
        fam = PipelineFamily(lambda q: adder_ensemble(q[:2], q[2:], [1 - p_u, p_u]), ch, inst, 4,
                             [(0.0, 0.5)] * 4, (o["variant"],))
        region, extra = trace_boundary(fam, adder_grid(o["grid"])), {}
    return {"csv": region.to_csv_rows(), "json": {"vertices": region.vertices, **extra}}


def _general_region(o):
    from .codesim.packing import packing_rate_check
    from .ensemble import adder_ensemble, build_joint_state
    from .jsonio import ensemble_from_json
    from .regions import RateBounds, bounds_to_pentagon, general_bounds

    ch, inst = _channel_inst(o)
    ens = (ensemble_from_json(o["ensemble"]) if o["ensemble"] is not None
           else adder_ensemble([0.5, 0.5], [0.5, 0.5], None, [0, 0], [0, 0]))
    joint = build_joint_state(ens, ch, inst)
    b = general_bounds(joint)
    region = bounds_to_pentagon(RateBounds(b.b1, b.b2, b.sum_bound))
    body = {"vertices": region.vertices, "bounds": {"b1": b.b1, "b2": b.b2, "bsum": b.bsum,
                                                     "bsum_layered": b.bsum_layered}}
    if o["packing_rates"] is not None:
        body["packing"] = packing_rate_check(joint, o["packing_rates"]).to_dict()
    return {"csv": region.to_csv_rows(), "json": body}


def _simulate(o, threads):
    from .codesim.qcl import simulate_qcl_scheme
    from .codesim.ratesplit import simulate_ratesplit_scheme
    from .ensemble import adder_ensemble
    from .jsonio import ensemble_from_json
    from .regions import AdderParams

    ch, inst = _channel_inst(o)
    if o["ensemble"] is not None:
        params = ensemble_from_json(o["ensemble"])
    else:
        a0, a1, b0, b1 = o["params"]
        params = AdderParams(a0, a1, b0, b1, o["p_u"], o["full_range"])
    common = dict(n=o["blocklen"], T=o["blocks"], delta=o["delta"], trials=o["trials"], rng=o["seed"],
                  threads=threads)
    if o["ratesplit"]:
        if isinstance(params, AdderParams):
            params = adder_ensemble([params.alpha0, params.alpha1], [params.beta0, params.beta1],
                                    [1 - params.p_u, params.p_u])
        rep = simulate_ratesplit_scheme(ch, inst, params, o["rates"], **common)
    else:
        rep = simulate_qcl_scheme(ch, inst, params, o["rates"][0], o["rates"][1], mode=o["mode"],
                                  decoder=o["decoder"], **common)
    d = rep.to_dict()
    csv = ["block,decoder_errors"] + [f"{t + 1},{c}" for t, c in enumerate(rep.per_block_error_counts)]
    return {"csv": csv, "json": d}


def _dh(o):
    from .jsonio import state_from_json
    from .qinfo import hypothesis_testing_divergence

    rho, sigma = state_from_json(o["rho"]), state_from_json(o["sigma"])
    ht = hypothesis_testing_divergence(rho, sigma, o["eps"])
    body = {"epsilon": o["eps"], "value_bits": ht.value_bits, "threshold": ht.threshold,
            "boundary_weight": ht.boundary_weight}
    return {"csv": ["epsilon,value_bits", f"{o['eps']:.12g},{ht.value_bits:.12g}"], "json": body,
            "value": ht.value_bits}


def _stein(o):
    from .jsonio import state_from_json
    from .qinfo import stein_probe

    rho, sigma = state_from_json(o["rho"]), state_from_json(o["sigma"])
    vals = stein_probe(rho, sigma, o["eps"], o["n_max"])
    return {"csv": ["n,value"] + [f"{n},{v:.12g}" for n, v in vals],
            "json": {"epsilon": o["eps"], "values": [{"n": n, "value": v} for n, v in vals]},
            "value": min(v for _, v in vals)}


def _codebook(o, dot_path):
    from .codesim.network import (build_qcl_network, build_ratesplit_network, example_mac_network,
                                  generate_codebook, to_dot, validate_network)

    n, r = o["blocklen"], o["rates"]
    if o["network"] == "example-mac":
        net = example_mac_network(n, r[0], r[1])
    elif o["network"] == "qcl":
        net = build_qcl_network(o["blocks"], r[0], r[1], n)
    else:
        net = build_ratesplit_network(o["blocks"], r[0], r[1], r[2], r[3], n)
    report = validate_network(net)
    if not report.valid:
        raise NumericFailure("network invalid: " + "; ".join(report.problems))
    cb = generate_codebook(net, n, np.random.default_rng(o["seed"]), seed=o["seed"])
    if dot_path:
        Path(dot_path).write_text(to_dot(net))
    body = {"valid": report.valid, "codeword_count": cb.codeword_count, "sha256": cb.digest(),
            "order": cb.order, "axes": {v: list(a) for v, a in cb.axes.items()},
            "shapes": {v: list(t.shape) for v, t in cb.tables.items()},
            "message_sizes": dict(net.message_sizes)}
    if o["include_tables"]:
        body["tables"] = {v: cb.tables[v] for v in cb.order}
    csv = ["vertex,codewords"] + [f"{v},{int(np.prod(cb.tables[v].shape[:-1]))}" for v in cb.order]
    return {"csv": csv, "json": body}


def read_boundary_csv(path):
    """Boundary vertices from a CSV with optional '#' lines and an ``R1,R2`` header."""
    from .regions import RegionBoundary

    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"file not found: {path}")
    rows = [ln.strip() for ln in p.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].replace(" ", "") != "R1,R2":
        raise InvalidConfig(f"{path}: expected header 'R1,R2'")
    try:
        pts = np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]], dtype=float)
    except ValueError:
        raise InvalidConfig(f"{path}: non-numeric row") from None
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise InvalidConfig(f"{path}: expected rows of two numbers")
    return RegionBoundary.from_points(pts)


def _compare(o):
    from .regions import compare_regions, no_feedback_adder_region

    a = read_boundary_csv(o["a"])
    b = no_feedback_adder_region() if o["b"] == "no-feedback" else read_boundary_csv(o["b"])
    rep = compare_regions(a, b, o["directions"], o["tol"])
    d = rep.to_dict()
    csv = ["mu,support_a,support_b,gap"] + [
        f"{r['mu']:.12g},{r['support_a']:.12g},{r['support_b']:.12g},{r['gap']:.12g}" for r in d["per_direction"]
    ]
    return {"csv": csv, "json": d}


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the exit status."""
    o = cfg.options
    handlers = {
        "region-adder": lambda: _adder_region(o),
        "region-qcl": lambda: _qcl_region(o),
        "region-general": lambda: _general_region(o),
        "simulate-qcl": lambda: _simulate(o, cfg.threads),
        "dh": lambda: _dh(o),
        "stein-probe": lambda: _stein(o),
        "codebook-gen": lambda: _codebook(o, cfg.dot),
        "compare": lambda: _compare(o),
    }
    result = handlers[cfg.command]()
    text = render(cfg, result)
    if cfg.out:
        Path(cfg.out).write_text(text)
    if cfg.command == "dh":
        print(float(result["value"]))
    elif not cfg.out:
        sys.stdout.write(text)
    if "value" in result and not math.isfinite(result["value"]):
        print("error: divergence is infinite (rho is not dominated by sigma)", file=sys.stderr)
        return 1
    return 0


# user-supplied objects that fail validation are configuration errors too
CONFIG_ERRORS = (InvalidConfig, DomainError, InvalidRates, InvalidEpsilon, InvalidState, NotTracePreserving,
                 DimensionMismatch, MissingStateAssignment, NotClassicalComplete)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_help(sys.stderr)
        return 2
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        for f, r in exc.problems:
            print(f"error: {f}: {r}", file=sys.stderr)
        return 2
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QmacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
