"""Command-line interface.

Every command reads its parameters from defaults, then an optional JSON
config file (``--config``), then explicit flags, later sources winning.
Outputs go to ``--out`` (stdout when omitted); timings go to stderr only.

Exit codes: 0 success or inconclusive verdict, 1 failed self-test,
2 configuration error, 3 non-convergence.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds, coupling
from ._validation import DomainError
from .environment import EnvParams
from .estimator import chi_estimate, estimate_pc, graph_name
from .exploration import ExplorationBudget, layer_radii, run_survival_trials
from .lattice import parse_graph
from .serialize import to_csv, to_json

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

SURVIVAL_COLUMNS = ("graph", "p", "N", "trials", "survivors", "p_hat", "ci_lo", "ci_hi",
                    "truncated")

DEFAULTS = {
    "survive": {"delta": 0.0, "p_g": 1.0, "p_b": 1.0, "p_h": 0.0, "trials": 1000, "seed": 0,
                "mode": "bond", "max_sites": 10**6, "max_radius": 10**4},
    "pc": {"mode": "bond", "N": [50, 100, 200], "trials": 10000, "tol": 1e-3, "seed": 0,
           "max_sites": 10**7},
    "chi": {"trials": 10000, "radius_cap": 1000, "seed": 0},
    "coupling": {"graph": "path3", "mode": "bond", "p": [0.2, 0.4, 0.6, 0.8],
                 "trials": 100000, "seed": 0,
                 "tolerance": 0.02, "self_test": False},
    "bounds": {"check": "crossing", "delta": 0.5, "p_h": 0.2, "n": [2, 3, 4, 5, 6, 7, 8],
               "trials": 10000, "seed": 0, "entry_cap": bounds.ENTRY_CAP, "sigmas": 4.0,
               "N": [50, 100, 200], "seeds": 20, "n_min": 8, "n_max": 6},
    "sweep": {"p": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], "N": [50, 100],
              "trials": 1000, "seed": 0, "mode": "bond", "max_sites": 10**6,
              "max_radius": 10**4},
    "radii": {"graph": "hex_h", "p_h": 0.3, "N": 100, "seed": 0, "max_radius": 10**4},
}

REQUIRED = {
    "survive": ("graph", "N"),
    "pc": ("graph",),
    "chi": ("p_h",),
    "coupling": (),
    "bounds": (),
    "sweep": ("graph",),
    "radii": (),
}


class ConfigError(Exception):
    pass


def _flag(name):
    return "--" + name.replace("_", "-")


def _help(cmd, name, text):
    d = DEFAULTS[cmd].get(name)
    return f"{text} (default: {d})" if d is not None else text


def _add_common(p, cmd):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help=_help(cmd, "seed", "base seed"))
    p.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    p.add_argument("--out", help="output path (default: stdout)")


def _add_env(p, cmd):
    p.add_argument("--delta", type=float, help=_help(cmd, "delta", "bad-layer probability"))
    p.add_argument("--p-g", dest="p_g", type=float, help=_help(cmd, "p_g", "good-layer upward p"))
    p.add_argument("--p-b", dest="p_b", type=float, help=_help(cmd, "p_b", "bad-layer upward p"))
    p.add_argument("--p-h", dest="p_h", type=float, help=_help(cmd, "p_h", "horizontal p"))


def build_parser():
    ap = argparse.ArgumentParser(prog="percolab", argument_default=argparse.SUPPRESS,
                                 description="Percolation experiments on layered lattices.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("survive", argument_default=argparse.SUPPRESS,
                       help="survival-to-height table")
    _add_common(p, "survive")
    p.add_argument("--graph", help="graph name or JSON document")
    _add_env(p, "survive")
    p.add_argument("--p", type=float, help="homogeneous p (overrides the layered parameters)")
    p.add_argument("--N", type=int, nargs="+", help="height levels")
    p.add_argument("--trials", type=int, help=_help("survive", "trials", "trials"))
    p.add_argument("--mode", choices=("bond", "site"), help=_help("survive", "mode", "model"))
    p.add_argument("--max-sites", dest="max_sites", type=int,
                   help=_help("survive", "max_sites", "site budget per trial"))
    p.add_argument("--max-radius", dest="max_radius", type=int,
                   help=_help("survive", "max_radius", "layer radius budget"))
    p.add_argument("--records", help="per-trial CSV path")

    p = sub.add_parser("pc", argument_default=argparse.SUPPRESS, help="critical point estimate")
    _add_common(p, "pc")
    p.add_argument("--graph", help="graph name or JSON document")
    p.add_argument("--mode", choices=("bond", "site"), help=_help("pc", "mode", "model"))
    p.add_argument("--N", type=int, nargs="+", help=_help("pc", "N", "levels"))
    p.add_argument("--trials", type=int, help=_help("pc", "trials", "trials per point"))
    p.add_argument("--tol", type=float, help=_help("pc", "tol", "bisection tolerance"))
    p.add_argument("--threshold", type=float, help="survival level defining the crossing")
    p.add_argument("--max-sites", dest="max_sites", type=int,
                   help=_help("pc", "max_sites", "site budget per trial"))
    p.add_argument("--curve", help="survival curve CSV path")

    p = sub.add_parser("chi", argument_default=argparse.SUPPRESS,
                       help="mean cluster size on Z^2")
    _add_common(p, "chi")
    p.add_argument("--p-h", dest="p_h", type=float, help="bond probability below 1/2")
    p.add_argument("--trials", type=int, help=_help("chi", "trials", "trials"))
    p.add_argument("--radius-cap", dest="radius_cap", type=int,
                   help=_help("chi", "radius_cap", "radius budget"))

    p = sub.add_parser("coupling", argument_default=argparse.SUPPRESS,
                       help="ladder coupling runs and oracle self-test")
    _add_common(p, "coupling")
    p.add_argument("--graph", help=_help("coupling", "graph", "base graph"))
    p.add_argument("--mode", choices=("bond", "site"), help=_help("coupling", "mode", "model"))
    p.add_argument("--p", type=float, nargs="+", help=_help("coupling", "p", "probabilities"))
    p.add_argument("--delta", type=int, help="parallel copies (default: base max degree)")
    p.add_argument("--trials", type=int, help=_help("coupling", "trials", "trials"))
    p.add_argument("--tolerance", type=float,
                   help=_help("coupling", "tolerance", "total-variation tolerance"))
    p.add_argument("--trace", help="write the trace of the run with --seed to this path")
    p.add_argument("--self-test", dest="self_test", action="store_true",
                   help="oracle comparison on P3 (bond) and K1,3 (site) at each --p")

    p = sub.add_parser("bounds", argument_default=argparse.SUPPRESS,
                       help="numeric checks for the layered environment")
    _add_common(p, "bounds")
    p.add_argument("--check", choices=("crossing", "subcritical", "blocks", "growth",
                                       "critical"), help=_help("bounds", "check", "checker"))
    _add_env(p, "bounds")
    p.add_argument("--chi", type=float, help="supplied chi(p_h) (default: estimated)")
    p.add_argument("--n", type=int, nargs="+", help=_help("bounds", "n", "block lengths"))
    p.add_argument("--trials", type=int, help=_help("bounds", "trials", "trials"))
    p.add_argument("--entry-width", dest="entry_width", type=int,
                   help="entry diamond radius (default: growth envelope, capped)")
    p.add_argument("--entry-cap", dest="entry_cap", type=int,
                   help=_help("bounds", "entry_cap", "cap on the default entry radius"))
    p.add_argument("--sigmas", type=float, help=_help("bounds", "sigmas", "slope margin"))
    p.add_argument("--N", type=int, nargs="+",
                   help=_help("bounds", "N", "heights (growth uses the last one)"))
    p.add_argument("--seeds", type=int, help=_help("bounds", "seeds", "number of seeds"))
    p.add_argument("--n-min", dest="n_min", type=int, help=_help("bounds", "n_min", "first n"))
    p.add_argument("--n-max", dest="n_max", type=int,
                   help=_help("bounds", "n_max", "largest block order"))
    p.add_argument("--series", help="raw series CSV path")

    p = sub.add_parser("sweep", argument_default=argparse.SUPPRESS,
                       help="survival grid over (p, N)")
    _add_common(p, "sweep")
    p.add_argument("--graph", help="graph name or JSON document")
    p.add_argument("--p", type=float, nargs="+", help=_help("sweep", "p", "probabilities"))
    p.add_argument("--N", type=int, nargs="+", help=_help("sweep", "N", "levels"))
    p.add_argument("--trials", type=int, help=_help("sweep", "trials", "trials per p"))
    p.add_argument("--mode", choices=("bond", "site"), help=_help("sweep", "mode", "model"))
    p.add_argument("--max-sites", dest="max_sites", type=int,
                   help=_help("sweep", "max_sites", "site budget per trial"))
    p.add_argument("--max-radius", dest="max_radius", type=int,
                   help=_help("sweep", "max_radius", "layer radius budget"))

    p = sub.add_parser("radii", argument_default=argparse.SUPPRESS,
                       help="layer radii with every upward edge open")
    _add_common(p, "radii")
    p.add_argument("--graph", help=_help("radii", "graph", "graph"))
    p.add_argument("--p-h", dest="p_h", type=float, help=_help("radii", "p_h", "horizontal p"))
    p.add_argument("--N", type=int, help=_help("radii", "N", "top layer"))
    p.add_argument("--max-radius", dest="max_radius", type=int,
                   help=_help("radii", "max_radius", "radius budget"))
    return ap


def resolve(cmd, flags):
    """Merge defaults, config file and flags; check required keys."""
    cfg = {}
    path = flags.pop("config", None)
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        env = cfg.pop("env", None)
        if isinstance(env, dict):
            cfg = {**env, **cfg}
    out = {**DEFAULTS[cmd], **cfg, **flags}
    for key in REQUIRED[cmd]:
        if key not in out:
            raise ConfigError(f"missing required option {_flag(key)}")
    return out


def _levels(v):
    return [int(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def _floats(v):
    return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _label(spec, graph):
    if isinstance(spec, str) and not spec.lstrip().startswith("{"):
        return spec
    return graph_name(graph)


def _env(c):
    if c.get("p") is not None:
        return EnvParams.homogeneous(float(c["p"]))
    return EnvParams(c["delta"], c["p_g"], c["p_b"], c["p_h"])


def _survival_rows(name, p, batch, levels):
    rows = []
    for n in levels:
        e = batch.estimate(n)
        rows.append({"graph": name, "p": p, "N": n, "trials": e.trials,
                     "survivors": e.survivors, "p_hat": e.p_hat, "ci_lo": e.ci95[0],
                     "ci_hi": e.ci95[1], "truncated": e.truncated})
    return rows


def cmd_survive(c):
    graph = parse_graph(c["graph"])
    env = _env(c)
    levels = sorted(set(_levels(c["N"])))
    budget = ExplorationBudget(c["max_sites"], levels[-1], c["max_radius"])
    batch = run_survival_trials(graph, env, levels[-1], c["trials"], c["seed"], budget=budget,
                                site_mode=c["mode"] == "site", threads=c.get("threads"))
    p = c.get("p")
    rows = _survival_rows(_label(c["graph"], graph), "" if p is None else p, batch, levels)
    _emit(to_csv(rows, SURVIVAL_COLUMNS), c.get("out"))
    if c.get("records"):
        _emit(batch.estimate(levels[-1], with_records=True).records_csv(), c["records"])
    return EXIT_OK


def cmd_pc(c):
    kw = {"threads": c.get("threads"), "max_sites": c["max_sites"]}
    est = estimate_pc(c["graph"], c["mode"], tuple(_levels(c["N"])), c["trials"], c["tol"],
                      c["seed"], c.get("threshold"), **kw)
    _emit(to_json(est), c.get("out"))
    if c.get("curve"):
        _emit(est.curve_csv(), c["curve"])
    return EXIT_OK if est.converged else EXIT_NONCONVERGED


def cmd_chi(c):
    est = chi_estimate(c["p_h"], c["trials"], c["radius_cap"], c["seed"],
                       threads=c.get("threads"))
    _emit(to_json(est), c.get("out"))
    return EXIT_OK


SELF_TEST = (("path3", "bond"), ("star3", "site"))


def cmd_coupling(c):
    threads = c.get("threads")
    if c["self_test"]:
        results = [coupling.oracle_comparison(g, p, c["trials"], c["seed"], mode=m,
                                              tolerance=c["tolerance"], threads=threads)
                   for g, m in SELF_TEST for p in _floats(c["p"])]
        ok = all(r.passed for r in results)
        _emit(to_json({"check": "coupling_oracle", "verdict": "pass" if ok else "fail",
                       "results": results}), c.get("out"))
        return EXIT_OK if ok else EXIT_FAILED
    base = parse_graph(c["graph"])
    delta = c.get("delta")
    out = []
    for i, p in enumerate(_floats(c["p"])):
        law = coupling.coupling_size_law(base, p, c["trials"], c["seed"], mode=c["mode"],
                                         delta=delta, threads=threads)
        trace = coupling.run_coupling(base, p, c["mode"], seed=c["seed"], delta=delta)
        check = coupling.verify_witness(trace, base)
        out.append({"p": p, "f_p": coupling.f(p, trace.delta), "trials": c["trials"],
                    "size_law": {str(k): v for k, v in law.items()},
                    "witness_ok": bool(check), "red_count": trace.red_count})
        if i == 0 and c.get("trace"):
            _emit(trace.to_json(), c["trace"])
    _emit(to_json({"graph": _label(c["graph"], base), "mode": c["mode"], "runs": out}), c.get("out"))
    return EXIT_OK


def cmd_bounds(c):
    check = c["check"]
    threads = c.get("threads")
    if check == "crossing":
        v = bounds.crossing_decay_check(c["delta"], c["p_h"], c.get("p_b"), _levels(c["n"]),
                                        c["trials"], c["seed"],
                                        entry_width=c.get("entry_width"),
                                        entry_cap=c["entry_cap"], chi=c.get("chi"),
                                        sigmas=c["sigmas"], threads=threads)
    elif check == "subcritical":
        b = bounds.subcritical_bound(c["delta"], c["p_h"], c.get("chi"), trials=c["trials"],
                                     seed=c["seed"], threads=threads)
        p_b = c.get("p_b")
        params = {"delta": b.delta, "p_h": b.p_h, "p_b": p_b}
        ok = p_b is not None and p_b < b.bound_ci[0]
        v = bounds.Verdict("subcritical", params, b.bound if p_b is None else p_b, b.bound,
                           ok, b.to_dict())
    elif check == "blocks":
        v = bounds.bad_block_check(c["delta"], c["n_max"], c["seeds"], c["seed"])
    elif check == "growth":
        v = bounds.growth_ratio_check(c["p_h"], _levels(c["N"])[-1], c["seeds"], c["n_min"],
                                      seed_base=c["seed"])
    else:
        v = bounds.critical_layers_experiment(c.get("p_b", 0.2), _levels(c["N"]), c["trials"],
                                              c["seed"], p_h=c.get("p_h", 0.5),
                                              threads=threads)
    _emit(v.to_json(), c.get("out"))
    if c.get("series") and v.series_columns:
        _emit(v.series_csv(), c["series"])
    return EXIT_OK


def cmd_sweep(c):
    graph = parse_graph(c["graph"])
    levels = sorted(set(_levels(c["N"])))
    budget = ExplorationBudget(c["max_sites"], levels[-1], c["max_radius"])
    rows = []
    for p in _floats(c["p"]):
        batch = run_survival_trials(graph, EnvParams.homogeneous(p), levels[-1], c["trials"],
                                    c["seed"], budget=budget, site_mode=c["mode"] == "site",
                                    threads=c.get("threads"))
        rows.extend(_survival_rows(_label(c["graph"], graph), p, batch, levels))
    _emit(to_csv(rows, SURVIVAL_COLUMNS), c.get("out"))
    return EXIT_OK


def cmd_radii(c):
    lr = layer_radii(c["graph"], EnvParams(0.0, 1.0, 1.0, c["p_h"]), c["N"], c["seed"],
                     c["max_radius"])
    ratio = lr.ratio(2)
    rows = [{"n": n, "radius": int(lr.radii[n]), "size": int(lr.sizes[n]),
             "ratio": None if np.isnan(ratio[n]) else float(ratio[n])}
            for n in range(len(lr.radii))]
    _emit(to_csv(rows, ("n", "radius", "size", "ratio")), c.get("out"))
    return EXIT_OK


COMMANDS = {"survive": cmd_survive, "pc": cmd_pc, "chi": cmd_chi, "coupling": cmd_coupling,
            "bounds": cmd_bounds, "sweep": cmd_sweep, "radii": cmd_radii}


def main(argv=None):
    ap = build_parser()
    ns = vars(ap.parse_args(argv))
    cmd = ns.pop("command")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[cmd](resolve(cmd, ns))
    except ConfigError as exc:
        print(f"percolab {cmd}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ValueError, TypeError) as exc:
        print(f"percolab {cmd}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"percolab {cmd}: {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
