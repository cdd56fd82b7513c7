"""Command-line entry point: ``cascade-bp <subcommand> ...``.

Every file written is accompanied by ``<stem>.manifest.json`` recording the
subcommand, inputs, configuration, seed, library versions and per-phase
wall-clock times.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import EngineConfig
from .errors import (EnumerationBudgetExceeded, InconsistentEvidence, NoConvergence, SchemaError,
                     StrengthBudgetExceeded)
from .inference import default_t_max, estimate_spread, infer, marginals_document, prepare
from .kernels import state_name
from .marginals import Marginals, compare_marginals
from .model import make_model, model_from_json, read_json, snapshot_from_json, snapshot_to_json, write_json
from .network import load_network
from .oracle import enumerate_posterior
from .simulator import sample_trajectory
from .strength import convergence_threshold
from .validation import check_states

EXIT_OK = 0
EXIT_SCHEMA = 3
EXIT_INCONSISTENT = 4
EXIT_NO_CONVERGENCE = 5
EXIT_ABOVE_TOL = 6
EXIT_BUDGET = 7

log = logging.getLogger("cascade_bp")


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict
    config: dict
    seed: int | None
    versions: dict = field(default_factory=lambda: {
        "cascade_bp": __version__, "numpy": np.__version__, "python": platform.python_version()})
    phases: dict = field(default_factory=dict)
    exit_code: int = 0

    @contextmanager
    def phase(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - start


def manifest_path(out):
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


def _write(out, doc, manifest):
    write_json(out, doc)
    write_json(manifest_path(out), asdict(manifest))


def _load(args, manifest, snapshot=True):
    with manifest.phase("load"):
        net = load_network(args.graph)
        model = model_from_json(read_json(args.params), net) if args.params else make_model(net)
        snap = snapshot_from_json(read_json(args.snapshot), net) if snapshot else None
    return net, model, snap


def _engine_config(args):
    return EngineConfig(schedule=args.schedule, eta=args.eta, eta_step=args.eta_step, tol=args.tol,
                        max_iters=args.max_iters, seed=args.seed, sample_neighbors=args.sample_neighbors,
                        init="random" if args.random_init else "ones", workers=args.workers)


def _t_max(args, net):
    if args.tmax is not None:
        return args.tmax
    return default_t_max(net, exact=args.tmax_exact)


def write_csv(path, marg, network):
    """Long-format rows ``node,table,value,p`` for plotting."""
    axis = ["inf" if np.isinf(t) else int(t) for t in marg.t_axis]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "table", "value", "p"])
        for i, lab in enumerate(network.labels):
            for s in range(4):
                w.writerow([lab, "x0", state_name(s), repr(float(marg.x0[i, s]))])
            for name in ("tA", "tB"):
                for t, p in zip(axis, getattr(marg, name)[i]):
                    w.writerow([lab, name, t, repr(float(p))])
        for lab, p in zip(marg.w_labels, marg.w):
            w.writerow(["", "w", lab, repr(float(p))])


# subcommands ---------------------------------------------------------------

def cmd_simulate(args, manifest):
    net, model, _ = _load(args, manifest, snapshot=False)
    with manifest.phase("simulate"):
        traj = sample_trajectory(net, model, args.seed)
        snap = traj.to_snapshot(reveal_w=args.reveal_w)
    doc = snapshot_to_json(snap, net)
    if args.no_truth:
        doc.pop("truth", None)
    _write(args.out, doc, manifest)
    return EXIT_OK


def cmd_infer(args, manifest):
    net, model, snap = _load(args, manifest)
    t_max = _t_max(args, net) if args.alg == "scalable" else None
    manifest.config["t_max"] = t_max
    config = _engine_config(args)
    with manifest.phase("infer"):
        marg, report, _, _ = infer(net, model, snap, args.alg, t_max, config, backoff=args.backoff)
    for a in report.attempts:
        log.info("eta=%s converged=%s iterations=%s", a["eta"], a["converged"], a["iterations"])
    doc = marginals_document(marg, net, report)
    doc["algorithm"] = args.alg
    with manifest.phase("write"):
        _write(args.out, doc, manifest)
        if args.csv:
            write_csv(args.csv, marg, net)
    if not report.converged:
        print(f"no convergence after {report.iterations} sweeps (delta {report.final_delta:.3g})",
              file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_oracle(args, manifest):
    net, model, snap = _load(args, manifest)
    t_cap = args.tmax
    if args.measure == "P'" and t_cap is None:
        t_cap = _t_max(args, net)
    manifest.config["t_cap"] = t_cap
    with manifest.phase("enumerate"):
        post = enumerate_posterior(net, model, snap, args.measure, t_cap, method=args.method,
                                   budget=args.budget)
    doc = marginals_document(post, net)
    with manifest.phase("write"):
        _write(args.out, doc, manifest)
        if args.csv:
            write_csv(args.csv, post, net)
    return EXIT_OK


def cmd_compare(args, manifest):
    with manifest.phase("load"):
        a = Marginals.from_json(read_json(args.left))
        b = Marginals.from_json(read_json(args.right))
    dist = compare_marginals(a, b)
    for name, value in dist.items():
        print(f"{name:>8}  {value:.3e}")
    code = EXIT_OK if dist["max"] <= args.tol else EXIT_ABOVE_TOL
    if args.out:
        manifest.exit_code = code
        _write(args.out, {"tv": dist, "tol": args.tol, "within_tol": code == EXIT_OK}, manifest)
    return code


def cmd_spread(args, manifest):
    net, model, _ = _load(args, manifest, snapshot=False)
    x0 = check_states(args.x0.split(","), net)
    t_max = args.tmax if args.tmax is not None else max(args.horizon, default_t_max(net, exact=True))
    manifest.config["t_max"] = t_max
    with manifest.phase("infer"):
        spread, marg, report = estimate_spread(net, model, x0, args.horizon, t_max, _engine_config(args))
    print(f"A {spread[0]:.10g}\nB {spread[1]:.10g}")
    doc = marginals_document(marg, net, report, spread={"A": spread[0], "B": spread[1],
                                                       "horizon": args.horizon})
    with manifest.phase("write"):
        _write(args.out, doc, manifest)
        if args.csv:
            write_csv(args.csv, marg, net)
    return EXIT_OK


def cmd_strength(args, manifest):
    net, model, snap = _load(args, manifest)
    t_max = _t_max(args, net) if args.alg == "scalable" else None
    with manifest.phase("build"):
        problem = prepare(net, model, snap, args.alg, t_max)
    if args.dot:
        Path(args.dot).write_text(problem.fg.to_dot(), encoding="utf-8")
    with manifest.phase("strength"):
        th = convergence_threshold(problem.fg, problem.tables)
    print(th.describe())
    if args.out:
        _write(args.out, {"rho": th.rho, "eta_star": "unconstrained" if th.unconstrained else th.eta_star,
                          "entries": th.entries, "power_iteration_converged": th.converged}, manifest)
    return EXIT_OK


# parser ----------------------------------------------------------------------

def _engine_flags(p):
    g = p.add_argument_group("engine")
    g.add_argument("--schedule", choices=("lazy", "impatient"), default="lazy")
    g.add_argument("--eta", type=float, default=1.0, help="message discount in (0, 1]")
    g.add_argument("--eta-step", type=float, default=0.1, help="back-off decrement")
    g.add_argument("--tol", type=float, default=1e-8, help="convergence threshold (max abs change)")
    g.add_argument("--max-iters", type=int, default=None)
    g.add_argument("--sample-neighbors", action="store_true")
    g.add_argument("--random-init", action="store_true", help="random positive initial messages")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--backoff", action="store_true", help="lower eta until a run converges")


def _model_inputs(p, snapshot=True):
    p.add_argument("--graph", required=True, help="graph JSON: {nodes?, edges}")
    p.add_argument("--params", help="model JSON (default: lambda 0.5, exact readings, unique source)")
    if snapshot:
        p.add_argument("--snapshot", required=True)


def _tmax_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tmax", type=int, default=None, help="time cap (default: largest diameter)")
    g.add_argument("--tmax-exact", action="store_true", help="use max |V_C| - 1, which loses nothing")


def build_parser():
    parser = argparse.ArgumentParser(prog="cascade-bp", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="single source of randomness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample one trajectory and write its snapshot")
    _model_inputs(p, snapshot=False)
    p.add_argument("--out", required=True)
    p.add_argument("--reveal-w", action="store_true", help="record the observation time")
    p.add_argument("--no-truth", action="store_true", help="omit the ground-truth block")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="belief propagation on the inflated factor graph")
    _model_inputs(p)
    p.add_argument("--alg", choices=("full", "scalable"), default="full")
    _tmax_flags(p)
    _engine_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle", help="exact posterior by enumeration")
    _model_inputs(p)
    p.add_argument("--measure", choices=("P", "P'"), default="P")
    p.add_argument("--method", choices=("branching", "activations", "gamma"), default="branching")
    _tmax_flags(p)
    p.add_argument("--budget", type=float, default=2e7)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="total-variation distances between two marginals files")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("spread", help="expected spread from a known initial state")
    _model_inputs(p, snapshot=False)
    p.add_argument("--x0", required=True, help="comma-separated states in node order, e.g. A,S,B")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--tmax", type=int, default=None)
    _engine_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_spread)

    p = sub.add_parser("strength", help="spectral radius of the factor-strength matrix")
    _model_inputs(p)
    p.add_argument("--alg", choices=("full", "scalable"), default="scalable")
    _tmax_flags(p)
    p.add_argument("--dot", help="also write the factor graph in DOT format")
    p.add_argument("--out")
    p.set_defaults(func=cmd_strength)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    inputs = {k: config[k] for k in ("graph", "params", "snapshot", "left", "right") if config.get(k)}
    manifest = RunManifest(args.command, inputs, config, args.seed)
    try:
        return args.func(args, manifest)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InconsistentEvidence as exc:
        print(f"inconsistent evidence ({exc.where}): {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        for a in exc.attempts:
            print(f"  eta={a['eta']} delta={a['final_delta']:.3g}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (EnumerationBudgetExceeded, StrengthBudgetExceeded) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
