"""From snapshots to beliefs: graph preparation, extraction and estimates."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .engine import EngineConfig, run, run_with_backoff
from .errors import InconsistentEvidence, SchemaError
from .factor_graph import build_full_graph, build_scalable_graph
from .kernels import INF, reduced_w_support, time_axis
from .marginals import Marginals
from .model import FactorizedPrior, InfoStructure, JointPrior, Snapshot, as_factorized
from .tables import CascadeTables
from .update_rules import CascadeUpdater, NaiveUpdater

ALGORITHMS = ("full", "scalable")


@dataclass
class Problem:
    """A factor graph bound to its local functions."""

    fg: object
    tables: CascadeTables
    algorithm: str

    def updater(self, naive=False):
        return NaiveUpdater(self.fg, self.tables) if naive else CascadeUpdater(self.fg, self.tables)


def default_t_max(network, exact=False):
    """Largest component diameter in hops, or ``max |V_C| - 1`` when ``exact``."""
    if exact:
        return network.max_component_span
    return max(c.diameter for c in network.components) - 1


def prepare(network, model, snapshot, algorithm="full", t_max=None, prior=None, info=None):
    """Build the inflated graph for ``algorithm`` and bind the model to it."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if len(snapshot.x_tilde) != network.node_count:
        raise SchemaError("snapshot size does not match the network")
    if algorithm == "full":
        if prior is None:
            prior = model.prior.joint()
        elif not isinstance(prior, JointPrior):
            prior = prior.joint()
        t_cap = network.node_count - 1
        ws = reduced_w_support(model.w_prior, t_cap + 1, snapshot.allowed_w())
        if len(ws) == 0:
            raise InconsistentEvidence("no observation time is allowed", where="w")
        fg = build_full_graph(network, len(ws), len(prior.masses), t_cap)
    else:
        if t_max is None:
            t_max = default_t_max(network)
        prior = as_factorized(model.prior if prior is None else prior)
        ws = reduced_w_support(model.w_prior, t_max + 1, snapshot.allowed_w())
        if len(ws) == 0:
            raise InconsistentEvidence("no observation time is allowed", where="w")
        fg = build_scalable_graph(network, t_max, len(ws))
    tables = CascadeTables(fg, model, snapshot, prior, info)
    return Problem(fg, tables, algorithm)


def apply_info_masks(problem, info):
    """Rebind the local functions so they vanish outside the allowed sets."""
    merged = _merge_info(problem.tables.info, info)
    t = problem.tables
    prior = t.prior
    snapshot = t.snapshot
    if merged.w is not None:
        snapshot = replace(snapshot, info=merged)
    ws_before = len(t.wsupport)
    new = prepare(t.network, t.model, snapshot, problem.algorithm, t.t_cap, prior, merged)
    if len(new.tables.wsupport) != ws_before:
        return new
    return Problem(problem.fg, new.tables, problem.algorithm)


def _merge_info(a, b):
    times = dict(a.times)
    for k, v in b.times.items():
        times[k] = frozenset(v) & times[k] if k in times else frozenset(v)
    rel = dict(a.relative)
    for k, v in b.relative.items():
        rel[k] = frozenset(v) & rel[k] if k in rel else frozenset(v)
    w = a.w if b.w is None else (frozenset(b.w) if a.w is None else a.w & frozenset(b.w))
    return InfoStructure(times, rel, w)


@dataclass
class PseudoMarginals(Marginals):
    x_hat: np.ndarray | None = None
    algorithm: str = "full"


def _norm(x, what):
    total = x.sum()
    if not np.isfinite(total) or total <= 0:
        raise InconsistentEvidence(f"belief {what} vanished", where=what)
    return x / total


def extract_beliefs(store, problem):
    """Beliefs from the (undiscounted) final messages."""
    fg, t = problem.fg, problem.tables
    net = t.network
    n = net.node_count
    comp0 = net.components[0].id
    v_c = fg.info["comp_var"][comp0]
    prior_f = next(k for k, f in enumerate(fg.factors) if f.kind == "prior")
    anchor_f = next(k for k, f in enumerate(fg.factors) if f.meta.get("anchor") == comp0)
    q_ctx = _norm(store[(prior_f, v_c)] * store[(anchor_f, v_c)], "w")
    node_f = {f.meta["i"]: k for k, f in enumerate(fg.factors) if f.kind == "node"}
    edge_f = {(f.meta["i"], f.meta["j"]): k for k, f in enumerate(fg.factors) if f.kind == "edge"}

    n_t = t.n_t
    tA = np.zeros((n, n_t))
    tB = np.zeros((n, n_t))
    for i in range(n):
        j = net.adjacency[i][0]
        v = fg.info["edge_var"][(j, i)]
        b = store[(node_f[i], v)] * store[(edge_f[(min(i, j), max(i, j))], v)]
        ctx_axes = tuple(range(b.ndim - 4))
        tt = _norm(b.sum(axis=ctx_axes + (b.ndim - 2, b.ndim - 1)), f"t[{i}]")
        tA[i] = tt.sum(axis=1)
        tB[i] = tt.sum(axis=0)

    if problem.algorithm == "full":
        joint = q_ctx.sum(axis=0)
        w = q_ctx.sum(axis=1)
        x0 = np.zeros((n, 4))
        for c, pc in zip(t.candidates, joint):
            x0[np.arange(n), c] += pc
        out = PseudoMarginals(x0, tA, tB, w, t.wsupport.labels, t.t_cap, joint, t.candidates,
                              algorithm="full")
        out.x_hat = t.candidates[_joint_argmax(joint, t.candidates)].copy()
        return out
    x0 = np.stack([_norm(store[(node_f[i], fg.info["init_var"][i])], f"x[{i}]") for i in range(n)])
    out = PseudoMarginals(x0, tA, tB, q_ctx, t.wsupport.labels, t.t_cap, algorithm="scalable")
    out.x_hat = np.argmax(x0, axis=1)
    return out


def _joint_argmax(joint, candidates):
    best = np.flatnonzero(joint == joint.max())
    return min(best, key=lambda k: tuple(candidates[k].tolist()))


def map_estimates(marg):
    """Argmax of every belief; ties go to the first value in domain order."""
    if marg.x0_joint is not None:
        x_hat = marg.candidates[_joint_argmax(marg.x0_joint, marg.candidates)].copy()
    else:
        x_hat = np.argmax(marg.x0, axis=1)
    axis = time_axis(marg.t_cap)
    t_hat = [(axis[int(np.argmax(marg.tA[i]))], axis[int(np.argmax(marg.tB[i]))]) for i in range(marg.n)]
    return {"x0": x_hat, "x0_nodes": np.argmax(marg.x0, axis=1), "t": t_hat,
            "w": marg.w_labels[int(np.argmax(marg.w))]}


def rank_sources(marg, process):
    """Nodes by decreasing belief of carrying ``process`` initially."""
    bit = 1 << process
    score = marg.x0[:, bit] + marg.x0[:, 3]
    return sorted(range(marg.n), key=lambda i: (-score[i], i))


def infer(network, model, snapshot, algorithm="full", t_max=None, config=EngineConfig(),
          backoff=False, prior=None):
    """Run message passing and return ``(beliefs, report, problem, store)``."""
    problem = prepare(network, model, snapshot, algorithm, t_max, prior)
    updater = problem.updater()
    if backoff:
        store, report = run_with_backoff(problem.fg, updater, config)
    else:
        store, report = run(problem.fg, updater, config)
    return extract_beliefs(store, problem), report, problem, store


def spread_model(model, x0):
    """Degenerate model for forward spread: known ``x0``, ``w = 0``, exact readings."""
    from .kernels import ObservationTimePrior
    n = len(x0)
    return model.replace(prior=FactorizedPrior.point(x0), w_prior=ObservationTimePrior(0.5, 0, 0),
                         noise=np.tile(np.eye(4), (n, 1, 1)))


def estimate_spread(network, model, x0, horizon, t_max, config=EngineConfig()):
    """Expected count of nodes holding each process by ``horizon``, via the scalable graph."""
    if horizon > t_max:
        raise ValueError("horizon must not exceed t_max")
    x0 = np.asarray(x0, dtype=np.int64)
    m = spread_model(model, x0)
    snap = Snapshot(x0.copy())
    marg, report, _, _ = infer(network, m, snap, "scalable", t_max, config)
    spread = tuple(float(marg.times(p)[:, :horizon + 1].sum()) for p in (0, 1))
    return spread, marg, report


def marginals_document(marg, network, report=None, spread=None):
    doc = marg.to_json(network)
    est = map_estimates(marg)
    from .kernels import state_name
    labels = [str(x) for x in network.labels]
    doc["map"] = {
        "x0": {labels[i]: state_name(int(s)) for i, s in enumerate(est["x0"])},
        "x0_nodes": {labels[i]: state_name(int(s)) for i, s in enumerate(est["x0_nodes"])},
        "t": {labels[i]: ["inf" if v == INF else v for v in est["t"][i]] for i in range(network.node_count)},
        "w": est["w"],
    }
    doc["ranking"] = {name: [network.labels[i] for i in rank_sources(marg, p)]
                      for p, name in enumerate("AB")}
    if spread is not None:
        doc["spread"] = spread
    if report is not None:
        doc["report"] = report.to_json()
    return doc
