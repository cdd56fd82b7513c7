"""Exact posteriors by enumeration, for verification on small instances.

Three routes are available:

``branching``
    Simulates slot by slot and splits a configuration only where an
    infection attempt actually happens. Activation variables that are never
    consulted sum out to one, so this is exact while visiting far fewer terms
    than the full activation space.
``activations``
    Enumerates every activation vector literally and replays it.
``gamma``
    Sums the global function over ``(w, t, s)`` directly, without the
    activation variables, by contracting the local-function tables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationBudgetExceeded, InconsistentEvidence
from .factor_graph import build_full_graph, build_scalable_graph
from .kernels import INF, reduced_w_support
from .marginals import Marginals
from .model import JointPrior, Snapshot
from .simulator import NEVER, states_at, sweep_times
from .tables import CascadeTables
from .update_rules import contract

DEFAULT_BUDGET = 20_000_000


@dataclass
class Leaves:
    cand: np.ndarray  # (L,) candidate index
    prob: np.ndarray  # (L,) prior * activation probability
    T: np.ndarray  # (L, n, 2), NEVER = infinity
    s: np.ndarray | None = None  # (L, |E->|, 2) relative timings


def branch_leaves(network, lam, cands, weights, t_drop=None, horizon=None, record_s=False,
                  budget=DEFAULT_BUDGET):
    """Exact branching enumeration of infection times.

    ``t_drop`` discards every configuration with a finite time above it.
    ``horizon`` stops after the slots that decide infections up to that time.
    """
    cands = np.asarray(cands, dtype=np.int64)
    K, n = cands.shape
    edges = network.directed_edges
    T = np.full((K, n, 2), NEVER, dtype=np.int64)
    T[:, :, 0][(cands & 1) > 0] = 0
    T[:, :, 1][(cands & 2) > 0] = 0
    prob = np.asarray(weights, dtype=float).copy()
    cand = np.arange(K)
    outcome = np.full((K, len(edges), 2), -1, dtype=np.int8) if record_s else None
    stop = n if horizon is None else min(n, horizon)
    t = 0
    while t < stop and np.any(T == t):
        succeed_ok = t_drop is None or t + 1 <= t_drop
        for e, (k, j) in enumerate(edges):
            for p in (0, 1):
                idx = np.flatnonzero((T[:, k, p] == t) & (T[:, j, p] > t))
                if idx.size == 0:
                    continue
                cross = T[idx, j, 1 - p] <= t
                lam_i = np.where(cross, lam[e, 2 * p + 1], lam[e, 2 * p])
                if not succeed_ok:
                    prob[idx] *= 1.0 - lam_i
                    if record_s:
                        outcome[idx, e, p] = 0
                    continue
                sure = lam_i >= 1.0
                split = (lam_i > 0.0) & ~sure
                if record_s:
                    outcome[idx[lam_i <= 0.0], e, p] = 0
                    outcome[idx[sure], e, p] = 1
                T[idx[sure], j, p] = t + 1
                sp = idx[split]
                if sp.size:
                    ls = lam_i[split]
                    newT = T[sp].copy()
                    newT[:, j, p] = t + 1
                    T = np.concatenate([T, newT])
                    prob = np.concatenate([prob, prob[sp] * ls])
                    prob[sp] *= 1.0 - ls
                    cand = np.concatenate([cand, cand[sp]])
                    if record_s:
                        newO = outcome[sp].copy()
                        newO[:, e, p] = 1
                        outcome[sp, e, p] = 0
                        outcome = np.concatenate([outcome, newO])
                    if len(prob) > budget:
                        raise EnumerationBudgetExceeded(
                            f"branching enumeration exceeded {budget} configurations")
        keep = prob > 0
        if not keep.all():
            T, prob, cand = T[keep], prob[keep], cand[keep]
            if record_s:
                outcome = outcome[keep]
        t += 1
    s = _relative_from_outcomes(network, T, outcome) if record_s else None
    return Leaves(cand, prob, T, s)


def _relative_from_outcomes(network, T, outcome):
    L = T.shape[0]
    s = np.empty((L, len(network.directed_edges), 2), dtype=np.int8)
    for e, (k, j) in enumerate(network.directed_edges):
        for p in (0, 1):
            tk, tj, o = T[:, k, p], T[:, j, p], outcome[:, e, p]
            never_k = tk >= NEVER
            s_e = np.ones(L, dtype=np.int8)
            s_e[never_k & (tj >= NEVER)] = 0
            s_e[~never_k & (o == 1)] = 0
            s_e[~never_k & (o == 0) & (tj >= NEVER)] = 0
            s[:, e, p] = s_e
    return s


def activation_leaves(network, lam, cands, weights, budget=DEFAULT_BUDGET):
    """Literal enumeration over every activation vector."""
    cands = np.asarray(cands, dtype=np.int64)
    m = len(network.directed_edges)
    n_d = 2 ** (4 * m)
    if n_d * len(cands) > budget:
        raise EnumerationBudgetExceeded(
            f"activation enumeration needs {n_d * len(cands)} terms (budget {budget})")
    bits = ((np.arange(n_d)[:, None] >> np.arange(4 * m)[None, :]) & 1).astype(bool)
    success = bits.reshape(n_d, m, 4)
    pd = np.prod(np.where(success, lam[None], 1.0 - lam[None]), axis=(1, 2))
    out_T, out_p, out_c, out_s = [], [], [], []
    for c, (x0, wt) in enumerate(zip(cands, weights)):
        T = sweep_times(network, np.repeat(x0[None], n_d, axis=0), success)
        out_T.append(T)
        out_p.append(wt * pd)
        out_c.append(np.full(n_d, c))
        out_s.append(_relative_from_activations(network, T, success))
    return Leaves(np.concatenate(out_c), np.concatenate(out_p), np.concatenate(out_T),
                  np.concatenate(out_s))


def _relative_from_activations(network, T, success):
    """s = sign(t_prop - t_j) with the branch chosen by the propagation-time rule."""
    L = T.shape[0]
    s = np.empty((L, len(network.directed_edges), 2), dtype=np.int8)
    for e, (k, j) in enumerate(network.directed_edges):
        for p in (0, 1):
            tk = T[:, k, p].astype(float)
            tk[T[:, k, p] >= NEVER] = INF
            tj = T[:, j, p].astype(float)
            tj[T[:, j, p] >= NEVER] = INF
            tjo = T[:, j, 1 - p].astype(float)
            tjo[T[:, j, 1 - p] >= NEVER] = INF
            before = tk < tjo
            d_one = np.where(before, success[:, e, 2 * p], success[:, e, 2 * p + 1])
            t_prop = np.where(d_one, tk + 1, INF)
            sig = np.where(t_prop == tj, 0, np.where(t_prop > tj, 1, -1))
            s[:, e, p] = sig
    return s


# --- accumulation -----------------------------------------------------------------

@dataclass
class ExactPosterior(Marginals):
    joint_evidence: np.ndarray | None = None  # P(x0 = c, O) per candidate

    @property
    def evidence_probability(self):
        return self.evidence


def _accumulate(network, model, snapshot, prior, leaves, t_cap, cap, info):
    n = network.node_count
    ws = reduced_w_support(model.w_prior, cap, snapshot.allowed_w())
    if len(ws) == 0:
        raise InconsistentEvidence("no observation time is allowed", where="w")
    T = leaves.T
    weight = leaves.prob.copy()
    for (i, p), allowed in info.times.items():
        vals = T[:, i, p]
        ok = np.zeros(len(vals), dtype=bool)
        for a in allowed:
            ok |= (vals >= NEVER) if a == INF else (vals == a)
        weight = weight * ok
    if info.relative:
        if leaves.s is None:
            raise ValueError("relative-timing masks need recorded relative timings")
        for (i, j, p), allowed in info.relative.items():
            e = network.edge_index[(i, j)]
            weight = weight * np.isin(leaves.s[:, e, p], list(allowed))
    x_t = snapshot.x_tilde
    W = np.empty((len(weight), len(ws)))
    for k, point in enumerate(ws.points):
        states = states_at(T, point)  # (L, n)
        lik = np.prod(model.noise[np.arange(n)[None, :], states, x_t[None, :]], axis=1)
        W[:, k] = weight * lik * ws.masses[k]
    total = W.sum()
    if not total > 0:
        raise InconsistentEvidence("observation has zero probability", where="oracle")
    per_leaf = W.sum(axis=1)
    K = len(prior.masses)
    joint_ev = np.bincount(leaves.cand, weights=per_leaf, minlength=K)
    joint = joint_ev / total
    x0 = np.zeros((n, 4))
    for c, pc in zip(prior.candidates, joint):
        x0[np.arange(n), c] += pc
    n_t = t_cap + 2
    idx = np.where(T >= NEVER, n_t - 1, T)
    if np.any(idx > n_t - 1):
        raise ValueError("infection time beyond the time axis")
    times = np.zeros((2, n, n_t))
    for p in (0, 1):
        for i in range(n):
            times[p, i] = np.bincount(idx[:, i, p], weights=per_leaf, minlength=n_t) / total
    return ExactPosterior(x0, times[0], times[1], W.sum(axis=0) / total, ws.labels, t_cap,
                          joint, prior.candidates, float(total), joint_evidence=joint_ev)


def enumerate_posterior(network, model, snapshot, measure="P", t_cap=None, method="branching",
                        prior=None, need_times=True, budget=DEFAULT_BUDGET):
    """Exact posterior under the original measure ``P`` or the capped measure ``P'``.

    Under ``P'`` every finite infection time must be at most ``t_cap``; the
    outcome space is conditioned on that event. Under ``P`` ``t_cap`` is only
    the length of the reported time axis and defaults to ``|V| - 1``.
    With ``need_times=False`` the branching route stops at the latest
    observation time that matters, which is exact for the ``x0`` and ``w``
    tables but leaves the time tables truncated.
    """
    if measure not in ("P", "P'"):
        raise ValueError("measure must be 'P' or \"P'\"")
    n = network.node_count
    if measure == "P'":
        if t_cap is None:
            raise ValueError("the capped measure needs t_cap")
        t_drop = t_cap
    else:
        t_cap = n - 1 if t_cap is None else t_cap
        if t_cap < network.max_component_span:
            raise ValueError("t_cap below the longest possible finite time under P")
        t_drop = None
    if method == "gamma":
        return gamma_route(network, model, snapshot, measure, t_cap, prior)
    if prior is None:
        prior = model.prior.joint()
    elif not isinstance(prior, JointPrior):
        prior = prior.joint()
    info = snapshot.info
    cap = t_cap + 1
    if method == "activations":
        leaves = activation_leaves(network, model.lam, prior.candidates, prior.masses, budget)
        if t_drop is not None:
            finite = leaves.T < NEVER
            keep = ~np.any(finite & (leaves.T > t_drop), axis=(1, 2))
            leaves = Leaves(leaves.cand[keep], leaves.prob[keep], leaves.T[keep], leaves.s[keep])
    elif method == "branching":
        horizon = None
        if not need_times and not info.times and not info.relative and t_drop is None:
            ws = reduced_w_support(model.w_prior, cap, snapshot.allowed_w())
            horizon = max(ws.points) if len(ws) else 0
        leaves = branch_leaves(network, model.lam, prior.candidates, prior.masses, t_drop,
                               horizon, record_s=bool(info.relative), budget=budget)
    else:
        raise ValueError(f"unknown method {method!r}")
    post = _accumulate(network, model, snapshot, prior, leaves, t_cap, cap, info)
    post.extra["method"] = method
    post.extra["measure"] = measure
    return post


def gamma_route(network, model, snapshot, measure="P", t_cap=None, prior=None):
    """P(x0, O) by summing the global function over ``(w, t, s)``.

    Uses the joint-prior tables for ``P`` or a joint prior, and the per-node
    tables otherwise; only the joint evidence, the ``x0`` tables and ``w`` are filled in.
    """
    n = network.node_count
    prior = model.prior if prior is None else prior
    if measure == "P" or isinstance(prior, JointPrior):
        # the capped measure is the same sum with times restricted to 0..t_cap
        t_cap = n - 1 if t_cap is None else t_cap
        if not isinstance(prior, JointPrior):
            prior = prior.joint()
        ws = reduced_w_support(model.w_prior, t_cap + 1, snapshot.allowed_w())
        fg = build_full_graph(network, len(ws), len(prior.masses), t_cap)
        tables = CascadeTables(fg, model, snapshot, prior)
        terms = [p for f in range(len(fg.factors)) for p in tables.pieces(f)]
        wx = contract(terms, ("w", "x0"))
        total = wx.sum()
        if not total > 0:
            raise InconsistentEvidence("observation has zero probability", where="gamma route")
        joint_ev = wx.sum(axis=0)
        joint = joint_ev / total
        x0 = np.zeros((n, 4))
        for c, pc in zip(prior.candidates, joint):
            x0[np.arange(n), c] += pc
        cands = prior.candidates
    else:
        ws = reduced_w_support(model.w_prior, t_cap + 1, snapshot.allowed_w())
        fg = build_scalable_graph(network, t_cap, len(ws))
        tables = CascadeTables(fg, model, snapshot, prior)
        terms = [p for f in range(len(fg.factors)) for p in tables.pieces(f)]
        out_names = ("w",) + tuple(f"x{i}" for i in range(n))
        full = contract(terms, out_names)
        total = full.sum()
        if not total > 0:
            raise InconsistentEvidence("observation has zero probability", where="gamma route")
        wx = full.reshape(len(ws), -1)
        grid = np.array(list(itertools.product(range(4), repeat=n)), dtype=np.int64)
        keep = wx.sum(axis=0) > 0
        cands = grid[keep]
        joint_ev = wx.sum(axis=0)[keep]
        joint = joint_ev / total
        x0 = np.stack([full.sum(axis=tuple(a for a in range(n + 1) if a != i + 1)) for i in range(n)]) / total
    n_t = t_cap + 2
    nan_t = np.full((n, n_t), np.nan)
    return ExactPosterior(x0, nan_t, nan_t.copy(), wx.sum(axis=1) / total, ws.labels, t_cap, joint,
                          cands, float(total), joint_evidence=joint_ev, extra={"method": "gamma"})


def exact_spread(network, model, x0, horizon, measure="P", t_cap=None):
    """Expected number of nodes carrying each process by time ``horizon``."""
    x0 = np.asarray(x0, dtype=np.int64)
    t_drop = t_cap if measure == "P'" else None
    leaves = branch_leaves(network, model.lam, x0[None], [1.0], t_drop=t_drop,
                           horizon=None if t_drop is not None else horizon)
    total = leaves.prob.sum()
    out = []
    for p in (0, 1):
        hit = (leaves.T[:, :, p] <= horizon).sum(axis=1)
        out.append(float((leaves.prob * hit).sum() / total))
    return tuple(out)


def trivial_snapshot(network, x0):
    """A snapshot carrying no information, for forward computations."""
    return Snapshot(np.asarray(x0, dtype=np.int64), w_known=0)
