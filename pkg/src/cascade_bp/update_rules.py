"""Factor-to-variable message computations.

Both updaters expose ``outgoing(f, store, eta, targets=None)`` returning the
unnormalised messages from factor ``f`` to its neighbours, computed from the
messages in ``store`` (a dict keyed by ``(factor id, variable id)``).
``eta=None`` skips discounting entirely.

``CascadeUpdater`` uses the case-split forms on inflated graphs,
``NaiveUpdater`` sums the generic rule over the factor's local domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factor_graph import edge_factor


def discount(x, eta):
    if eta is None:
        return x
    return np.power(x, eta)


@dataclass
class PhiCache:
    """Restricted sums of one incoming message over ``(s^A, s^B)``."""

    full: np.ndarray
    a1: np.ndarray  # s^A = 1
    b1: np.ndarray  # s^B = 1
    ab1: np.ndarray  # s^A = s^B = 1


def build_phi_cache(message):
    """``message`` has trailing axes ``(..., s^A, s^B)``."""
    return PhiCache(full=message.sum(axis=(-2, -1)), a1=message[..., 1, :].sum(axis=-1),
                    b1=message[..., :, 1].sum(axis=-1), ab1=message[..., 1, 1].copy())


def _region_masks(n_t):
    z = np.arange(n_t) == 0
    za, zb = z[:, None], z[None, :]
    return ((za & zb).astype(float), (za & ~zb).astype(float),
            (~za & zb).astype(float), (~za & ~zb).astype(float))


class OpCounter:
    """Counts Phi-entry multiplications in node-factor updates."""

    def __init__(self):
        self.phi_products = 0
        self.node_updates = 0

    def reset(self):
        self.phi_products = 0
        self.node_updates = 0


class CascadeUpdater:
    """Optimised updates for the inflated graphs (both variants)."""

    def __init__(self, fg, tables):
        self.fg = fg
        self.t = tables
        self.net = fg.info["network"]
        self.n_t = tables.n_t
        self.regions = _region_masks(self.n_t)
        self.counter = OpCounter()
        ev = fg.info["edge_var"]
        self.edge_var = ev
        self.comp_var = fg.info["comp_var"]
        self.init_var = fg.info["init_var"]
        self._edge_factor = {(i, j): edge_factor(fg, i, j) for (i, j) in self.net.undirected_edges}
        self._anchor = {}
        for k, fac in enumerate(fg.factors):
            if "anchor" in fac.meta:
                self._anchor[fac.meta["anchor"]] = k
        self._node_factor = {fac.meta["i"]: k for k, fac in enumerate(fg.factors) if fac.kind == "node"}
        self._prior = next(k for k, fac in enumerate(fg.factors) if fac.kind == "prior")

    def ef(self, i, j):
        return self._edge_factor[(min(i, j), max(i, j))]

    def outgoing(self, f, store, eta=None, targets=None):
        fac = self.fg.factors[f]
        if fac.kind == "node":
            return self._node(f, fac.meta["i"], store, eta, targets)
        if fac.kind == "edge":
            return self._edge(f, fac, store, eta)
        return self._prior_msgs(f, store, eta)

    # node factors -----------------------------------------------------------
    def _case_split(self, node_table, P0, PA, PB, PAB):
        """Values for each ``s_{j->i}`` given the excluded-neighbour products."""
        r1, r2a, r2b, r3 = self.regions
        out = np.empty(P0.shape + (2, 2))
        for sa in (0, 1):
            for sb in (0, 1):
                v = (r1 + r2a + r2b + r3) * P0
                if sb:
                    v = v - (r2a + r3) * PB
                if sa:
                    v = v - (r2b + r3) * PA
                if sa and sb:
                    v = v + r3 * PAB
                out[..., sa, sb] = v
        # the subtractions can leave round-off below zero
        return np.maximum(out, 0.0) * node_table[..., None, None]

    def _products(self, phis, exclude=None):
        shape = next(iter(phis.values())).full.shape
        P0, PA, PB, PAB = (np.ones(shape) for _ in range(4))
        used = 0
        for k, ph in phis.items():
            if k == exclude:
                continue
            P0 = P0 * ph.full
            PA = PA * ph.a1
            PB = PB * ph.b1
            PAB = PAB * ph.ab1
            used += 1
        self.counter.phi_products += 4 * used * int(np.prod(shape))
        return P0, PA, PB, PAB

    def phi_caches(self, i, store, eta):
        return {k: build_phi_cache(discount(store[(self.ef(i, k), self.edge_var[(k, i)])], eta))
                for k in self.net.adjacency[i]}

    def _node(self, f, i, store, eta, targets):
        phis = self.phi_caches(i, store, eta)
        table = self.t.node_table[i]
        out = {}
        nbrs = self.net.adjacency[i]
        chosen = nbrs if targets is None else [j for j in nbrs if j in targets]
        for j in chosen:
            self.counter.node_updates += 1
            out[self.edge_var[(j, i)]] = self._case_split(table, *self._products(phis, exclude=j))
        if self.fg.variant == "scalable" and (targets is None or "x" in targets):
            out[self.init_var[i]] = self._initial_state(i, phis)
        return out

    def _initial_state(self, i, phis):
        P0, PA, PB, PAB = self._products(phis)
        r1, r2a, r2b, r3 = self.regions
        block = r1 * P0 + r2a * (P0 - PB) + r2b * (P0 - PA) + r3 * (P0 + PAB - PA - PB)
        block = np.maximum(block, 0.0)
        weight = np.einsum("wab,wab->ab", self.t.gamma[i], block)
        return self.t.node_prior[i] * np.einsum("xab,ab->x", self.t.zeta, weight)

    # edge factors -------------------------------------------------------------
    def _edge(self, f, fac, store, eta):
        i, j = fac.meta["i"], fac.meta["j"]
        v_ji, v_ij = self.edge_var[(j, i)], self.edge_var[(i, j)]
        K = self.t.kernel[(i, j)]
        ctx = self.t.ctx_shape
        m = K.shape[0]
        fi = self._node_factor[i]
        fj = self._node_factor[j]
        Mi = discount(store[(fi, v_ji)], eta).reshape(-1, m)  # message into f_ij from v_{j->i}
        Mj = discount(store[(fj, v_ij)], eta).reshape(-1, m)
        to_ji = Mj @ K.T
        to_ij = Mi @ K
        out = {}
        if "anchor" in fac.meta:
            c = fac.meta["anchor"]
            v_c = self.comp_var[c]
            xi = discount(store[(self._prior, v_c)], eta).reshape(-1, 1)
            out[v_c] = np.einsum("cm,cm->c", to_ij, Mj).reshape(ctx)
            to_ji = to_ji * xi
            to_ij = to_ij * xi
        out[v_ji] = to_ji.reshape(self.fg.variables[v_ji].sizes)
        out[v_ij] = to_ij.reshape(self.fg.variables[v_ij].sizes)
        return out

    # prior factor -------------------------------------------------------------
    def _prior_msgs(self, f, store, eta):
        anchors = {c: discount(store[(self._anchor[c], self.comp_var[c])], eta)
                   for c in self.comp_var}
        out = {}
        for c, v_c in self.comp_var.items():
            msg = self.t.prior_table.copy()
            for c2, a in anchors.items():
                if c2 != c:
                    msg = msg * a
            out[v_c] = msg
        return out


class NaiveUpdater:
    """Generic sum-product rule by direct summation over the local domain."""

    def __init__(self, fg, tables):
        self.fg = fg
        self.tables = tables

    def incoming(self, f, u, store, eta):
        """Variable-to-factor message ``u -> f``."""
        var = self.fg.variables[u]
        msg = np.ones(var.sizes)
        for g in self.fg.factors_of(u):
            if g != f:
                msg = msg * discount(store[(g, u)], eta)
        return msg

    def message(self, f, v, store, eta=None):
        return naive_factor_message(self.fg, self.tables, f, v,
                                    {u: self.incoming(f, u, store, eta)
                                     for u in self.fg.factors[f].neighbors if u != v})

    def outgoing(self, f, store, eta=None, targets=None):
        return {v: self.message(f, v, store, eta) for v in self.fg.factors[f].neighbors}


def naive_factor_message(fg, tables, f, v, incoming):
    """Sum of ``f * prod(incoming)`` over the coordinates outside ``v``'s scope.

    ``incoming`` maps neighbour variable ids (other than ``v``) to their
    variable-to-factor messages.
    """
    terms = list(tables.pieces(f))
    terms += [(msg, fg.variables[u].scope) for u, msg in incoming.items()]
    target = fg.variables[v]
    present = {c for _, names in terms for c in names}
    terms += [(np.ones(size), (name,)) for name, size in zip(target.scope, target.sizes)
              if name not in present]
    return contract(terms, target.scope)


def contract(terms, output):
    """Einsum over named axes: ``terms`` is a list of ``(array, names)``."""
    letters = {}
    operands = []
    for arr, names in terms:
        operands += [arr, [letters.setdefault(c, len(letters)) for c in names]]
    operands.append([letters[c] for c in output])
    return np.einsum(*operands, optimize="greedy")
