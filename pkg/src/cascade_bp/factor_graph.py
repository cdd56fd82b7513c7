"""Factor graphs with clustered variable nodes, and the two inflated builders.

A variable node is a cluster of named scalar coordinates; a message to it is
an array whose axes follow that cluster's ``scope``. Factor local functions
live elsewhere (``tables``), so one structure can be bound to many models.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

KIND_ORDER = {"edge": 0, "node": 1, "prior": 2}


@dataclass(frozen=True)
class VariableNode:
    name: str
    scope: tuple  # scalar coordinate names
    sizes: tuple
    kind: str = "plain"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def size(self):
        return int(np.prod(self.sizes, dtype=np.int64))


@dataclass(frozen=True)
class FactorNode:
    name: str
    neighbors: tuple  # variable node ids
    kind: str = "plain"
    meta: dict = field(default_factory=dict, compare=False)


class FactorGraph:
    """Bipartite graph of factor and variable nodes."""

    def __init__(self, variables, factors, variant="generic", **info):
        self.variables = tuple(variables)
        self.factors = tuple(factors)
        self.variant = variant
        self.info = info
        self._var_factors = [[] for _ in self.variables]
        for f_id, f in enumerate(self.factors):
            for v in f.neighbors:
                self._var_factors[v].append(f_id)
        self._var_factors = tuple(tuple(x) for x in self._var_factors)
        self._var_by_name = {v.name: k for k, v in enumerate(self.variables)}
        self._factor_by_name = {f.name: k for k, f in enumerate(self.factors)}
        sizes = {}
        for v in self.variables:
            for name, size in zip(v.scope, v.sizes):
                if sizes.setdefault(name, size) != size:
                    raise ValueError(f"coordinate {name!r} has inconsistent sizes")
        self.coordinate_sizes = sizes

    # lookup -------------------------------------------------------------
    def var_id(self, name):
        return self._var_by_name[name]

    def factor_id(self, name):
        return self._factor_by_name[name]

    def factors_of(self, v):
        return self._var_factors[v]

    def factor_scope(self, f):
        """Union of the neighbours' scopes, in first-seen order."""
        seen = []
        for v in self.factors[f].neighbors:
            for name in self.variables[v].scope:
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    @cached_property
    def message_keys(self):
        return tuple((f, v) for f in self.factor_order for v in self.factors[f].neighbors)

    @cached_property
    def factor_order(self):
        """Fixed ordering by (kind, node, neighbour)."""
        def key(f_id):
            f = self.factors[f_id]
            return (KIND_ORDER.get(f.kind, 3), f.meta.get("i", -1), f.meta.get("j", -1), f.name)
        return tuple(sorted(range(len(self.factors)), key=key))

    @property
    def edge_count(self):
        return sum(len(f.neighbors) for f in self.factors)

    def domain_size(self, v):
        return self.variables[v].size

    def store_size(self):
        """Number of message entries (one message per factor-variable edge, each way of f -> v)."""
        return sum(self.domain_size(v) for _, v in self.message_keys)

    # topology -----------------------------------------------------------
    def _adjacency(self):
        nv = len(self.variables)
        adj = [[] for _ in range(nv + len(self.factors))]
        for f_id, f in enumerate(self.factors):
            for v in f.neighbors:
                adj[v].append(nv + f_id)
                adj[nv + f_id].append(v)
        return adj

    def is_connected(self):
        adj = self._adjacency()
        return len(_bfs(adj, 0)) == len(adj)

    def is_acyclic(self):
        adj = self._adjacency()
        seen, parts = set(), 0
        for s in range(len(adj)):
            if s not in seen:
                parts += 1
                seen.update(_bfs(adj, s))
        return self.edge_count == len(adj) - parts

    def diameter(self):
        """Largest shortest-path length, counted in nodes traversed."""
        adj = self._adjacency()
        best = 0
        for s in range(len(adj)):
            dist = _bfs(adj, s)
            if len(dist) != len(adj):
                raise ValueError("factor graph is not connected")
            best = max(best, max(dist.values()))
        return best + 1

    def coordinate_is_connected(self, name):
        """Nodes whose scope contains ``name`` induce a connected subgraph."""
        nv = len(self.variables)
        holders = {v for v, var in enumerate(self.variables) if name in var.scope}
        holders |= {nv + f for f in range(len(self.factors)) if name in self.factor_scope(f)}
        if not holders:
            return False
        adj = self._adjacency()
        start = next(iter(holders))
        seen, queue = {start}, deque([start])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w in holders and w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen == holders

    def to_dot(self):
        lines = ["graph factor_graph {", "  node [fontsize=10];"]
        for k, v in enumerate(self.variables):
            lines.append(f'  v{k} [shape=ellipse, label="{v.name}"];')
        for k, f in enumerate(self.factors):
            lines.append(f'  f{k} [shape=box, label="{f.name}"];')
        for k, f in enumerate(self.factors):
            for v in f.neighbors:
                lines.append(f"  f{k} -- v{v};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (f"FactorGraph(variant={self.variant!r}, variables={len(self.variables)}, "
                f"factors={len(self.factors)}, edges={self.edge_count})")


def _bfs(adj, start):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


# --- coordinate naming --------------------------------------------------------

def t_names(i):
    return (f"tA{i}", f"tB{i}")


def s_names(j, i):
    """Relative timing of the propagation j -> i."""
    return (f"sA{j}_{i}", f"sB{j}_{i}")


def edge_var_name(j, i):
    return f"v[{j}->{i}]"


# --- inflated builders ------------------------------------------------------------

def _build(network, variant, ctx_scope, ctx_sizes, n_t, **info):
    variables, factors = [], []
    comp_var = {}
    for comp in network.components:
        comp_var[comp.id] = len(variables)
        variables.append(VariableNode(f"v[C{comp.id}]", ctx_scope, ctx_sizes,
                                      "component", {"component": comp.id}))
    edge_var = {}
    for (j, i) in network.directed_edges:
        edge_var[(j, i)] = len(variables)
        variables.append(VariableNode(
            edge_var_name(j, i), ctx_scope + t_names(i) + s_names(j, i),
            ctx_sizes + (n_t, n_t, 2, 2), "edge", {"i": i, "j": j}))
    init_var = {}
    if variant == "scalable":
        for i in range(network.node_count):
            init_var[i] = len(variables)
            variables.append(VariableNode(f"v[x{i}]", (f"x{i}",), (4,), "initial", {"i": i}))

    prior_name = "f[W,X0]" if variant == "full" else "f[W]"
    factors.append(FactorNode(prior_name, tuple(comp_var[c.id] for c in network.components), "prior"))
    for i in range(network.node_count):
        nbrs = tuple(edge_var[(k, i)] for k in network.adjacency[i])
        if variant == "scalable":
            nbrs = nbrs + (init_var[i],)
        factors.append(FactorNode(f"f[{i}]", nbrs, "node", {"i": i}))
    anchors = {c.anchor_edge: c.id for c in network.components}
    for (i, j) in network.undirected_edges:
        nbrs = (edge_var[(j, i)], edge_var[(i, j)])
        meta = {"i": i, "j": j}
        if (i, j) in anchors:
            nbrs = nbrs + (comp_var[anchors[(i, j)]],)
            meta["anchor"] = anchors[(i, j)]
        factors.append(FactorNode(f"f[{i},{j}]", nbrs, "edge", meta))

    return FactorGraph(variables, factors, variant, network=network, n_t=n_t,
                       comp_var=comp_var, edge_var=edge_var, init_var=init_var, **info)


def build_full_graph(network, w_size=1, candidate_count=1, t_cap=None):
    """Inflated graph over (w, x0, t, s) for exact joint-prior inference.

    Times range over ``0..t_cap`` plus infinity, ``t_cap`` defaulting to
    ``|V| - 1``.
    """
    t_cap = network.node_count - 1 if t_cap is None else t_cap
    return _build(network, "full", ("w", "x0"), (w_size, candidate_count), t_cap + 2, t_cap=t_cap)


def build_scalable_graph(network, t_max, w_size=1):
    """Inflated graph with per-node initial-state leaves and times capped at ``t_max``."""
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    return _build(network, "scalable", ("w",), (w_size,), t_max + 2, t_cap=t_max)


def factor_by_kind(fg, kind):
    return [k for k, f in enumerate(fg.factors) if f.kind == kind]


def node_factor(fg, i):
    return fg.factor_id(f"f[{i}]")


def edge_factor(fg, i, j):
    a, b = min(i, j), max(i, j)
    return fg.factor_id(f"f[{a},{b}]")


def prior_factor(fg):
    return factor_by_kind(fg, "prior")[0]


def anchor_factor(fg, comp_id):
    for k, f in enumerate(fg.factors):
        if f.meta.get("anchor") == comp_id:
            return k
    raise KeyError(comp_id)
