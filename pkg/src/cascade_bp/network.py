"""Static network structure: symmetric directed edges, components, diameters."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .errors import IsolatedNodeError, SchemaError


@dataclass(frozen=True)
class Component:
    id: int
    nodes: tuple
    edges: tuple  # undirected, (i, j) with i < j, sorted
    diameter: int  # counted in nodes traversed
    anchor_edge: tuple


@dataclass(frozen=True)
class Network:
    """Network on dense node ids ``0..n-1``.

    ``directed_edges`` is sorted and closed under reversal. ``labels[i]`` is
    the original label of node ``i``.
    """

    node_count: int
    directed_edges: tuple
    undirected_edges: tuple
    adjacency: tuple
    components: tuple
    labels: tuple
    edge_index: dict = field(repr=False, compare=False, default_factory=dict)

    def neighbors(self, i):
        return self.adjacency[i]

    def degree(self, i):
        return len(self.adjacency[i])

    def directed_index(self, i, j):
        return self.edge_index[(i, j)]

    def component_of(self, i):
        for comp in self.components:
            if i in comp.nodes:
                return comp
        raise KeyError(i)

    def is_forest(self):
        return all(len(c.edges) == len(c.nodes) - 1 for c in self.components)

    @property
    def max_diameter(self):
        return max(c.diameter for c in self.components)

    @property
    def max_component_span(self):
        """max_C (|V_C| - 1): the longest possible finite infection time."""
        return max(len(c.nodes) - 1 for c in self.components)

    def to_json(self):
        return {"nodes": list(self.labels),
                "edges": [[self.labels[i], self.labels[j]] for i, j in self.undirected_edges]}

    def relabel(self, values):
        """Map a per-node sequence to a dict keyed by original labels."""
        return {self.labels[i]: values[i] for i in range(self.node_count)}


def _bfs(adjacency, start):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def build_network(directed_edge_list, nodes=None):
    """Build a ``Network`` from an edge list.

    Missing reverse edges are added. Labels may be any sortable hashable
    values; they are compacted to ``0..n-1`` in sorted order. ``nodes`` may
    list extra labels, which is only useful for reporting isolated nodes.
    """
    edge_list = [tuple(e) for e in directed_edge_list]
    if not edge_list:
        raise SchemaError("edge list is empty")
    labels = set(nodes or ())
    for e in edge_list:
        if len(e) != 2:
            raise SchemaError(f"edge {e!r} does not have two endpoints")
        if e[0] == e[1]:
            raise SchemaError(f"self-loop at {e[0]!r}")
        labels.update(e)
    try:
        labels = sorted(labels)
    except TypeError as exc:
        raise SchemaError("node labels must be mutually comparable") from exc
    index = {lab: k for k, lab in enumerate(labels)}
    n = len(labels)

    directed = set()
    for a, b in edge_list:
        i, j = index[a], index[b]
        directed.add((i, j))
        directed.add((j, i))
    directed = tuple(sorted(directed))
    undirected = tuple(sorted({(min(i, j), max(i, j)) for i, j in directed}))
    adjacency = [[] for _ in range(n)]
    for i, j in directed:
        adjacency[i].append(j)
    adjacency = tuple(tuple(sorted(a)) for a in adjacency)

    isolated = [labels[i] for i in range(n) if not adjacency[i]]
    if isolated:
        raise IsolatedNodeError(f"isolated nodes are not supported: {isolated!r}")

    seen = set()
    components = []
    for start in range(n):
        if start in seen:
            continue
        members = sorted(_bfs(adjacency, start))
        seen.update(members)
        member_set = set(members)
        edges = tuple(e for e in undirected if e[0] in member_set)
        components.append(Component(
            id=len(components),
            nodes=tuple(members),
            edges=edges,
            diameter=_diameter(adjacency, members),
            anchor_edge=edges[0],
        ))

    return Network(
        node_count=n,
        directed_edges=directed,
        undirected_edges=undirected,
        adjacency=adjacency,
        components=tuple(components),
        labels=tuple(labels),
        edge_index={e: k for k, e in enumerate(directed)},
    )


def _diameter(adjacency, members):
    hops = max(max(_bfs(adjacency, u).values()) for u in members)
    return hops + 1


def component_diameter(network, component):
    """Diameter in nodes traversed: a single edge has diameter 2."""
    if not component.nodes:
        raise ValueError("empty component")
    return _diameter(network.adjacency, component.nodes)


def network_from_json(doc):
    if not isinstance(doc, dict) or "edges" not in doc:
        raise SchemaError("graph document needs an 'edges' list")
    edges = doc["edges"]
    if not isinstance(edges, list):
        raise SchemaError("'edges' must be a list")
    return build_network(edges, nodes=doc.get("nodes"))


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return network_from_json(doc)
