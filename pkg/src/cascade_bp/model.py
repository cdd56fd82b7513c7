"""Model parameters, snapshots and their JSON layouts."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationBudgetExceeded, SchemaError
from .kernels import (INF, STATES, ObservationTimePrior, state_from_name, state_name,
                      unique_source_node_prior)

ROW_TOL = 1e-12


@dataclass(frozen=True)
class JointPrior:
    """Prior supported on an explicit candidate set of initial states."""

    candidates: np.ndarray  # (K, n) int
    masses: np.ndarray  # (K,)

    def __post_init__(self):
        c = np.asarray(self.candidates, dtype=np.int64)
        m = np.asarray(self.masses, dtype=float)
        if c.ndim != 2 or len(c) != len(m) or len(m) == 0:
            raise SchemaError("joint prior needs a (K, n) candidate array and K masses")
        if np.any(m <= 0):
            keep = m > 0
            c, m = c[keep], m[keep]
        if len(m) == 0 or not math.isclose(m.sum(), 1.0, rel_tol=1e-9):
            raise SchemaError("joint prior masses must be positive and sum to 1")
        if np.any((c < 0) | (c > 3)):
            raise SchemaError("candidate states must be in 0..3")
        if len({tuple(r) for r in c}) != len(c):
            raise SchemaError("duplicate candidates in joint prior")
        object.__setattr__(self, "candidates", c)
        object.__setattr__(self, "masses", m / m.sum())

    @property
    def n(self):
        return self.candidates.shape[1]

    def joint(self, budget=None):
        return self

    def node_marginals(self):
        out = np.zeros((self.n, 4))
        for cand, m in zip(self.candidates, self.masses):
            out[np.arange(self.n), cand] += m
        return out

    @classmethod
    def unique_source(cls, n):
        """Exactly one A source and one B source, uniformly placed."""
        cands, masses = [], []
        for a in range(n):
            for b in range(n):
                x = np.zeros(n, dtype=np.int64)
                x[a] |= 1
                x[b] |= 2
                cands.append(x)
                masses.append(1.0 / n ** 2)
        return cls(np.array(cands), np.array(masses))

    @classmethod
    def point(cls, x0):
        return cls(np.asarray([x0], dtype=np.int64), np.array([1.0]))


@dataclass(frozen=True)
class FactorizedPrior:
    """Independent per-node prior over the four states."""

    masses: np.ndarray  # (n, 4)

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != 2 or m.shape[1] != 4:
            raise SchemaError("factorized prior needs an (n, 4) mass array")
        if np.any(m < 0):
            raise SchemaError("prior masses must be non-negative")
        sums = m.sum(axis=1)
        if np.any(np.abs(sums - 1) > ROW_TOL):
            raise SchemaError("each node's prior must sum to 1")
        object.__setattr__(self, "masses", m / sums[:, None])

    @property
    def n(self):
        return self.masses.shape[0]

    def support_size(self):
        return int(np.prod([(row > 0).sum() for row in self.masses]))

    def joint(self, budget=100_000):
        size = self.support_size()
        if budget is not None and size > budget:
            raise EnumerationBudgetExceeded(
                f"factorized prior has {size} joint configurations (budget {budget})")
        supports = [np.flatnonzero(row > 0) for row in self.masses]
        cands = np.array(list(itertools.product(*supports)), dtype=np.int64).reshape(-1, self.n)
        masses = np.prod(self.masses[np.arange(self.n), cands], axis=1)
        return JointPrior(cands, masses)

    def node_marginals(self):
        return self.masses.copy()

    @classmethod
    def unique_source(cls, n):
        return cls(np.tile(unique_source_node_prior(n), (n, 1)))

    @classmethod
    def point(cls, x0):
        m = np.zeros((len(x0), 4))
        m[np.arange(len(x0)), list(x0)] = 1.0
        return cls(m)


@dataclass(frozen=True)
class UniqueSourcePrior:
    """Default prior: joint form for exact inference, per-node form otherwise."""

    n: int

    def joint(self, budget=None):
        return JointPrior.unique_source(self.n)

    def factorized(self):
        return FactorizedPrior.unique_source(self.n)

    def node_marginals(self):
        return self.joint().node_marginals()


def as_factorized(prior):
    """Per-node prior required by the scalable algorithm."""
    if isinstance(prior, FactorizedPrior):
        return prior
    if isinstance(prior, UniqueSourcePrior):
        return prior.factorized()
    raise SchemaError("the scalable algorithm needs a per-node (factorized) prior")


@dataclass(frozen=True)
class ModelSpec:
    """All kernels: lambdas per directed edge, noise per node, priors."""

    lam: np.ndarray  # (|E->|, 4) aligned with network.directed_edges
    noise: np.ndarray  # (n, 4, 4), noise[i, x, x_tilde]
    prior: object
    w_prior: ObservationTimePrior

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        noise = np.asarray(self.noise, dtype=float)
        if lam.ndim != 2 or lam.shape[1] != 4:
            raise SchemaError("lambda array must have shape (edges, 4)")
        if np.any((lam < 0) | (lam > 1)):
            raise SchemaError("every lambda must lie in [0, 1]")
        if noise.ndim != 3 or noise.shape[1:] != (4, 4):
            raise SchemaError("noise must have shape (n, 4, 4)")
        if np.any(noise < 0):
            raise SchemaError("noise entries must be non-negative")
        sums = noise.sum(axis=2)
        if np.any(np.abs(sums - 1) > ROW_TOL):
            raise SchemaError("noise rows must sum to 1")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "noise", noise / sums[:, :, None])

    @property
    def n(self):
        return self.noise.shape[0]

    def lam_row(self, network, i, j):
        return self.lam[network.edge_index[(i, j)]]

    def replace(self, **changes):
        kw = dict(lam=self.lam, noise=self.noise, prior=self.prior, w_prior=self.w_prior)
        kw.update(changes)
        return ModelSpec(**kw)


def make_model(network, lam=0.5, noise=None, prior=None, w_prior=None):
    """Convenience constructor with broadcasting defaults.

    ``lam`` may be a scalar, a 4-vector or a full ``(|E->|, 4)`` array.
    """
    m = len(network.directed_edges)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m, 4)).copy()
    if noise is None:
        noise = np.tile(np.eye(4), (network.node_count, 1, 1))
    else:
        noise = np.asarray(noise, dtype=float)
        if noise.ndim == 2:
            noise = np.tile(noise, (network.node_count, 1, 1))
    if prior is None:
        prior = UniqueSourcePrior(network.node_count)
    if w_prior is None:
        w_prior = ObservationTimePrior(0.5, 0, INF)
    return ModelSpec(lam, noise, prior, w_prior)


# --- information structures and snapshots ------------------------------------

@dataclass(frozen=True)
class InfoStructure:
    """Side information restricting times, relative timings and ``w``.

    ``times[(i, p)]`` is the allowed set for ``t_i^p`` (ints and ``INF``),
    ``relative[(i, j, p)]`` the allowed set for ``s_{i->j}^p``, and ``w`` the
    allowed observation times.
    """

    times: dict = field(default_factory=dict)
    relative: dict = field(default_factory=dict)
    w: frozenset | None = None

    def __post_init__(self):
        for key, vals in list(self.times.items()) + list(self.relative.items()):
            if not vals:
                raise SchemaError(f"allowed set for {key} is empty")
        if self.w is not None and not self.w:
            raise SchemaError("allowed w set is empty")

    def is_empty(self):
        return not self.times and not self.relative and self.w is None


@dataclass(frozen=True)
class Snapshot:
    x_tilde: np.ndarray
    w_known: int | None = None
    info: InfoStructure = field(default_factory=InfoStructure)
    seed: int | None = None
    truth: dict | None = None

    def __post_init__(self):
        x = np.asarray(self.x_tilde, dtype=np.int64)
        if x.ndim != 1 or np.any((x < 0) | (x > 3)):
            raise SchemaError("x_tilde must be a vector of node states")
        object.__setattr__(self, "x_tilde", x)

    def allowed_w(self):
        """Finite set of allowed w, or None for unrestricted."""
        sets = []
        if self.w_known is not None:
            sets.append({int(self.w_known)})
        if self.info.w is not None:
            sets.append(set(self.info.w))
        if not sets:
            return None
        out = set.intersection(*sets)
        return frozenset(out)


# --- JSON ----------------------------------------------------------------------

def _label_map(network):
    return {str(lab): i for i, lab in enumerate(network.labels)}


def _node(network, label, lmap):
    key = str(label)
    if key not in lmap:
        raise SchemaError(f"unknown node label {label!r}")
    return lmap[key]


def _time_value(v):
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity", "∞")):
        return INF
    if isinstance(v, (int, np.integer)) and v >= 0:
        return int(v)
    if isinstance(v, float) and v == INF:
        return INF
    raise SchemaError(f"bad time value {v!r}")


def _time_json(t):
    return "inf" if t == INF else int(t)


def _matrix(value, what):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (4, 4):
        raise SchemaError(f"{what} must be a 4x4 matrix")
    return arr


def model_from_json(doc, network):
    if not isinstance(doc, dict):
        raise SchemaError("params document must be an object")
    lmap = _label_map(network)
    n, m = network.node_count, len(network.directed_edges)

    lam_doc = doc.get("lambda", {})
    lam = np.broadcast_to(np.asarray(lam_doc.get("default", [0.5] * 4), dtype=float), (m, 4)).copy()
    for entry in lam_doc.get("edges", []):
        try:
            a, b = entry["edge"]
            vals = entry["values"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError("lambda edge entries need 'edge' and 'values'") from exc
        i, j = _node(network, a, lmap), _node(network, b, lmap)
        if (i, j) not in network.edge_index:
            raise SchemaError(f"lambda given for a non-edge {entry['edge']!r}")
        if len(vals) != 4:
            raise SchemaError("lambda values need four entries")
        lam[network.edge_index[(i, j)]] = vals

    noise_doc = doc.get("noise", {})
    default = noise_doc.get("default", "identity")
    base = np.eye(4) if default == "identity" else _matrix(default, "noise default")
    noise = np.tile(base, (n, 1, 1))
    for label, mat in noise_doc.get("nodes", {}).items():
        noise[_node(network, label, lmap)] = _matrix(mat, f"noise for node {label}")

    prior_doc = doc.get("prior", {"type": "unique_source"})
    kind = prior_doc.get("type", "unique_source")
    if kind == "unique_source":
        prior = UniqueSourcePrior(n)
    elif kind == "joint":
        cands, masses = [], []
        for entry in prior_doc.get("candidates", []):
            x0 = entry["x0"]
            if isinstance(x0, dict):
                row = [0] * n
                for label, s in x0.items():
                    row[_node(network, label, lmap)] = state_from_name(s)
            else:
                if len(x0) != n:
                    raise SchemaError("candidate x0 must list one state per node")
                row = [state_from_name(s) for s in x0]
            cands.append(row)
            masses.append(float(entry["p"]))
        prior = JointPrior(np.array(cands, dtype=np.int64).reshape(-1, n), np.array(masses))
    elif kind == "factorized":
        base = prior_doc.get("default", list(unique_source_node_prior(n)))
        masses = np.tile(np.asarray(base, dtype=float), (n, 1))
        for label, row in prior_doc.get("nodes", {}).items():
            masses[_node(network, label, lmap)] = row
        prior = FactorizedPrior(masses)
    else:
        raise SchemaError(f"unknown prior type {kind!r}")

    w_doc = doc.get("w", {})
    try:
        w_prior = ObservationTimePrior(
            float(w_doc.get("alpha", 0.5)), int(w_doc.get("w_min", 0)),
            _time_value(w_doc.get("w_max")))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    try:
        return ModelSpec(lam, noise, prior, w_prior)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def model_to_json(model, network):
    labels = network.labels
    out = {"lambda": {"edges": [{"edge": [labels[i], labels[j]], "values": model.lam[k].tolist()}
                                for k, (i, j) in enumerate(network.directed_edges)]},
           "noise": {"nodes": {str(labels[i]): model.noise[i].tolist() for i in range(model.n)}}}
    prior = model.prior
    if isinstance(prior, UniqueSourcePrior):
        out["prior"] = {"type": "unique_source"}
    elif isinstance(prior, FactorizedPrior):
        out["prior"] = {"type": "factorized",
                        "nodes": {str(labels[i]): prior.masses[i].tolist() for i in range(prior.n)}}
    else:
        out["prior"] = {"type": "joint", "candidates": [
            {"x0": [state_name(s) for s in c], "p": float(p)}
            for c, p in zip(prior.candidates, prior.masses)]}
    wp = model.w_prior
    out["w"] = {"alpha": wp.alpha, "w_min": wp.w_min,
                "w_max": None if wp.w_max == INF else int(wp.w_max)}
    return out


def snapshot_from_json(doc, network):
    if not isinstance(doc, dict) or "x_tilde" not in doc:
        raise SchemaError("snapshot document needs 'x_tilde'")
    lmap = _label_map(network)
    xt = doc["x_tilde"]
    try:
        if isinstance(xt, dict):
            x = [None] * network.node_count
            for label, s in xt.items():
                x[_node(network, label, lmap)] = state_from_name(s)
            if any(v is None for v in x):
                raise SchemaError("x_tilde must cover every node")
        else:
            if len(xt) != network.node_count:
                raise SchemaError("x_tilde must list one state per node")
            x = [state_from_name(s) for s in xt]
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc

    info_doc = doc.get("info", {}) or {}
    times = {}
    for label, per in info_doc.get("times", {}).items():
        i = _node(network, label, lmap)
        for pname, vals in per.items():
            p = {"A": 0, "B": 1}.get(pname)
            if p is None:
                raise SchemaError(f"unknown process {pname!r}")
            times[(i, p)] = frozenset(_time_value(v) for v in vals)
    relative = {}
    for key, per in info_doc.get("relative", {}).items():
        a, b = key.split("->") if "->" in key else key.split(",")
        i, j = _node(network, a.strip(), lmap), _node(network, b.strip(), lmap)
        if (i, j) not in network.edge_index:
            raise SchemaError(f"relative timing given for non-edge {key!r}")
        for pname, vals in per.items():
            p = {"A": 0, "B": 1}[pname]
            relative[(i, j, p)] = frozenset(int(v) for v in vals)
    w_allowed = info_doc.get("w")
    info = InfoStructure(times, relative, None if w_allowed is None else frozenset(int(v) for v in w_allowed))
    w_known = doc.get("w_known")
    return Snapshot(np.array(x), None if w_known is None else int(w_known), info,
                    doc.get("seed"), doc.get("truth"))


def snapshot_to_json(snapshot, network):
    labels = network.labels
    out = {"x_tilde": [state_name(int(s)) for s in snapshot.x_tilde],
           "w_known": snapshot.w_known, "seed": snapshot.seed}
    info = snapshot.info
    if not info.is_empty():
        times = {}
        for (i, p), vals in sorted(info.times.items()):
            times.setdefault(str(labels[i]), {})["AB"[p]] = sorted(
                (_time_json(v) for v in vals), key=lambda v: math.inf if v == "inf" else v)
        rel = {}
        for (i, j, p), vals in sorted(info.relative.items()):
            rel.setdefault(f"{labels[i]}->{labels[j]}", {})["AB"[p]] = sorted(vals)
        out["info"] = {"times": times, "relative": rel,
                       "w": None if info.w is None else sorted(info.w)}
    if snapshot.truth is not None:
        out["truth"] = snapshot.truth
    return out


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def time_json(t):
    return _time_json(t)


def time_value(v):
    return _time_value(v)


STATE_COUNT = len(STATES)
