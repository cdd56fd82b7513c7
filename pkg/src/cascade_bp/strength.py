"""Factor strengths, their edge-indexed matrix, and its spectral radius.

For a factor ``f`` with neighbours ``v`` and ``u``, the strength compares the
cross ratio ``f(a, b, r) f(a', b', r') / (f(a', b, r) f(a, b', r'))`` over
distinct values ``a != a'`` of ``v``'s coordinates, ``b != b'`` of the
coordinates of ``u`` not shared with ``v``, and any values ``r, r'`` of the
remaining coordinates. With the cross ratio ``x`` the strength is
``(sqrt(x) - 1) / (sqrt(x) + 1)``, maximised over all choices.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import StrengthBudgetExceeded

DEFAULT_BUDGET = 10_000_000


def _arrange(F, scope, v_scope, u_scope):
    """Reshape a dense table to ``(Zv, Zu, Zr)``."""
    v_axes = [scope.index(c) for c in v_scope]
    u_axes = [scope.index(c) for c in u_scope if c not in v_scope]
    r_axes = [k for k in range(len(scope)) if k not in v_axes and k not in u_axes]
    G = np.transpose(F, v_axes + u_axes + r_axes)
    zv = int(np.prod([F.shape[k] for k in v_axes], dtype=np.int64))
    zu = int(np.prod([F.shape[k] for k in u_axes], dtype=np.int64))
    return G.reshape(zv, zu, -1)


def strength_from_table(G, budget=DEFAULT_BUDGET):
    """Strength of a table already arranged as ``(Zv, Zu, Zr)``."""
    zv, zu, zr = G.shape
    if zv < 2 or zu < 2:
        return 0.0
    if zv * zv * zu * zr > budget:
        raise StrengthBudgetExceeded(
            f"strength needs {zv * zv * zu * zr} comparisons (budget {budget})")
    pos = G > 0
    with np.errstate(divide="ignore"):
        L = np.where(pos, np.log(np.where(pos, G, 1.0)), -np.inf)
    both = pos[:, None] & pos[None, :]  # (p, q, zu, r)
    diff = np.where(both, L[:, None] - np.where(both, L[None, :], 0.0), -np.inf)
    B = diff.max(axis=3)  # B[p, q, zu] = max_r log f(p, zu, r) / f(q, zu, r)
    off = ~np.eye(zv, dtype=bool)

    # a > 0 = b for some (zu, r) together with d > 0 at another zu': ratio unbounded
    U = (pos[:, None] & ~pos[None, :]).any(axis=3)  # (p, q, zu)
    S = pos.any(axis=2)  # (q, zu')
    c1 = U.sum(axis=2)
    c2 = np.broadcast_to(S.sum(axis=1)[None, :], c1.shape)
    same_single = (c1 == 1) & (c2 == 1) & (np.argmax(U, axis=2) == np.argmax(S, axis=1)[None, :])
    if np.any(off & (c1 > 0) & (c2 > 0) & ~same_single):
        return 1.0

    b1 = B
    b2 = np.transpose(B, (1, 0, 2))  # b2[p, q, zu'] = B[q, p, zu']
    i1 = np.argsort(-b1, axis=2)[..., :2]
    i2 = np.argsort(-b2, axis=2)[..., :2]
    v1 = np.take_along_axis(b1, i1, axis=2)
    v2 = np.take_along_axis(b2, i2, axis=2)
    with np.errstate(invalid="ignore"):
        top = np.where(i1[..., 0] != i2[..., 0], v1[..., 0] + v2[..., 0],
                       np.maximum(v1[..., 0] + v2[..., 1], v1[..., 1] + v2[..., 0]))
    top = np.where(off, top, -np.inf)
    top = np.where(np.isnan(top), -np.inf, top)
    x = top.max()
    if x == -np.inf:
        return 0.0
    return max(0.0, math.tanh(x / 4.0))


def factor_strength(fg, tables, f, v, u, budget=DEFAULT_BUDGET, dense=None):
    """Strength of factor ``f`` between neighbouring variable nodes ``v`` and ``u``."""
    nbrs = fg.factors[f].neighbors
    if v == u or v not in nbrs or u not in nbrs:
        raise ValueError("v and u must be distinct neighbours of f")
    scope = fg.factor_scope(f)
    if dense is None:
        dense = tables.dense(f)
    G = _arrange(dense, scope, fg.variables[v].scope, fg.variables[u].scope)
    return strength_from_table(G, budget)


def brute_force_strength(G):
    """Reference maximisation over every realisation pair (tiny tables only)."""
    zv, zu, zr = G.shape
    best = None
    for a in range(zv):
        for a2 in range(zv):
            if a == a2:
                continue
            for b in range(zu):
                for b2 in range(zu):
                    if b == b2:
                        continue
                    for r in range(zr):
                        for r2 in range(zr):
                            m1 = math.sqrt(G[a, b, r] * G[a2, b2, r2])
                            m2 = math.sqrt(G[a2, b, r] * G[a, b2, r2])
                            if m1 + m2 == 0:
                                continue
                            val = (m1 - m2) / (m1 + m2)
                            best = val if best is None else max(best, val)
    return 0.0 if best is None else best


@dataclass
class StrengthMatrix:
    keys: tuple  # directed factor-graph edges (f, v), row/column order
    matrix: sparse.csr_matrix
    strengths: dict  # (f, v, u) -> value

    @property
    def entry_count(self):
        return int(self.matrix.nnz)


def strength_matrix(fg, tables, budget=DEFAULT_BUDGET):
    keys = tuple(fg.message_keys)
    index = {k: n for n, k in enumerate(keys)}
    strengths = {}
    dense_cache = {}
    rows, cols, vals = [], [], []
    for (f, v) in keys:
        for u in fg.factors[f].neighbors:
            if u == v:
                continue
            if (f, v, u) not in strengths:
                if f not in dense_cache:
                    dense_cache = {f: tables.dense(f)}
                strengths[(f, v, u)] = factor_strength(fg, tables, f, v, u, budget, dense_cache[f])
            val = strengths[(f, v, u)]
            for g in fg.factors_of(u):
                if g == f:
                    continue
                rows.append(index[(f, v)])
                cols.append(index[(g, u)])
                vals.append(val)
    n = len(keys)
    M = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M.eliminate_zeros()
    return StrengthMatrix(keys, M, strengths)


@dataclass
class RadiusEstimate:
    value: float
    converged: bool
    iterations: int


def spectral_radius(M, rtol=1e-10, max_iters=10_000):
    """Spectral radius of a non-negative matrix by shifted power iteration."""
    if isinstance(M, StrengthMatrix):
        M = M.matrix
    M = sparse.csr_matrix(M, dtype=float)
    n = M.shape[0]
    if n == 0 or M.nnz == 0:
        return RadiusEstimate(0.0, True, 0)
    x = np.ones(n)
    for k in range(n + 1):
        x = M @ x
        if not x.any():
            return RadiusEstimate(0.0, True, k + 1)
        x = x / x.max()
    A = M + sparse.identity(n, format="csr")
    x = np.ones(n) / n
    prev = None
    for it in range(1, max_iters + 1):
        y = A @ x
        est = y.sum() / x.sum()
        y = y / y.sum()
        if prev is not None and abs(est - prev) <= rtol * abs(est):
            return RadiusEstimate(max(est - 1.0, 0.0), True, it)
        prev = est
        x = y
    warnings.warn("power iteration did not reach the requested tolerance", RuntimeWarning)
    return RadiusEstimate(max(prev - 1.0, 0.0), False, max_iters)


@dataclass
class Threshold:
    rho: float
    eta_star: float  # inf when unconstrained
    entries: int
    converged: bool

    @property
    def unconstrained(self):
        return self.rho == 0.0

    def describe(self):
        eta = "unconstrained" if self.unconstrained else f"{self.eta_star:.6g}"
        return f"rho(M) = {self.rho:.6g}, eta* = {eta}, entries = {self.entries}"


def convergence_threshold(fg, tables, budget=DEFAULT_BUDGET):
    """Discount below which message passing provably converges: ``1 / rho(M)``."""
    sm = strength_matrix(fg, tables, budget)
    est = spectral_radius(sm.matrix)
    eta = math.inf if est.value == 0 else 1.0 / est.value
    return Threshold(est.value, eta, sm.entry_count, est.converged)
