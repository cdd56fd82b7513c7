"""Materialised local functions for factor graphs.

``TableSet`` is the generic form: every factor carries a list of
``(array, coordinate names)`` pieces whose product is its local function.
``CascadeTables`` binds a network, model and snapshot to an inflated graph
and additionally keeps the compact arrays used by the optimised updates.
"""
from __future__ import annotations

import numpy as np

from .kernels import INF, LAM_A_CROSS, LAM_A_EMPTY, LAM_B_CROSS, LAM_B_EMPTY, reduced_w_support, time_axis
from .model import as_factorized
from .errors import SchemaError
from .factor_graph import s_names, t_names


class TableSet:
    """Local functions of a generic factor graph."""

    def __init__(self, fg, pieces):
        self.fg = fg
        self._pieces = {k: list(v) for k, v in pieces.items()}

    def pieces(self, f):
        return self._pieces.get(f, [])

    def dense(self, f):
        """Local function of ``f`` as a dense array over ``fg.factor_scope(f)``."""
        scope = self.fg.factor_scope(f)
        sizes = [self.fg.coordinate_sizes[c] for c in scope]
        out = np.ones(sizes)
        for arr, names in self.pieces(f):
            perm = sorted(range(len(names)), key=lambda k: scope.index(names[k]))
            view = np.transpose(arr, perm)
            shape = [1] * len(scope)
            for k in perm:
                shape[scope.index(names[k])] = arr.shape[k]
            out = out * view.reshape(shape)
        return out


# --- kernel tables ------------------------------------------------------------

def _axis(t_cap):
    return np.array([float(t) for t in time_axis(t_cap)])


def psi_process_table(lam_empty, lam_cross, t_cap):
    """``out[t_i, s, t_j, t_j_other]`` for one process on one directed edge."""
    ax = _axis(t_cap)
    ti = ax[:, None, None]
    tj = ax[None, :, None]
    tjo = ax[None, None, :]
    lam = np.where(ti < tjo, lam_empty, lam_cross)
    fin_i = ti < INF
    fin_j = tj < INF
    s1 = np.where(fin_j, np.where(ti < tj, 1.0 - lam, 1.0), 0.0)
    s0 = np.where(fin_j, np.where(fin_i & (ti + 1 == tj), lam, 0.0),
                  np.where(fin_i, 1.0 - lam, 1.0))
    return np.stack([s0, s1], axis=1)


def psi_direction_table(lam_row, t_cap):
    """``out[tiA, tiB, sA, sB, tjA, tjB]``: both processes on edge i -> j."""
    pa = psi_process_table(lam_row[LAM_A_EMPTY], lam_row[LAM_A_CROSS], t_cap)  # a s p q
    pb = psi_process_table(lam_row[LAM_B_EMPTY], lam_row[LAM_B_CROSS], t_cap)  # b r q p
    return np.einsum("aspq,brqp->absrpq", pa, pb)


def edge_kernel(lam_ij, lam_ji, t_cap, s_mask_ij=None, s_mask_ji=None):
    """psi_{i<->j} laid out as ``[tiA, tiB, sjiA, sjiB, tjA, tjB, sijA, sijB]``."""
    p_ij = psi_direction_table(lam_ij, t_cap)
    p_ji = psi_direction_table(lam_ji, t_cap)
    k = np.einsum("abxyAB,ABuvab->abuvABxy", p_ij, p_ji)
    if s_mask_ij is not None:
        k = k * s_mask_ij[None, None, None, None, None, None, :, :]
    if s_mask_ji is not None:
        k = k * s_mask_ji[None, None, :, :, None, None, None, None]
    return k


def zeta_table(t_cap):
    ax = _axis(t_cap)
    za = ax[:, None] == 0
    zb = ax[None, :] == 0
    return np.stack([~za & ~zb, za & ~zb, ~za & zb, za & zb]).astype(float)


def state_table(points, t_cap):
    """True state index at each ``w`` point for every ``(tA, tB)``."""
    ax = _axis(t_cap)
    w = np.asarray(points, dtype=float)[:, None, None]
    return (ax[None, :, None] <= w).astype(np.int64) | ((ax[None, None, :] <= w).astype(np.int64) << 1)


def gamma_table(points, t_cap, x_tilde, noise_i):
    """``out[w, tA, tB] = noise_i[state(w, t), x_tilde]``."""
    return noise_i[state_table(points, t_cap), x_tilde]


def psi_to_i_table(t_cap, degree):
    """``out[tA, tB, sA_1, sB_1, ..., sA_d, sB_d]``."""
    ax = _axis(t_cap)
    n_t = len(ax)
    shape = (n_t, n_t) + (2, 2) * degree
    out = np.ones(shape)
    for p in (0, 1):
        t_pos = (ax > 0).astype(float)
        all_one = np.ones((2, 2) * degree)
        for k in range(degree):
            ind = np.zeros((2, 2))
            if p == 0:
                ind[1, :] = 1
            else:
                ind[:, 1] = 1
            sh = [1] * (2 * degree)
            sh[2 * k], sh[2 * k + 1] = 2, 2
            all_one = all_one * ind.reshape(sh)
        t_shape = [n_t if a == p else 1 for a in (0, 1)]
        t_pos = t_pos.reshape(t_shape + [1] * (2 * degree))
        factor = (1 - t_pos) + t_pos * (1 - all_one[None, None])
        out = out * factor
    return out


def time_mask(t_cap, allowed_a=None, allowed_b=None):
    axis = time_axis(t_cap)
    ma = np.ones(len(axis)) if allowed_a is None else np.array([float(t in allowed_a) for t in axis])
    mb = np.ones(len(axis)) if allowed_b is None else np.array([float(t in allowed_b) for t in axis])
    return ma[:, None] * mb[None, :]


def s_mask(allowed_a=None, allowed_b=None):
    ma = np.ones(2) if allowed_a is None else np.array([float(s in allowed_a) for s in (0, 1)])
    mb = np.ones(2) if allowed_b is None else np.array([float(s in allowed_b) for s in (0, 1)])
    return ma[:, None] * mb[None, :]


# --- binding to an inflated graph ------------------------------------------------------

class CascadeTables(TableSet):
    """Local functions of an inflated graph bound to a model and snapshot.

    ``prior`` must be a ``JointPrior`` for the full variant; the scalable
    variant takes the per-node prior from the model.
    """

    def __init__(self, fg, model, snapshot, prior=None, info=None):
        self.fg = fg
        self.network = net = fg.info["network"]
        self.variant = fg.variant
        self.t_cap = t_cap = fg.info["t_cap"]
        self.n_t = t_cap + 2
        info = snapshot.info if info is None else info
        self.info = info
        cap = t_cap + 1
        self.wsupport = ws = reduced_w_support(model.w_prior, cap, snapshot.allowed_w())
        if len(ws) == 0:
            from .errors import InconsistentEvidence
            raise InconsistentEvidence("no observation time is allowed", where="w")
        wmass = np.array(ws.masses)
        self.model = model
        self.snapshot = snapshot
        n = net.node_count
        if len(snapshot.x_tilde) != n:
            raise SchemaError("snapshot size does not match the network")

        self.prior = prior
        self.zeta = zeta_table(t_cap)
        self.gamma = []
        for i in range(n):
            g = gamma_table(ws.points, t_cap, int(snapshot.x_tilde[i]), model.noise[i])
            g = g * time_mask(t_cap, info.times.get((i, 0)), info.times.get((i, 1)))[None]
            self.gamma.append(g)

        if self.variant == "full":
            if prior is None:
                prior = model.prior.joint()
            self.prior = prior
            self.candidates = prior.candidates
            self.prior_table = wmass[:, None] * prior.masses[None, :]
            self.ctx_shape = (len(ws), len(prior.masses))
            self.node_table = [self.gamma[i][:, None] * self.zeta[prior.candidates[:, i]][None]
                               for i in range(n)]
        else:
            fac = as_factorized(model.prior if prior is None else prior)
            self.prior = fac
            self.node_prior = fac.masses
            self.prior_table = wmass
            self.ctx_shape = (len(ws),)
            self.z = np.einsum("ix,xab->iab", fac.masses, self.zeta)
            self.node_table = [self.gamma[i] * self.z[i][None] for i in range(n)]

        expected = fg.variables[fg.info["comp_var"][net.components[0].id]].sizes
        if tuple(expected) != tuple(self.ctx_shape):
            raise ValueError(f"factor graph context {expected} does not match tables {self.ctx_shape}")

        self.kernel6 = {}
        self.kernel = {}
        m = 4 * self.n_t ** 2
        for (i, j) in net.undirected_edges:
            s_ij = s_mask(info.relative.get((i, j, 0)), info.relative.get((i, j, 1)))
            s_ji = s_mask(info.relative.get((j, i, 0)), info.relative.get((j, i, 1)))
            k6 = edge_kernel(model.lam_row(net, i, j), model.lam_row(net, j, i), t_cap, s_ij, s_ji)
            self.kernel6[(i, j)] = k6
            self.kernel[(i, j)] = np.ascontiguousarray(k6.reshape(m, m))
        self._psi_to_i = {}

    def psi_to_i(self, degree):
        if degree not in self._psi_to_i:
            self._psi_to_i[degree] = psi_to_i_table(self.t_cap, degree)
        return self._psi_to_i[degree]

    def pieces(self, f):
        fg, net = self.fg, self.network
        fac = fg.factors[f]
        if fac.kind == "prior":
            scope = ("w", "x0") if self.variant == "full" else ("w",)
            return [(self.prior_table, scope)]
        if fac.kind == "node":
            i = fac.meta["i"]
            nbrs = net.adjacency[i]
            s_scope = tuple(c for k in nbrs for c in s_names(k, i))
            psi = (self.psi_to_i(len(nbrs)), t_names(i) + s_scope)
            if self.variant == "full":
                return [(self.node_table[i], ("w", "x0") + t_names(i)), psi]
            x = f"x{i}"
            return [(self.gamma[i], ("w",) + t_names(i)), (self.zeta, (x,) + t_names(i)),
                    (self.node_prior[i], (x,)), psi]
        i, j = fac.meta["i"], fac.meta["j"]
        return [(self.kernel6[(i, j)], t_names(i) + s_names(j, i) + t_names(j) + s_names(i, j))]


def pairwise_binary_graph(n, couplings, fields=None):
    """Ising-style factor graph on ``n`` spins in {+1, -1}.

    ``couplings`` maps ``(i, j)`` to ``J``, giving ``exp(J x_i x_j)``;
    ``fields[i]`` adds a unary factor ``exp(h_i x_i)``.
    Returns ``(FactorGraph, TableSet)``.
    """
    from .factor_graph import FactorGraph, FactorNode, VariableNode
    spins = np.array([1.0, -1.0])
    variables = [VariableNode(f"x{i}", (f"x{i}",), (2,), meta={"i": i}) for i in range(n)]
    factors, pieces = [], {}
    for (i, j), J in sorted(couplings.items()):
        pieces[len(factors)] = [(np.exp(J * np.outer(spins, spins)), (f"x{i}", f"x{j}"))]
        factors.append(FactorNode(f"g[{i},{j}]", (i, j), "edge", {"i": i, "j": j}))
    if fields is not None:
        for i, h in enumerate(fields):
            pieces[len(factors)] = [(np.exp(h * spins), (f"x{i}",))]
            factors.append(FactorNode(f"h[{i}]", (i,), "node", {"i": i}))
    fg = FactorGraph(variables, factors, "pairwise")
    return fg, TableSet(fg, pieces)
