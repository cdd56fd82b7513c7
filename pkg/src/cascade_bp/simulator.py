"""Forward sampling of the two-process cascade and its noisy snapshot.

Randomness is drawn from counter-based Philox substreams keyed by
``(seed, role, ...)``: every directed edge and activation branch owns its own
stream, so changing one lambda never perturbs the draws of another edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import INF, state_name
from .model import FactorizedPrior, JointPrior, Snapshot, UniqueSourcePrior

NEVER = np.iinfo(np.int64).max // 4

_ROLE_ACTIVATION, _ROLE_PRIOR, _ROLE_W, _ROLE_NOISE = range(4)


def _stream(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *key])))


def activation_uniforms(network, seed, size):
    """Uniforms of shape ``(size, |E->|, 4)``, one substream per (edge, branch)."""
    out = np.empty((size, len(network.directed_edges), 4))
    for e, (i, j) in enumerate(network.directed_edges):
        for c in range(4):
            out[:, e, c] = _stream(seed, _ROLE_ACTIVATION, i, j, c).random(size)
    return out


def sweep_times(network, x0, success):
    """Infection times from initial states and activation outcomes.

    ``x0`` has shape ``(N, n)``; ``success[r, e, c]`` says whether the
    activation delay of branch ``c`` on directed edge ``e`` equals 1. Returns
    int times of shape ``(N, n, 2)`` with ``NEVER`` for infinity. Slots are
    processed in order; an attempt made at slot ``t`` sees every infection
    with time ``<= t``, including arrivals in the same slot.
    """
    x0 = np.asarray(x0, dtype=np.int64)
    N, n = x0.shape
    T = np.full((N, n, 2), NEVER, dtype=np.int64)
    T[:, :, 0][(x0 & 1) > 0] = 0
    T[:, :, 1][(x0 & 2) > 0] = 0
    edges = network.directed_edges
    t = 0
    while t < n and np.any(T == t):
        for e, (k, j) in enumerate(edges):
            for p in (0, 1):
                fresh = (T[:, k, p] == t) & (T[:, j, p] > t)
                if not fresh.any():
                    continue
                cross = T[:, j, 1 - p] <= t
                ok = np.where(cross, success[:, e, 2 * p + 1], success[:, e, 2 * p])
                T[fresh & ok, j, p] = t + 1
        t += 1
    return T


def times_to_float(T):
    out = T.astype(float)
    out[T >= NEVER] = np.inf
    return out


def replay_times(network, x0, D):
    """Infection times for one initial state and one activation vector.

    ``D`` has shape ``(|E->|, 4)`` with entries 1 or ``inf``; returns an
    ``(n, 2)`` float array with ``inf`` for never infected.
    """
    D = np.asarray(D, dtype=float)
    T = sweep_times(network, np.asarray(x0)[None, :], (D == 1)[None])
    return times_to_float(T[0])


def states_at(T, w):
    """State bitmask of every node at time ``w`` (works on any leading shape)."""
    T = np.asarray(T)
    w = np.asarray(w)[..., None] if np.ndim(w) else w
    return (T[..., 0] <= w).astype(np.int64) | ((T[..., 1] <= w).astype(np.int64) << 1)


def _draw_x0(prior, n, seed, size):
    rng = _stream(seed, _ROLE_PRIOR)
    if isinstance(prior, UniqueSourcePrior):
        prior = prior.joint()
    if isinstance(prior, JointPrior):
        idx = rng.choice(len(prior.masses), size=size, p=prior.masses)
        return prior.candidates[idx]
    if isinstance(prior, FactorizedPrior):
        u = rng.random((size, n))
        cdf = np.cumsum(prior.masses, axis=1)
        return np.minimum((u[:, :, None] > cdf[None]).sum(axis=2), 3)
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def _draw_w(w_prior, seed, size):
    rng = _stream(seed, _ROLE_W)
    u = rng.random(size)
    if w_prior.w_max == INF:
        q = 1.0 - w_prior.alpha
        return w_prior.w_min + np.floor(np.log1p(-u) / np.log(q)).astype(np.int64)
    support = np.array(w_prior.support())
    cdf = np.cumsum([w_prior.mass(w) for w in support])
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(support) - 1)
    return support[idx]


def _apply_noise(noise, x, seed):
    rng = _stream(seed, _ROLE_NOISE)
    u = rng.random(x.shape)
    cdf = np.cumsum(noise, axis=2)  # (n, 4, 4)
    rows = cdf[np.arange(x.shape[1])[None, :], x]  # (N, n, 4)
    return np.minimum((u[..., None] >= rows).sum(axis=-1), 3)


@dataclass(frozen=True)
class Trajectory:
    x0: np.ndarray  # (n,)
    T: np.ndarray  # (n, 2) float, inf = never
    D: np.ndarray  # (|E->|, 4) in {1, inf}
    w: int
    x: np.ndarray  # true state at w
    x_tilde: np.ndarray
    seed: int

    def to_snapshot(self, reveal_w=False):
        truth = {"x0": [state_name(int(s)) for s in self.x0],
                 "T": [[None if v == INF else int(v) for v in row] for row in self.T],
                 "w": int(self.w)}
        return Snapshot(self.x_tilde.copy(), int(self.w) if reveal_w else None,
                        seed=self.seed, truth=truth)


@dataclass(frozen=True)
class Batch:
    x0: np.ndarray  # (N, n)
    T: np.ndarray  # (N, n, 2) int, NEVER = infinity
    w: np.ndarray  # (N,)
    x: np.ndarray
    x_tilde: np.ndarray


def simulate_batch(network, model, seed, size):
    """``size`` independent trajectories; row ``r`` uses draw ``r`` of every substream."""
    n = network.node_count
    x0 = _draw_x0(model.prior, n, seed, size)
    success = activation_uniforms(network, seed, size) < model.lam[None]
    T = sweep_times(network, x0, success)
    w = _draw_w(model.w_prior, seed, size)
    x = states_at(T, w)
    x_tilde = _apply_noise(model.noise, x, seed)
    return Batch(x0, T, w, x, x_tilde)


def sample_trajectory(network, model, seed):
    n = network.node_count
    x0 = _draw_x0(model.prior, n, seed, 1)
    u = activation_uniforms(network, seed, 1)
    success = u < model.lam[None]
    T = sweep_times(network, x0, success)
    w = _draw_w(model.w_prior, seed, 1)
    x = states_at(T, w)
    x_tilde = _apply_noise(model.noise, x, seed)
    D = np.where(success[0], 1.0, INF)
    return Trajectory(x0[0], times_to_float(T[0]), D, int(w[0]), x[0], x_tilde[0], int(seed))
