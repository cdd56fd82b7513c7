"""Probability kernels and local functions of the two-process cascade model.

States are encoded as bitmasks, so ``EMPTY=0 < A=1 < B=2 < AB=3`` is both the
domain order and the set encoding. Scalar times use ``INF = math.inf``; the
table builders map it to the last index of a time axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf

EMPTY, A, B, AB = 0, 1, 2, 3
STATES = (EMPTY, A, B, AB)
STATE_NAMES = ("S", "A", "B", "AB")
PROC_A, PROC_B = 0, 1
PROCESSES = (PROC_A, PROC_B)
PROCESS_NAMES = ("A", "B")

# columns of the per-directed-edge lambda array
LAM_A_EMPTY, LAM_A_CROSS, LAM_B_EMPTY, LAM_B_CROSS = range(4)


def has(state, process):
    return bool(state >> process & 1)


def state_from_name(name):
    if isinstance(name, (int, np.integer)) and 0 <= int(name) <= 3:
        return int(name)
    key = str(name).strip().upper()
    aliases = {"S": EMPTY, "": EMPTY, "0": EMPTY, "NONE": EMPTY, "EMPTY": EMPTY,
               "A": A, "B": B, "AB": AB, "BA": AB}
    if key not in aliases:
        raise ValueError(f"unknown node state {name!r}")
    return aliases[key]


def state_name(state):
    return STATE_NAMES[state]


def lambda_pair(lam_row, process):
    """(lambda^{I->empty}, lambda^{I->{J}}) for one directed edge."""
    if process == PROC_A:
        return lam_row[LAM_A_EMPTY], lam_row[LAM_A_CROSS]
    return lam_row[LAM_B_EMPTY], lam_row[LAM_B_CROSS]


# --- time algebra -----------------------------------------------------------

def time_add(t, d):
    return INF if t == INF or d == INF else t + d


def time_mul(indicator, t):
    """indicator * t with the convention 0 * inf = 0."""
    return 0 if not indicator else t


def sign_sigma(b, a):
    """sign(b - a), with sign(inf - inf) = 0."""
    if b == a:
        return 0
    return 1 if b > a else -1


def min_delta_identity_check(a, b_list):
    """Check delta(a, min b) == prod 1[sigma>=0] - prod 1[sigma==1]."""
    lhs = 1 if a == min(b_list) else 0
    ge = all(sign_sigma(b, a) >= 0 for b in b_list)
    gt = all(sign_sigma(b, a) == 1 for b in b_list)
    return lhs == int(ge) - int(gt)


# --- transmission and observation time --------------------------------------

def activation_kernel(lam, d):
    if d == 1:
        return lam
    if d == INF:
        return 1.0 - lam
    raise ValueError(f"activation delay must be 1 or inf, got {d!r}")


@dataclass(frozen=True)
class ObservationTimePrior:
    """Truncated geometric law of the snapshot time ``w``."""

    alpha: float
    w_min: int = 0
    w_max: float = INF

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.w_min < 0 or self.w_max < self.w_min:
            raise ValueError("need 0 <= w_min <= w_max")
        if self.w_max != INF and int(self.w_max) != self.w_max:
            raise ValueError("w_max must be an integer or inf")

    def _norm(self):
        q = 1.0 - self.alpha
        upper = 0.0 if self.w_max == INF else q ** (self.w_max + 1)
        return q ** self.w_min - upper

    def mass(self, w):
        return observation_time_mass(self, w)

    def tail(self, start):
        """Total mass of ``w >= start``."""
        q = 1.0 - self.alpha
        lo = max(start, self.w_min)
        if lo > self.w_max:
            return 0.0
        upper = 0.0 if self.w_max == INF else q ** (self.w_max + 1)
        return (q ** lo - upper) / self._norm()

    def support(self):
        if self.w_max == INF:
            raise ValueError("support is infinite")
        return list(range(self.w_min, int(self.w_max) + 1))


def observation_time_mass(prior, w):
    if w < prior.w_min or w > prior.w_max:
        return 0.0
    q = 1.0 - prior.alpha
    return prior.alpha * q ** w / prior._norm()


DAGGER = "dagger"


@dataclass(frozen=True)
class WSupport:
    """Reduced support of ``w``: labels, evaluation points and masses.

    ``labels`` are ints plus possibly ``DAGGER``; ``points`` holds the ``w``
    at which the observation kernel is evaluated (``cap`` for the bucket).
    """

    labels: tuple
    points: tuple
    masses: tuple
    cap: int

    def __len__(self):
        return len(self.labels)

    def as_dict(self):
        return dict(zip(self.labels, self.masses))


def reduced_w_support(prior, cap, allowed=None):
    """Collapse ``w >= cap`` into a single bucket evaluated at ``w = cap``.

    ``allowed`` optionally restricts ``w`` to a finite set of values; the
    bucket then carries the mass of the allowed values at or above ``cap``.
    Zero-mass points are dropped from the support.
    """
    labels, points, masses = [], [], []
    top = cap - 1 if prior.w_max == INF else min(cap - 1, int(prior.w_max))
    for w in range(prior.w_min, top + 1):
        if allowed is not None and w not in allowed:
            continue
        m = observation_time_mass(prior, w)
        if m > 0:
            labels.append(w)
            points.append(w)
            masses.append(m)
    if allowed is None:
        tail = prior.tail(cap)
    else:
        tail = sum(observation_time_mass(prior, w) for w in allowed if w >= cap)
    if tail > 0:
        labels.append(DAGGER)
        points.append(cap)
        masses.append(tail)
    return WSupport(tuple(labels), tuple(points), tuple(masses), cap)


# --- observation and consistency kernels ------------------------------------

def gamma_perfect(w, t_i, x_i):
    """1 if state ``x_i`` is what infection times ``t_i`` give at time ``w``."""
    ta, tb = t_i
    lo, hi = min(ta, tb), max(ta, tb)
    if w < lo:
        return int(x_i == EMPTY)
    if w < hi:
        first = A if ta < tb else B
        return int(x_i == first)
    return int(x_i == AB)


def true_state(w, t_i):
    """The unique state selected by ``gamma_perfect``."""
    state = 0
    if t_i[0] <= w:
        state |= A
    if t_i[1] <= w:
        state |= B
    return state


def gamma_noisy(w, t_i, x_tilde, noise):
    """sum_x f(x_tilde | x) * gamma_perfect(w, t_i, x); ``noise[x, x_tilde]``."""
    noise = np.asarray(noise, dtype=float)
    return float(noise[true_state(w, t_i), x_tilde])


def zeta(x0, t_i):
    ta, tb = t_i
    if x0 == EMPTY:
        return int(ta > 0 and tb > 0)
    if x0 == A:
        return int(ta == 0 and tb > 0)
    if x0 == B:
        return int(tb == 0 and ta > 0)
    return int(ta == 0 and tb == 0)


def psi_to_i(t_i, s_incoming):
    """Consistency of ``t_i`` with the incoming relative timings.

    ``s_incoming`` is a sequence of ``(s^A, s^B)`` pairs, one per neighbour.
    """
    out = 1
    for p in PROCESSES:
        if t_i[p] == 0:
            continue
        if all(s[p] == 1 for s in s_incoming):
            out = 0
    return out


def psi_to_i_unsimplified(t_i, s_incoming):
    """The same check written with both sign indicators, before simplification."""
    out = 1
    for p in PROCESSES:
        if t_i[p] == 0:
            continue
        ge = all(s[p] >= 0 for s in s_incoming)
        gt = all(s[p] == 1 for s in s_incoming)
        out *= int(ge) - int(gt)
    return out


def psi_edge(t_i, s, t_j, lam_pair, process):
    """P(s_{i->j}^I = s | t_i, t_j) after marginalising the activations."""
    other = 1 - process
    ti, tj, tj_other = t_i[process], t_j[process], t_j[other]
    lam = lam_pair[0] if ti < tj_other else lam_pair[1]
    if tj != INF:
        if s == 1:
            return 1.0 - lam if ti < tj else 1.0
        return lam if (ti != INF and ti + 1 == tj) else 0.0
    if s == 0:
        return 1.0 - lam if ti != INF else 1.0
    return 0.0


def psi_bidirectional(t_i, s_ij, t_j, s_ji, lam_ij, lam_ji):
    """psi_{i->j} * psi_{j->i} over both processes.

    ``s_ij`` and ``s_ji`` are ``(s^A, s^B)`` pairs; ``lam_ij`` is the lambda
    row of the directed edge ``i -> j``.
    """
    out = 1.0
    for p in PROCESSES:
        out *= psi_edge(t_i, s_ij[p], t_j, lambda_pair(lam_ij, p), p)
        out *= psi_edge(t_j, s_ji[p], t_i, lambda_pair(lam_ji, p), p)
    return out


def psi_edge_by_activation(t_i, s, t_j, lam_pair, process):
    """Reference for ``psi_edge``: sum over the two activation delays."""
    other = 1 - process
    ti, tj, tj_other = t_i[process], t_j[process], t_j[other]
    total = 0.0
    for d_empty in (1, INF):
        for d_cross in (1, INF):
            before = ti < tj_other
            t_prop = time_add(ti, time_mul(before, d_empty))
            t_prop = time_add(t_prop, time_mul(not before, d_cross))
            if sign_sigma(t_prop, tj) == s:
                total += activation_kernel(lam_pair[0], d_empty) * activation_kernel(lam_pair[1], d_cross)
    return total


# --- priors ------------------------------------------------------------------

def unique_source_node_prior(n):
    """Per-node masses approximating exactly one source for each process."""
    p = 1.0 / n
    return np.array([(1 - p) ** 2, p * (1 - p), p * (1 - p), p * p])


def time_axis(t_cap):
    """Finite slots ``0..t_cap`` followed by ``INF``."""
    return list(range(t_cap + 1)) + [INF]
