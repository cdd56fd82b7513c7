"""Iteration driver: schedules, discounting, convergence and back-off."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InconsistentEvidence, NoConvergence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    schedule: str = "lazy"  # or "impatient"
    eta: float | None = 1.0  # None runs the plain, undiscounted rule
    eta_step: float = 0.1
    tol: float = 1e-8
    max_iters: int | None = None  # default max(100, 10 * diameter)
    init: str = "ones"  # or "random"
    seed: int | None = None  # random initialisation and neighbour sampling
    sample_neighbors: bool = False
    sample_size: int | None = None  # neighbours refreshed per sweep when sampling
    workers: int = 1
    order_seed: int | None = None  # shuffle the lazy sweep order (result is unchanged)

    def __post_init__(self):
        if self.schedule not in ("lazy", "impatient"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.eta_step < 1.0:
            raise ValueError("eta_step must lie in (0, 1)")


@dataclass
class RunReport:
    converged: bool
    iterations: int
    final_delta: float
    eta: float | None
    deltas: list = field(default_factory=list)
    attempts: list = field(default_factory=list)
    seconds: float = 0.0

    def to_json(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "final_delta": self.final_delta, "eta": self.eta, "deltas": list(self.deltas),
                "attempts": list(self.attempts), "seconds": self.seconds}


def default_max_iters(fg):
    try:
        return max(100, 10 * fg.diameter())
    except ValueError:
        return 100


def initial_store(fg, config):
    rng = np.random.default_rng(config.seed)
    store = {}
    for f, v in fg.message_keys:
        shape = fg.variables[v].sizes
        if config.init == "random":
            arr = rng.uniform(0.05, 1.0, size=shape)
        else:
            arr = np.ones(shape)
        store[(f, v)] = arr / arr.sum()
    return store


def normalise(msg, fg, f, v):
    total = msg.sum()
    if not np.isfinite(total) or total <= 0:
        raise InconsistentEvidence(
            f"message {fg.factors[f].name} -> {fg.variables[v].name} vanished",
            where=(fg.factors[f].name, fg.variables[v].name))
    return msg / total


def _delta(new, old):
    return float(np.max(np.abs(new - old))) if new.size else 0.0


def _sample_targets(fg, f, rng, k):
    fac = fg.factors[f]
    if fac.kind != "node" or rng is None:
        return None
    net = fg.info.get("network")
    nbrs = net.adjacency[fac.meta["i"]]
    if len(nbrs) <= k:
        return None
    chosen = set(rng.choice(nbrs, size=k, replace=False).tolist())
    return chosen | {"x"}


def sweep(fg, updater, store, config, rng=None, pool=None):
    """One sweep; returns the new store and the largest entry change."""
    sample_k = None
    if config.sample_neighbors:
        sample_k = config.sample_size or fg.info.get("t_cap") or 1
    order = list(fg.factor_order)
    if config.order_seed is not None:
        np.random.default_rng(config.order_seed).shuffle(order)

    def compute(f, source):
        targets = _sample_targets(fg, f, rng, sample_k) if sample_k else None
        return f, updater.outgoing(f, source, config.eta, targets)

    delta = 0.0
    if config.schedule == "lazy":
        new = dict(store)
        if pool is not None:
            results = list(pool.map(lambda f: compute(f, store), order))
        else:
            results = [compute(f, store) for f in order]
        for f, msgs in results:
            for v, msg in msgs.items():
                msg = normalise(msg, fg, f, v)
                delta = max(delta, _delta(msg, store[(f, v)]))
                new[(f, v)] = msg
        return new, delta
    new = dict(store)
    for f in fg.factor_order:
        _, msgs = compute(f, new)
        for v, msg in msgs.items():
            msg = normalise(msg, fg, f, v)
            delta = max(delta, _delta(msg, new[(f, v)]))
            new[(f, v)] = msg
    return new, delta


def run(fg, updater, config=EngineConfig(), store=None, callback=None):
    """Iterate until the largest message change drops below ``config.tol``.

    ``callback(iteration, store)`` is invoked after every sweep.
    """
    start = time.perf_counter()
    max_iters = config.max_iters or default_max_iters(fg)
    if store is None:
        store = initial_store(fg, config)
    rng = np.random.default_rng(config.seed) if config.sample_neighbors else None
    deltas = []
    converged = False
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 and config.schedule == "lazy" else None
    try:
        for it in range(1, max_iters + 1):
            store, delta = sweep(fg, updater, store, config, rng, pool)
            deltas.append(delta)
            if callback is not None:
                callback(it, store)
            if delta < config.tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    report = RunReport(converged, len(deltas), deltas[-1] if deltas else 0.0, config.eta, deltas,
                       seconds=time.perf_counter() - start)
    return store, report


def eta_schedule(step):
    """1, 1 - step, 1 - 2 step, ... while positive."""
    etas = []
    k = 0
    while True:
        eta = round(1.0 - k * step, 12)
        if eta <= 0:
            return etas
        etas.append(eta)
        k += 1


def run_with_backoff(fg, updater, config=EngineConfig()):
    """Try decreasing discounts until one run converges."""
    attempts = []
    for eta in eta_schedule(config.eta_step):
        store, report = run(fg, updater, replace(config, eta=eta))
        attempts.append({"eta": eta, "converged": report.converged, "iterations": report.iterations,
                         "final_delta": report.final_delta})
        log.info("eta=%.3f converged=%s after %d sweeps", eta, report.converged, report.iterations)
        if report.converged:
            report.attempts = attempts
            return store, report
    raise NoConvergence(f"no discount in steps of {config.eta_step} converged", attempts)
