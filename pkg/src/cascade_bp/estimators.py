"""Estimator-style front end over the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import EngineConfig
from .inference import default_t_max, estimate_spread, infer, map_estimates, rank_sources
from .validation import check_model, check_network, check_snapshot, check_states


class _EngineParams:
    def _config(self):
        return EngineConfig(schedule=self.schedule, eta=self.eta, eta_step=self.eta_step, tol=self.tol,
                            max_iters=self.max_iters, seed=self.seed,
                            sample_neighbors=self.sample_neighbors, workers=self.workers)


class SourceEstimator(_EngineParams, BaseEstimator):
    """Posterior over initial states given a snapshot.

    ``fit(snapshot)`` runs message passing and stores ``marginals_`` and
    ``report_``; ``predict`` returns the MAP initial state.

    Parameters
    ----------
    network, model
        Structure and kernels; anything ``check_network``/``check_model`` accepts.
    algorithm : {"full", "scalable"}
        Joint-prior inference on the full inflated graph, or the per-node variant.
    t_max : int, optional
        Time cap for the scalable variant (default: largest diameter in hops).
    backoff : bool
        Retry with smaller discounts until a run converges.
    """

    def __init__(self, network=None, model=None, algorithm="full", t_max=None, schedule="lazy",
                 eta=1.0, eta_step=0.1, tol=1e-8, max_iters=None, backoff=False,
                 sample_neighbors=False, seed=None, workers=1):
        self.network = network
        self.model = model
        self.algorithm = algorithm
        self.t_max = t_max
        self.schedule = schedule
        self.eta = eta
        self.eta_step = eta_step
        self.tol = tol
        self.max_iters = max_iters
        self.backoff = backoff
        self.sample_neighbors = sample_neighbors
        self.seed = seed
        self.workers = workers

    def fit(self, snapshot, y=None):
        net = check_network(self.network)
        model = check_model(self.model, net)
        snap = check_snapshot(snapshot, net)
        t_max = self.t_max
        if self.algorithm == "scalable" and t_max is None:
            t_max = default_t_max(net)
        marg, report, problem, _ = infer(net, model, snap, self.algorithm, t_max, self._config(),
                                         backoff=self.backoff)
        self.network_ = net
        self.marginals_ = marg
        self.report_ = report
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.estimates_ = map_estimates(marg)
        return self

    def predict(self, snapshot=None):
        if snapshot is not None:
            self.fit(snapshot)
        check_is_fitted(self, "marginals_")
        return np.asarray(self.estimates_["x0"])

    def predict_proba(self, snapshot=None):
        """Per-node initial-state beliefs, shape ``(n, 4)``."""
        if snapshot is not None:
            self.fit(snapshot)
        check_is_fitted(self, "marginals_")
        return self.marginals_.x0.copy()

    def rank(self, process=0):
        check_is_fitted(self, "marginals_")
        return [self.network_.labels[i] for i in rank_sources(self.marginals_, process)]


class SpreadEstimator(_EngineParams, BaseEstimator):
    """Expected spread of each process from a known initial state."""

    def __init__(self, network=None, model=None, horizon=1, t_max=None, schedule="lazy", eta=1.0,
                 eta_step=0.1, tol=1e-8, max_iters=None, sample_neighbors=False, seed=None, workers=1):
        self.network = network
        self.model = model
        self.horizon = horizon
        self.t_max = t_max
        self.schedule = schedule
        self.eta = eta
        self.eta_step = eta_step
        self.tol = tol
        self.max_iters = max_iters
        self.sample_neighbors = sample_neighbors
        self.seed = seed
        self.workers = workers

    def fit(self, x0, y=None):
        net = check_network(self.network)
        model = check_model(self.model, net)
        x0 = check_states(x0, net)
        t_max = self.t_max if self.t_max is not None else max(self.horizon, default_t_max(net, exact=True))
        spread, marg, report = estimate_spread(net, model, x0, self.horizon, t_max, self._config())
        self.spread_ = spread
        self.marginals_ = marg
        self.report_ = report
        return self

    def predict(self, x0=None):
        if x0 is not None:
            self.fit(x0)
        check_is_fitted(self, "spread_")
        return np.array(self.spread_)
