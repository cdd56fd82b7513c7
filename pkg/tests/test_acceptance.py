"""End-to-end acceptance checks.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.
"""
import itertools
import time

import numpy as np
import pytest

from cascade_bp import (FactorizedPrior, JointPrior, ObservationTimePrior, Snapshot, UniqueSourcePrior,
                        build_network, make_model)
from cascade_bp.engine import EngineConfig, initial_store, run, run_with_backoff, sweep
from cascade_bp.factor_graph import build_full_graph, build_scalable_graph
from cascade_bp.inference import default_t_max, estimate_spread, infer, map_estimates, prepare
from cascade_bp.kernels import INF, LAM_A_CROSS, LAM_B_CROSS, lambda_pair, psi_bidirectional
from cascade_bp.marginals import compare_marginals
from cascade_bp.oracle import branch_leaves, enumerate_posterior, exact_spread
from cascade_bp.simulator import sample_trajectory, simulate_batch, states_at
from cascade_bp.strength import convergence_threshold
from cascade_bp.tables import pairwise_binary_graph
from cascade_bp.update_rules import CascadeUpdater, NaiveUpdater

from instances import (random_factorized_prior, random_forest, random_graph, random_instance,
                       random_lambda, random_tree)

pytestmark = pytest.mark.acceptance


def _detail(record_property, text):
    record_property("detail", text)


# 1 -----------------------------------------------------------------------------

@pytest.mark.criterion(1, "full-graph BP is exact on forests")
def test_full_graph_exact_on_forests(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, slack = 0.0, []
    for k in range(30):
        net = random_forest(int(rng.integers(4, 9)), rng)
        model, snap = random_instance(net, rng, prior="joint", w_max=4)
        if k % 5 == 4:
            model = model.replace(prior=UniqueSourcePrior(net.node_count))
        marg, report, problem, _ = infer(net, model, snap, "full")
        exact = enumerate_posterior(net, model, snap)
        d = compare_marginals(marg, exact)
        assert set(d) >= {"x0", "tA", "tB", "w", "x0_joint"}
        worst = max(worst, d["max"])
        assert report.converged
        slack.append(problem.fg.diameter() - report.iterations)
    elapsed = time.perf_counter() - start
    _detail(record_property, f"max TV {worst:.1e}, min diameter slack {min(slack)}, {elapsed:.1f}s")
    assert worst <= 1e-9
    assert min(slack) >= 0
    assert elapsed < 60


# 2 -----------------------------------------------------------------------------

@pytest.mark.criterion(2, "scalable-graph BP is exact on forests under factorized priors")
def test_scalable_graph_exact_on_forests(record_property):
    rng = np.random.default_rng(7)
    worst_capped, worst_full = 0.0, 0.0
    for _ in range(30):
        net = random_forest(int(rng.integers(4, 9)), rng)
        model, snap = random_instance(net, rng, prior="factorized", w_max=4)
        for t_max in sorted({2, net.node_count - 1}):
            marg, report, problem, _ = infer(net, model, snap, "scalable", t_max)
            assert report.converged and report.iterations <= problem.fg.diameter()
            capped = enumerate_posterior(net, model, snap, "P'", t_max)
            worst_capped = max(worst_capped, compare_marginals(marg, capped)["max"])
            if t_max == net.node_count - 1:
                exact = enumerate_posterior(net, model, snap, "P")
                worst_full = max(worst_full, compare_marginals(marg, exact)["max"])
    _detail(record_property, f"vs capped {worst_capped:.1e}, vs uncapped {worst_full:.1e}")
    assert worst_capped <= 1e-9
    assert worst_full <= 1e-9


# 3 -----------------------------------------------------------------------------

def _edge_by_activations(lam_ij, lam_ji):
    """Activation-sum value for every ``(t_i, s_ij, t_j, s_ji)`` with times in {0, 1, 2, inf}.

    Sums the joint law of all eight activation delays (both directions, both
    processes, both branches) against the indicator that every relative
    timing matches. Returns ``(cases, values)``.
    """
    times = np.array(list(itertools.product((0.0, 1.0, 2.0, INF), repeat=2)))
    svals = np.array(list(itertools.product((0, 1), repeat=2)))
    ti, sij, tj, sji = (a.ravel() for a in np.meshgrid(
        np.arange(16), np.arange(4), np.arange(16), np.arange(4), indexing="ij"))
    ti, sij, tj, sji = times[ti], svals[sij], times[tj], svals[sji]
    delays = np.array(list(itertools.product((1.0, INF), repeat=8)))  # (256, 8)
    weight = np.ones(len(delays))
    ok = np.ones((len(ti), len(delays)), dtype=bool)
    for direction, (src, dst, s, lam) in enumerate(((ti, tj, sij, lam_ij), (tj, ti, sji, lam_ji))):
        for p in (0, 1):
            d_empty, d_cross = delays[:, 4 * direction + 2 * p], delays[:, 4 * direction + 2 * p + 1]
            l_empty, l_cross = lambda_pair(lam, p)
            weight = weight * np.where(d_empty == 1, l_empty, 1 - l_empty) * np.where(d_cross == 1, l_cross, 1 - l_cross)
            before = (src[:, p] < dst[:, 1 - p])[:, None]
            arrival = src[:, p][:, None] + np.where(before, d_empty[None], d_cross[None])
            target = dst[:, p][:, None]
            sign = np.where(arrival == target, 0, np.where(arrival > target, 1, -1))
            ok &= sign == s[:, p][:, None]
    return (ti, sij, tj, sji), ok.astype(float) @ weight


@pytest.mark.criterion(3, "relative-timing kernel equals the activation sum")
def test_relative_timing_kernel_exhaustive(record_property):
    rng = np.random.default_rng(3)
    lam_ij, lam_ji = rng.uniform(0.05, 0.95, 4), rng.uniform(0.05, 0.95, 4)
    start = time.perf_counter()
    (ti, sij, tj, sji), lhs = _edge_by_activations(lam_ij, lam_ji)
    rhs = np.array([psi_bidirectional(tuple(a), tuple(b), tuple(c), tuple(d), lam_ij, lam_ji)
                    for a, b, c, d in zip(ti, sij, tj, sji)])
    elapsed = time.perf_counter() - start
    worst = float(np.max(np.abs(lhs - rhs)))
    _detail(record_property, f"{len(lhs)} cases, max err {worst:.1e}, {elapsed:.2f}s")
    assert len(lhs) == 16 * 4 * 16 * 4
    assert worst <= 1e-12
    assert elapsed < 1.0


# 4 -----------------------------------------------------------------------------

NINE_KINDS = {("full", "node", "edge"), ("full", "edge", "edge"), ("full", "edge", "component"),
              ("full", "prior", "component"), ("scalable", "node", "edge"), ("scalable", "node", "initial"),
              ("scalable", "edge", "edge"), ("scalable", "edge", "component"), ("scalable", "prior", "component")}


@pytest.mark.criterion(4, "optimised updates equal the generic rule")
def test_optimised_updates_match_generic_rule(record_property):
    rng = np.random.default_rng(11)
    seen, worst, anchored = set(), 0.0, 0
    for g in range(20):
        net = random_graph(int(rng.integers(4, 7)), rng, max_degree=4)
        assert max(len(a) for a in net.adjacency) <= 4
        for alg, prior in (("full", "joint"), ("scalable", "factorized")):
            model, snap = random_instance(net, rng, prior=prior, w_max=3)
            problem = prepare(net, model, snap, alg, 2 if alg == "scalable" else None)
            fg = problem.fg
            fast, slow = CascadeUpdater(fg, problem.tables), NaiveUpdater(fg, problem.tables)
            config = EngineConfig(init="random", seed=g, eta=0.8)
            store = initial_store(fg, config)
            for _ in range(5):
                for f, fac in enumerate(fg.factors):
                    out = fast.outgoing(f, store, config.eta)
                    assert set(out) == set(fac.neighbors)
                    for v, msg in out.items():
                        ref = slow.message(f, v, store, config.eta)
                        a, b = msg / msg.sum(), ref / ref.sum()
                        worst = max(worst, float(np.max(np.abs(a - b)) / np.max(b)))
                        seen.add((fg.variant, fac.kind, fg.variables[v].kind))
                        anchored += "anchor" in fac.meta and fg.variables[v].kind == "edge"
                store, _ = sweep(fg, fast, store, config)
    _detail(record_property, f"max relative err {worst:.1e} over {len(seen)} kinds")
    assert seen == NINE_KINDS
    assert anchored > 0
    assert worst <= 1e-12


# 5 -----------------------------------------------------------------------------

def _cycle_instance():
    rng = np.random.default_rng(3)
    net = build_network([(0, 1), (1, 2), (2, 3), (3, 0)])
    prior = FactorizedPrior(np.tile([0.7, 0.1, 0.1, 0.1], (4, 1)))
    model = make_model(net, lam=rng.uniform(0.2, 0.8, (8, 4)), noise=np.eye(4) * 0.8 + 0.05, prior=prior,
                       w_prior=ObservationTimePrior(0.5, 0, 3))
    return prepare(net, model, Snapshot(np.array([1, 3, 2, 0])), "scalable", t_max=2)


def _frustrated_k4():
    h = np.random.default_rng(0).normal(0.0, 0.3, 4)
    couplings = {(i, j): -2.0 for i, j in itertools.combinations(range(4), 2)}
    return pairwise_binary_graph(4, couplings, h)


@pytest.mark.criterion(5, "discounted BP below the strength threshold converges; back-off recovers")
def test_discount_threshold(record_property):
    problem = _cycle_instance()
    th = convergence_threshold(problem.fg, problem.tables)
    assert th.rho > 0 and th.converged
    eta = min(1.0, 0.9 / th.rho)
    stores = []
    for seed in range(5):
        store, report = run(problem.fg, problem.updater(),
                            EngineConfig(eta=eta, init="random", seed=seed, max_iters=2000))
        assert report.converged
        stores.append(store)
    spread = max(np.max(np.abs(a[k] - b[k])) for a, b in itertools.combinations(stores, 2) for k in a)
    assert spread <= 1e-6

    fg, tables = _frustrated_k4()
    strong = convergence_threshold(fg, tables)
    assert strong.rho > 1
    updater = NaiveUpdater(fg, tables)
    _, plain = run(fg, updater, EngineConfig(eta=1.0))
    assert not plain.converged
    step = 0.1
    _, backed = run_with_backoff(fg, updater, EngineConfig(eta_step=step))
    assert backed.converged
    assert backed.eta <= 1 / strong.rho + step
    _detail(record_property, f"cycle rho {th.rho:.3g} fixed-point spread {spread:.1e}; "
                             f"K4 rho {strong.rho:.3g}, back-off eta {backed.eta}")


# 6 -----------------------------------------------------------------------------

def _trajectory(fg, updater, eta, schedule):
    states = []
    run(fg, updater, EngineConfig(eta=eta, schedule=schedule, max_iters=15, tol=1e-300, init="random", seed=1),
        callback=lambda it, store: states.append(dict(store)))
    return states


@pytest.mark.criterion(6, "unit discount reproduces undiscounted BP")
def test_unit_discount_identity(record_property):
    rng = np.random.default_rng(6)
    graphs = [random_tree(5, rng), random_graph(5, rng), build_network([(0, 1), (1, 2), (2, 3), (3, 0)])]
    worst, compared = 0.0, 0
    for net in graphs:
        for alg, prior in (("full", "joint"), ("scalable", "factorized")):
            model, snap = random_instance(net, rng, prior=prior, w_max=3)
            problem = prepare(net, model, snap, alg, 2 if alg == "scalable" else None)
            for schedule in ("lazy", "impatient"):
                a = _trajectory(problem.fg, problem.updater(), 1.0, schedule)
                b = _trajectory(problem.fg, problem.updater(), None, schedule)
                assert len(a) == len(b)
                for sa, sb in zip(a, b):
                    worst = max(worst, max(float(np.max(np.abs(sa[k] - sb[k]))) for k in sa))
                    compared += 1
    fg, tables = _frustrated_k4()
    for sa, sb in zip(_trajectory(fg, NaiveUpdater(fg, tables), 1.0, "lazy"),
                      _trajectory(fg, NaiveUpdater(fg, tables), None, "lazy")):
        worst = max(worst, max(float(np.max(np.abs(sa[k] - sb[k]))) for k in sa))
    _detail(record_property, f"{compared} sweeps compared, max diff {worst:.1e}")
    assert worst <= 1e-15


# 7 -----------------------------------------------------------------------------

@pytest.mark.criterion(7, "spread estimates match enumeration and Monte Carlo")
def test_spread_estimation(record_property):
    rng = np.random.default_rng(5)
    worst, worst_z = 0.0, 0.0
    for k in range(8):
        net = random_tree(int(rng.integers(3, 9)), rng)
        n = net.node_count
        model = make_model(net, lam=random_lambda(net, rng))
        x0 = np.zeros(n, dtype=np.int64)
        a, b = rng.choice(n, 2, replace=False)
        x0[a] |= 1
        x0[b] |= 2
        t_max = default_t_max(net, exact=True)
        batch = simulate_batch(net, model.replace(prior=JointPrior(x0[None], np.ones(1))), 100 + k, 100_000)
        for horizon in range(t_max + 1):
            est, _, report = estimate_spread(net, model, x0, horizon, t_max)
            assert report.converged
            exact = exact_spread(net, model, x0, horizon)
            worst = max(worst, *(abs(e - x) for e, x in zip(est, exact)))
            for p in (0, 1):
                counts = (batch.T[:, :, p] <= horizon).sum(axis=1)
                se = counts.std(ddof=1) / np.sqrt(len(counts))
                gap = abs(counts.mean() - est[p])
                if se == 0:
                    assert gap < 1e-12
                else:
                    worst_z = max(worst_z, gap / se)
    _detail(record_property, f"max err vs enumeration {worst:.1e}, max |z| {worst_z:.2f}")
    assert worst <= 1e-9
    assert worst_z <= 3


# 8 -----------------------------------------------------------------------------

def _enumerated_law(net, model, w_cap=3):
    """Law of ``(x0, min(w, w_cap), x_tilde)`` by exhaustive branching."""
    prior = model.prior
    leaves = branch_leaves(net, model.lam, prior.candidates, prior.masses)
    wp = model.w_prior
    ws = [(w, wp.mass(w)) for w in range(w_cap)] + [(w_cap, wp.tail(w_cap))]
    n = net.node_count
    readings = list(itertools.product(range(4), repeat=n))
    law = {}
    for leaf in range(len(leaves.prob)):
        x0 = tuple(int(s) for s in prior.candidates[leaves.cand[leaf]])
        for w, mass in ws:
            x = states_at(leaves.T[leaf], w)
            for xt in readings:
                p = leaves.prob[leaf] * mass * np.prod([model.noise[i, x[i], xt[i]] for i in range(n)])
                if p > 0:
                    law[(x0, w, xt)] = law.get((x0, w, xt), 0.0) + p
    return law


THREE_NODE_GRAPHS = {"path 0-1-2": [(0, 1), (1, 2)], "path 1-0-2": [(1, 0), (0, 2)],
                     "path 0-2-1": [(0, 2), (2, 1)], "triangle": [(0, 1), (1, 2), (0, 2)]}


@pytest.mark.criterion(8, "simulator reproduces the enumerated law on 3-node graphs")
@pytest.mark.parametrize("name", list(THREE_NODE_GRAPHS))
def test_simulator_fidelity(record_property, name):
    net = build_network(THREE_NODE_GRAPHS[name])
    noise = np.tile(np.eye(4), (3, 1, 1))
    noise[1] = 0.96 * np.eye(4) + 0.01
    prior = JointPrior(np.array([[1, 0, 2], [3, 0, 0]]), np.array([0.7, 0.3]))
    lam = np.tile([0.9, 0.2, 0.85, 0.1], (len(net.directed_edges), 1))
    model = make_model(net, lam=lam, noise=noise, prior=prior, w_prior=ObservationTimePrior(0.6, 0, 3))
    law = _enumerated_law(net, model)
    assert abs(sum(law.values()) - 1) < 1e-12
    N = 100_000
    batch = simulate_batch(net, model, 7, N)
    keys, counts = np.unique(np.column_stack([batch.x0, np.minimum(batch.w, 3), batch.x_tilde]), axis=0,
                             return_counts=True)
    empirical = {(tuple(k[:3].tolist()), int(k[3]), tuple(k[4:].tolist())): c / N for k, c in zip(keys, counts)}
    tv = 0.5 * sum(abs(law.get(k, 0.0) - empirical.get(k, 0.0)) for k in set(law) | set(empirical))
    _detail(record_property, f"{name}: TV {tv:.4f}")
    assert tv <= 0.01


# 9 -----------------------------------------------------------------------------

def _two_source_scenario(rng):
    n = int(rng.integers(12, 17))
    net = random_tree(n, rng)
    lam = np.zeros((len(net.directed_edges), 4))
    lam[:, 0] = rng.uniform(0.4, 0.9, len(lam))
    lam[:, 2] = rng.uniform(0.4, 0.9, len(lam))
    assert not lam[:, [LAM_A_CROSS, LAM_B_CROSS]].any()
    a, b = rng.choice(n, 2, replace=False)
    truth = np.zeros(n, dtype=np.int64)
    truth[a], truth[b] = 1, 2
    model = make_model(net, lam=lam, prior=JointPrior(truth[None], np.ones(1)),
                       w_prior=ObservationTimePrior(0.4, 1, 3))
    snap = sample_trajectory(net, model, int(rng.integers(2**31))).to_snapshot()
    cands = []
    for i in np.flatnonzero(snap.x_tilde == 1):
        for j in np.flatnonzero(snap.x_tilde == 2):
            c = np.zeros(n, dtype=np.int64)
            c[i], c[j] = 1, 2
            cands.append(c)
    prior = JointPrior(np.array(cands), np.full(len(cands), 1.0 / len(cands)))
    return net, model.replace(prior=prior), snap


@pytest.mark.criterion(9, "two-source MAP under cross-immunity matches the oracle")
def test_two_source_map(record_property):
    rng = np.random.default_rng(99)
    matched, margins, tries = 0, [], 0
    while len(margins) < 10:
        tries += 1
        net, model, snap = _two_source_scenario(rng)
        exact = enumerate_posterior(net, model, snap, need_times=False)
        top = np.sort(exact.x0_joint)[::-1]
        margin = top[0] - (top[1] if len(top) > 1 else 0.0)
        if margin <= 1e-6:
            continue  # a tie makes the MAP ill-defined
        marg, report, problem, _ = infer(net, model, snap, "full")
        assert report.converged and report.iterations <= problem.fg.diameter()
        matched += np.array_equal(map_estimates(marg)["x0"], map_estimates(exact)["x0"])
        margins.append(margin)
    _detail(record_property, f"{matched}/10 MAP matches, smallest margin {min(margins):.2g}, {tries} drawn")
    assert matched == 10


# 10 ----------------------------------------------------------------------------

def _scalable_store_formula(net, t_max, w_size):
    E, V, C = len(net.undirected_edges), net.node_count, len(net.components)
    return 4 * E * w_size * (t_max + 2) ** 2 * 4 + 4 * V + 2 * C * w_size


def _full_store_formula(net, w_size, k):
    E, V, C = len(net.undirected_edges), net.node_count, len(net.components)
    return 4 * E * w_size * k * (V + 1) ** 2 * 4 + 2 * C * w_size * k


@pytest.mark.criterion(10, "message-store sizes match the closed-form counts")
def test_store_counts(record_property):
    rng = np.random.default_rng(10)
    checked = 0
    for _ in range(10):
        net = random_forest(int(rng.integers(4, 12)), rng, max_parts=3) if rng.random() < 0.5 else \
            random_graph(int(rng.integers(4, 10)), rng)
        for w_size, k in ((1, 1), (3, 5), (4, 2)):
            assert build_full_graph(net, w_size, k).store_size() == _full_store_formula(net, w_size, k)
            checked += 1
        for t_max in (1, 2, 3, 5):
            for w_size in (1, 3):
                small = build_scalable_graph(net, t_max, w_size).store_size()
                big = build_scalable_graph(net, 2 * t_max, w_size).store_size()
                assert small == _scalable_store_formula(net, t_max, w_size)
                assert big == _scalable_store_formula(net, 2 * t_max, w_size)
                assert big / small == _scalable_store_formula(net, 2 * t_max, w_size) / \
                    _scalable_store_formula(net, t_max, w_size)
                checked += 2
    # the same counts once the tables fix |W| from a snapshot
    net = random_tree(6, rng)
    model = make_model(net, prior=random_factorized_prior(6, rng), w_prior=ObservationTimePrior(0.5, 0, 2))
    snap = Snapshot(np.zeros(6, dtype=np.int64))
    for t_max in (2, 4):
        problem = prepare(net, model, snap, "scalable", t_max)
        w_size = len(problem.tables.wsupport)
        assert problem.fg.store_size() == _scalable_store_formula(net, t_max, w_size)
    _detail(record_property, f"{checked} graph sizes checked")
