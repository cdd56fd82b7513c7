import numpy as np
import pytest

from cascade_bp import build_network, make_model, Snapshot, FactorizedPrior
from cascade_bp.engine import EngineConfig, initial_store
from cascade_bp.inference import prepare
from cascade_bp.update_rules import (CascadeUpdater, NaiveUpdater, build_phi_cache, contract, discount)

from instances import random_instance, random_tree


def test_discount_identity_and_power():
    x = np.array([0.2, 0.5, 0.3])
    assert discount(x, None) is x
    assert np.array_equal(discount(x, 1.0), x)
    assert np.allclose(discount(x, 0.5), np.sqrt(x))


def test_phi_cache_sums():
    m = np.arange(24, dtype=float).reshape(3, 2, 2, 2)
    ph = build_phi_cache(m)
    assert np.array_equal(ph.full, m.sum(axis=(-2, -1)))
    assert np.array_equal(ph.a1, m[..., 1, 0] + m[..., 1, 1])
    assert np.array_equal(ph.b1, m[..., 0, 1] + m[..., 1, 1])
    assert np.array_equal(ph.ab1, m[..., 1, 1])


def test_phi_cache_is_additive():
    rng = np.random.default_rng(0)
    a, b = rng.random((4, 4, 2, 2)), rng.random((4, 4, 2, 2))
    pa, pb, pab = build_phi_cache(a), build_phi_cache(b), build_phi_cache(a + b)
    for name in ("full", "a1", "b1", "ab1"):
        assert np.allclose(getattr(pab, name), getattr(pa, name) + getattr(pb, name))


def test_contract_matches_einsum():
    rng = np.random.default_rng(1)
    x, y = rng.random((2, 3)), rng.random((3, 4))
    out = contract([(x, ("a", "b")), (y, ("b", "c"))], ("c", "a"))
    assert np.allclose(out, np.einsum("ab,bc->ca", x, y))


def _random_store(problem, seed=0):
    return initial_store(problem.fg, EngineConfig(init="random", seed=seed))


@pytest.mark.parametrize("alg", ["full", "scalable"])
def test_leaf_and_internal_nodes_match_naive(alg):
    rng = np.random.default_rng(2)
    net = random_tree(5, rng)
    model, snap = random_instance(net, rng, prior="joint" if alg == "full" else "factorized", w_max=3)
    problem = prepare(net, model, snap, alg, 3 if alg == "scalable" else None)
    fast, slow = CascadeUpdater(problem.fg, problem.tables), NaiveUpdater(problem.fg, problem.tables)
    store = _random_store(problem)
    for f, fac in enumerate(problem.fg.factors):
        for v, msg in fast.outgoing(f, store, 0.7).items():
            ref = slow.message(f, v, store, 0.7)
            assert np.allclose(msg / msg.sum(), ref / ref.sum(), rtol=0, atol=1e-12)


def test_messages_never_negative():
    rng = np.random.default_rng(3)
    net = build_network([(0, 1), (1, 2), (2, 0), (2, 3)])
    model, snap = random_instance(net, rng, prior="factorized", w_max=3)
    problem = prepare(net, model, snap, "scalable", 2)
    up = problem.updater()
    store = _random_store(problem, 4)
    for f in range(len(problem.fg.factors)):
        for msg in up.outgoing(f, store, 0.5).values():
            assert np.all(msg >= 0) and np.all(np.isfinite(msg))


def test_leaf_node_case_split():
    # a leaf has no other neighbour, so a late arrival (s = 1) is only possible at time zero
    net = build_network([(0, 1)])
    model = make_model(net, prior=FactorizedPrior(np.tile([0.4, 0.3, 0.2, 0.1], (2, 1))))
    problem = prepare(net, model, Snapshot(np.array([1, 0])), "scalable", 2)
    up = problem.updater()
    out = up.outgoing(up._node_factor[0], _random_store(problem))
    msg = out[problem.fg.info["edge_var"][(1, 0)]]
    table = problem.tables.node_table[0]
    for sa in (0, 1):
        for sb in (0, 1):
            assert np.allclose(msg[:, 0, 0, sa, sb], table[:, 0, 0])
    assert not msg[:, 1:, :, 1, :].any()
    assert not msg[:, :, 1:, :, 1].any()
    assert np.allclose(msg[:, 1:, 1:, 0, 0], table[:, 1:, 1:])


def test_op_counter_closed_form():
    rng = np.random.default_rng(5)
    net = random_tree(6, rng)
    for alg, prior in (("full", "joint"), ("scalable", "factorized")):
        model, snap = random_instance(net, rng, prior=prior, w_max=3)
        problem = prepare(net, model, snap, alg, 2 if alg == "scalable" else None)
        up = problem.updater()
        store = _random_store(problem)
        shape = problem.tables.ctx_shape + (problem.tables.n_t,) * 2
        cells = int(np.prod(shape))
        for i in range(net.node_count):
            d = len(net.adjacency[i])
            up.counter.reset()
            up.outgoing(up._node_factor[i], store)
            expected = 4 * d * (d - 1) * cells
            if alg == "scalable":
                expected += 4 * d * cells
            assert up.counter.phi_products == expected
            assert up.counter.node_updates == d


def test_targets_restrict_outputs():
    rng = np.random.default_rng(6)
    net = build_network([(0, 1), (0, 2), (0, 3)])
    model, snap = random_instance(net, rng, prior="factorized", w_max=2)
    problem = prepare(net, model, snap, "scalable", 2)
    up = problem.updater()
    out = up.outgoing(up._node_factor[0], _random_store(problem), targets={1, "x"})
    ev = problem.fg.info["edge_var"]
    assert set(out) == {ev[(1, 0)], problem.fg.info["init_var"][0]}
