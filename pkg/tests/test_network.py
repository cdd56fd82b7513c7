import json

import numpy as np
import pytest

from cascade_bp import IsolatedNodeError, SchemaError, build_network, component_diameter
from cascade_bp.network import load_network, network_from_json


def test_single_edge_is_closed_under_reversal():
    net = build_network([("a", "b")])
    assert net.node_count == 2
    assert net.directed_edges == ((0, 1), (1, 0))
    assert net.undirected_edges == ((0, 1),)
    assert net.labels == ("a", "b")
    assert net.components[0].anchor_edge == (0, 1)


def test_labels_are_compacted_in_sorted_order():
    net = build_network([(10, 3), (3, 7)])
    assert net.labels == (3, 7, 10)
    assert net.adjacency == ((1, 2), (0,), (0,))
    assert net.relabel(["x", "y", "z"]) == {3: "x", 7: "y", 10: "z"}


def test_duplicate_and_reversed_edges_collapse():
    net = build_network([(0, 1), (1, 0), (0, 1)])
    assert len(net.directed_edges) == 2


def test_components_and_diameters():
    net = build_network([(0, 1), (1, 2), (2, 3), (4, 5)])
    assert len(net.components) == 2
    big, small = net.components
    assert big.nodes == (0, 1, 2, 3) and big.diameter == 4
    assert small.diameter == 2
    assert component_diameter(net, big) == 4
    assert net.max_diameter == 4
    assert net.max_component_span == 3
    assert net.component_of(5).id == 1
    assert net.is_forest()


def test_cycle_is_not_a_forest():
    net = build_network([(0, 1), (1, 2), (2, 0)])
    assert not net.is_forest()
    assert net.components[0].diameter == 2


def test_anchor_is_smallest_edge_of_each_component():
    net = build_network([(5, 4), (3, 2), (2, 1)])
    assert [c.anchor_edge for c in net.components] == [(0, 1), (3, 4)]


@pytest.mark.parametrize("edges", [[], [(1, 1)], [(1, 2, 3)], [("a", 1)]])
def test_bad_edge_lists(edges):
    with pytest.raises(SchemaError):
        build_network(edges)


def test_isolated_nodes_are_rejected():
    with pytest.raises(IsolatedNodeError):
        build_network([(0, 1)], nodes=[0, 1, 2])


def test_json_round_trip(tmp_path):
    net = build_network([("u", "v"), ("v", "w")])
    path = tmp_path / "g.json"
    path.write_text(json.dumps(net.to_json()))
    again = load_network(path)
    assert again == net
    assert network_from_json(net.to_json()).edge_index == net.edge_index


def test_malformed_graph_documents(tmp_path):
    with pytest.raises(SchemaError):
        network_from_json({"nodes": [1]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError):
        load_network(bad)


def test_edge_index_matches_directed_order():
    net = build_network([(0, 1), (1, 2), (0, 2)])
    for k, e in enumerate(net.directed_edges):
        assert net.directed_index(*e) == k
    assert np.all(np.diff([net.degree(i) for i in range(3)]) == 0)
