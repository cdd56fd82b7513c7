"""Input coercion helpers shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .errors import SchemaError
from .kernels import state_from_name
from .model import ModelSpec, Snapshot, make_model, model_from_json, snapshot_from_json
from .network import Network, build_network, network_from_json


def check_network(obj):
    """Accept a ``Network``, a graph document or an edge list."""
    if isinstance(obj, Network):
        return obj
    if isinstance(obj, dict):
        return network_from_json(obj)
    if obj is None:
        raise SchemaError("a network is required")
    return build_network(obj)


def check_model(obj, network):
    if obj is None:
        return make_model(network)
    if isinstance(obj, ModelSpec):
        if obj.n != network.node_count or len(obj.lam) != len(network.directed_edges):
            raise SchemaError("model size does not match the network")
        return obj
    if isinstance(obj, dict):
        return model_from_json(obj, network)
    raise SchemaError(f"cannot interpret {type(obj).__name__} as a model")


def check_states(x, network):
    """Coerce a state vector (names or ints) to an int array of length n."""
    try:
        arr = np.array([state_from_name(s) for s in x], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad state vector: {exc}") from exc
    if arr.shape != (network.node_count,):
        raise SchemaError(f"expected {network.node_count} states, got {arr.shape[0]}")
    return arr


def check_snapshot(obj, network):
    if isinstance(obj, Snapshot):
        if len(obj.x_tilde) != network.node_count:
            raise SchemaError("snapshot size does not match the network")
        return obj
    if isinstance(obj, dict):
        return snapshot_from_json(obj, network)
    return Snapshot(check_states(obj, network))
