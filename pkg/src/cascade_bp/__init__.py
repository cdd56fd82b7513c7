"""Belief propagation for two interacting independent cascades."""
__version__ = "0.1.0"

from .errors import (EnumerationBudgetExceeded, InconsistentEvidence, IsolatedNodeError, NoConvergence,
                     SchemaError, StrengthBudgetExceeded)
from .network import Network, build_network, component_diameter
from .kernels import INF, ObservationTimePrior
from .model import FactorizedPrior, InfoStructure, JointPrior, ModelSpec, Snapshot, UniqueSourcePrior, make_model
from .engine import EngineConfig
from .inference import estimate_spread, infer, map_estimates, rank_sources
from .oracle import enumerate_posterior
from .simulator import sample_trajectory
from .strength import convergence_threshold
from .estimators import SourceEstimator, SpreadEstimator

