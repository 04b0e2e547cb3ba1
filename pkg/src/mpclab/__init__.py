"""mpclab: a synchronous network simulator for MPC with selective abort."""
from .errors import (ConfigInvalid, DecryptFailure, GraphMissing, InvariantViolation, MpcLabError,
                     StrategyProtocolMismatch, UnknownProtocol)
from .netsim import CommMetrics, Network, Outcome, ProtocolOutcome, RunConfig, execute, protocol_names, run_protocol

__version__ = "0.1.0"

__all__ = [
    "CommMetrics", "ConfigInvalid", "DecryptFailure", "GraphMissing", "InvariantViolation", "MpcLabError",
    "Network", "Outcome", "ProtocolOutcome", "RunConfig", "StrategyProtocolMismatch", "UnknownProtocol",
    "execute", "protocol_names", "run_protocol",
]
