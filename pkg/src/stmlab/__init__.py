"""Multi-version STM laboratory: protocols, history checker, benchmark harness."""

from .checker import (BoundExceeded, brute_force_serialization, build_graph,
                      check_local_opacity, check_opaque, check_strict_serializable,
                      completion, is_valid, subhistory_set)
from .core import (INF, UNBOUNDED, Aborted, ProtocolViolation, TransactionStateError,
                   compute_wts, next_timestamp)
from .history import History, HistoryBuilder, HistoryEvent, Recorder
from .protocols import ProtocolKind, StmConfig, make_protocol

__version__ = "0.1.0"

__all__ = [
    "Aborted", "BoundExceeded", "History", "HistoryBuilder", "HistoryEvent", "INF",
    "ProtocolKind", "ProtocolViolation", "Recorder", "StmConfig",
    "TransactionStateError", "UNBOUNDED", "brute_force_serialization", "build_graph",
    "check_local_opacity", "check_opaque", "check_strict_serializable", "completion",
    "compute_wts", "is_valid", "make_protocol", "next_timestamp", "subhistory_set"]
