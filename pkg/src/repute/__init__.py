"""Reputation engine, reputation consensus and agent-society simulator."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DEFAULT_KEY,
    EngineConfig,
    RatingKind,
    RatingRecord,
    ReputationState,
    canonical_hash,
    validate_record,
)
from .engine import compute_period  # noqa: E402
from .scoping import ScopingMode, ScopingPolicy, partition, run_schedule  # noqa: E402

__all__ = [
    "DEFAULT_KEY",
    "EngineConfig",
    "RatingKind",
    "RatingRecord",
    "ReputationState",
    "ScopingMode",
    "ScopingPolicy",
    "canonical_hash",
    "compute_period",
    "partition",
    "run_schedule",
    "validate_record",
]
