"""Temporal Datalog over ordered fact streams, with LARS and Event Calculus
frontends."""
from .core import Program, Stratification, forget_horizon, incrementally_stratify, validate
from .engine import StreamingGraph, materialise
from .errors import TdError, ValidationError
from .oracle import perfect_model
from .syntax import parse_tdl, read_stream

__all__ = [
    "Program", "Stratification", "StreamingGraph", "TdError", "ValidationError",
    "forget_horizon", "incrementally_stratify", "materialise", "parse_tdl",
    "perfect_model", "read_stream", "validate",
]
