"""Monomorphization, lowering and execution of IR definitions."""

from .callable import Callable, OpCount, compile, invoke, op_count
from .lower import real_leaves
from .marshal import from_runtime, to_runtime
