"""Typed first-order IR: syntax, checking and text form."""

from .check import ensure_valid, let_types, typecheck_function, validate_registry
from .syntax import (
    Accumulate,
    AccumBlock,
    ArrayLit,
    Binary,
    Block,
    Call,
    Const,
    FalseLit,
    FinLit,
    For,
    FuncDef,
    Fst,
    Index,
    Let,
    OpaqueDef,
    PairLit,
    RefFst,
    RefIndex,
    RefSnd,
    Registry,
    Select,
    Snd,
    TrueLit,
    Unary,
    UnitLit,
)
from .text import parse_ir, print_def, print_ir
from .types import Acc, Arr, Bool, Fin, Kind, Pair, Real, TypeVar, Unit, kind_of, show_type
