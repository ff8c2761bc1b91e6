"""Host values to runtime values and back.

=============  =========================================  ==================
type           accepted host value                        returned as
=============  =========================================  ==================
Real           int or float (not bool)                    float
Bool           bool                                       bool
Fin n          int in ``[0, n)``                          int
Unit           ``None`` or ``()``                         None
[n]T           sequence of length n                       list
(A, B)         2-sequence                                 tuple
record         dict with exactly the record's fields      dict
=============  =========================================  ==================
"""

from __future__ import annotations

import numbers
from collections.abc import Mapping, Sequence

from ..builder import RecordType, VecType, to_ty
from ..errors import MarshalError
from ..ir.types import Arr, BoolTy, Fin, Pair, RealTy, TypeVar, UnitTy, show_type


def _elem_spec(spec, ty):
    return spec.elem if isinstance(spec, VecType) else ty.elem


def _is_seq(v):
    if isinstance(v, (str, bytes, Mapping)):
        return False
    return isinstance(v, Sequence) or hasattr(v, "__len__") and hasattr(v, "__iter__")


def bind_sizes(value, spec, ty, out):
    """Infer generic index sizes from a host value's shape."""
    match ty:
        case Arr(index, elem):
            if not _is_seq(value):
                return
            if isinstance(index, TypeVar):
                n = len(value)
                if out.setdefault(index.name, n) != n:
                    raise MarshalError(f"size {index.name} bound to both {out[index.name]} and {n}")
            es = _elem_spec(spec, ty)
            for v in value:
                bind_sizes(v, es, elem, out)
        case Pair(a, b):
            if isinstance(spec, RecordType) and isinstance(value, Mapping):
                for name, s in zip(spec.names, spec.specs):
                    if name in value:
                        bind_sizes(value[name], s, to_ty_loose(s), out)
            elif _is_seq(value) and len(value) == 2:
                bind_sizes(value[0], a, a, out)
                bind_sizes(value[1], b, b, out)


def to_ty_loose(spec):
    try:
        return to_ty(spec)
    except TypeError:
        return spec


def to_runtime(value, spec, ty, where="argument"):
    """Check and convert ``value`` for the concrete type ``ty``."""
    match ty:
        case RealTy():
            if isinstance(value, numbers.Real) and not isinstance(value, bool):
                return float(value)
        case BoolTy():
            if isinstance(value, (bool,)) or type(value).__name__ == "bool_":
                return bool(value)
        case UnitTy():
            if value is None or value == ():
                return None
        case Fin(n):
            if isinstance(value, numbers.Integral) and not isinstance(value, bool):
                if not 0 <= int(value) < n:
                    raise MarshalError(f"{where}: index {value} is out of range for Fin {n}")
                return int(value)
        case Arr(Fin(n), elem):
            if _is_seq(value):
                if len(value) != n:
                    raise MarshalError(f"{where}: expected {n} elements, got {len(value)}")
                es = _elem_spec(spec, ty)
                return [to_runtime(v, es, elem, where) for v in value]
        case Pair(a, b):
            if isinstance(spec, RecordType):
                if isinstance(value, Mapping):
                    if set(value) != set(spec.names):
                        raise MarshalError(
                            f"{where}: expected fields {list(spec.names)}, got {list(value)}")
                    return _record_in(value, spec, ty, where)
            elif _is_seq(value) and len(value) == 2:
                return (to_runtime(value[0], a, a, where), to_runtime(value[1], b, b, where))
    raise MarshalError(f"{where}: cannot use {value!r} as {show_type(ty)}")


def _record_in(value, spec, ty, where):
    parts = []
    cur = ty
    for k, (name, s) in enumerate(zip(spec.names, spec.specs)):
        last = k == len(spec.names) - 1
        fty = cur if last else cur.first
        parts.append(to_runtime(value[name], s, fty, f"{where}.{name}"))
        if not last:
            cur = cur.second
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = (p, out)
    return out


def from_runtime(value, spec, ty):
    match ty:
        case Arr(_, elem):
            es = _elem_spec(spec, ty)
            return [from_runtime(v, es, elem) for v in value]
        case Pair(a, b):
            if isinstance(spec, RecordType):
                out = {}
                cur, cty = value, ty
                for k, (name, s) in enumerate(zip(spec.names, spec.specs)):
                    if k == len(spec.names) - 1:
                        out[name] = from_runtime(cur, s, cty)
                    else:
                        out[name] = from_runtime(cur[0], s, cty.first)
                        cur, cty = cur[1], cty.second
                return out
            return (from_runtime(value[0], a, a), from_runtime(value[1], b, b))
    return value
