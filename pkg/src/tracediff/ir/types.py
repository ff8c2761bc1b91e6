"""IR types and kinds."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..errors import KindError


class Kind(enum.Enum):
    INDEX = "Index"
    VALUE = "Value"
    TYPE = "Type"

    def __le__(self, other):
        order = (Kind.INDEX, Kind.VALUE, Kind.TYPE)
        return order.index(self) <= order.index(other)

    def __lt__(self, other):
        return self != other and self <= other

    def __str__(self):
        return self.value


class Ty:
    __slots__ = ()

    def __str__(self):
        return show_type(self)


@dataclass(frozen=True, slots=True)
class TypeVar(Ty):
    name: str


@dataclass(frozen=True, slots=True)
class UnitTy(Ty):
    pass


@dataclass(frozen=True, slots=True)
class BoolTy(Ty):
    pass


@dataclass(frozen=True, slots=True)
class RealTy(Ty):
    pass


@dataclass(frozen=True, slots=True)
class Fin(Ty):
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 0:
            raise ValueError(f"Fin size must be a nonnegative int, got {self.n!r}")


@dataclass(frozen=True, slots=True)
class Acc(Ty):
    inner: Ty
    _hash: int = field(default=None, init=False, repr=False, compare=False)

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((Acc, self.inner))
            object.__setattr__(self, "_hash", h)
        return h


@dataclass(frozen=True, slots=True)
class Arr(Ty):
    index: Ty
    elem: Ty
    _hash: int = field(default=None, init=False, repr=False, compare=False)

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((Arr, self.index, self.elem))
            object.__setattr__(self, "_hash", h)
        return h


@dataclass(frozen=True, slots=True)
class Pair(Ty):
    first: Ty
    second: Ty
    _hash: int = field(default=None, init=False, repr=False, compare=False)

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((Pair, self.first, self.second))
            object.__setattr__(self, "_hash", h)
        return h


Unit = UnitTy()
Bool = BoolTy()
Real = RealTy()


def show_type(ty):
    match ty:
        case TypeVar(name):
            return name
        case UnitTy():
            return "()"
        case BoolTy():
            return "Bool"
        case RealTy():
            return "Real"
        case Fin(n):
            return str(n)
        case Acc(inner):
            return "&" + show_type(inner)
        case Arr(index, elem):
            return f"[{show_type(index)}]{show_type(elem)}"
        case Pair(a, b):
            return f"({show_type(a)}, {show_type(b)})"
    raise TypeError(f"not a type: {ty!r}")


_CLOSED_KINDS = {}


def kind_of(ty, env=None):
    """Least kind of ``ty`` under the generic environment ``env`` (name -> Kind)."""
    if not env:
        k = _CLOSED_KINDS.get(ty)
        if k is None:
            k = _kind_of(ty, {})
            if len(_CLOSED_KINDS) > 65536:
                _CLOSED_KINDS.clear()
            _CLOSED_KINDS[ty] = k
        return k
    return _kind_of(ty, env)


def _kind_of(ty, env):
    match ty:
        case TypeVar(name):
            if name not in env:
                raise KindError("UnboundTypeVar", name)
            return env[name]
        case UnitTy() | BoolTy() | RealTy():
            return Kind.VALUE
        case Fin():
            return Kind.INDEX
        case Acc(inner):
            if not kind_of(inner, env) <= Kind.VALUE:
                raise KindError("NonValueComponent", f"accumulator of {show_type(inner)}")
            return Kind.TYPE
        case Arr(index, elem):
            if not kind_of(index, env) <= Kind.INDEX:
                raise KindError("NonIndexType", f"array index {show_type(index)}")
            if not kind_of(elem, env) <= Kind.VALUE:
                raise KindError("NonValueComponent", f"array element {show_type(elem)}")
            return Kind.VALUE
        case Pair(a, b):
            for part in (a, b):
                if not kind_of(part, env) <= Kind.VALUE:
                    raise KindError("NonValueComponent", f"pair component {show_type(part)}")
            return Kind.VALUE
    raise KindError("NotAType", repr(ty))


def has_kind(ty, kind, env=None):
    return kind_of(ty, env) <= kind


def substitute(ty, mapping):
    """Replace type variables by the types in ``mapping``."""
    if not mapping:
        return ty
    match ty:
        case TypeVar(name):
            return mapping.get(name, ty)
        case Acc(inner):
            return Acc(substitute(inner, mapping))
        case Arr(index, elem):
            return Arr(substitute(index, mapping), substitute(elem, mapping))
        case Pair(a, b):
            return Pair(substitute(a, mapping), substitute(b, mapping))
    return ty


def free_type_vars(ty, out=None):
    out = set() if out is None else out
    match ty:
        case TypeVar(name):
            out.add(name)
        case Acc(inner):
            free_type_vars(inner, out)
        case Arr(index, elem):
            free_type_vars(index, out)
            free_type_vars(elem, out)
        case Pair(a, b):
            free_type_vars(a, out)
            free_type_vars(b, out)
    return out


def contains_acc(ty):
    match ty:
        case Acc():
            return True
        case Arr(index, elem):
            return contains_acc(index) or contains_acc(elem)
        case Pair(a, b):
            return contains_acc(a) or contains_acc(b)
    return False


def contains_real(ty):
    match ty:
        case RealTy():
            return True
        case Acc(inner):
            return contains_real(inner)
        case Arr(_, elem):
            return contains_real(elem)
        case Pair(a, b):
            return contains_real(a) or contains_real(b)
    return False


def unify(pattern, actual, bindings):
    """Match ``pattern`` (may contain type variables) against ``actual``.

    Extends ``bindings`` in place; returns False on a mismatch.
    """
    match pattern:
        case TypeVar(name):
            bound = bindings.get(name)
            if bound is None:
                bindings[name] = actual
                return True
            return bound == actual
        case Acc(inner):
            return isinstance(actual, Acc) and unify(inner, actual.inner, bindings)
        case Arr(index, elem):
            return (
                isinstance(actual, Arr)
                and unify(index, actual.index, bindings)
                and unify(elem, actual.elem, bindings)
            )
        case Pair(a, b):
            return (
                isinstance(actual, Pair)
                and unify(a, actual.first, bindings)
                and unify(b, actual.second, bindings)
            )
    return pattern == actual


def dual_type(ty):
    """Forward-mode lift of a type: every Real leaf becomes (Real, Real)."""
    match ty:
        case RealTy():
            return Pair(Real, Real)
        case Acc(inner):
            return Acc(dual_type(inner))
        case Arr(index, elem):
            return Arr(dual_type(index), dual_type(elem))
        case Pair(a, b):
            return Pair(dual_type(a), dual_type(b))
    return ty


def zero_leaves(ty):
    """True if values of ``ty`` carry no data (only units)."""
    match ty:
        case UnitTy():
            return True
        case Arr(_, elem):
            return zero_leaves(elem)
        case Pair(a, b):
            return zero_leaves(a) and zero_leaves(b)
    return False
