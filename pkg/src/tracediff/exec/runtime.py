"""Runtime support shared by lowered code.

Values: Real is ``float``, Bool is ``bool``, a Fin index is ``int``, Unit is
``None``, a pair is a 2-tuple and an array is a list.  While an accumulator
block runs, its store holds a mutable copy of the value (pairs become
``MPair`` lists) and an accumulator is a ``(container, key)`` path into it.
"""

from __future__ import annotations

import math

from ..errors import HostRoutineFault

INF = math.inf
NAN = math.nan


class MPair(list):
    """Mutable pair inside an accumulation store."""

    __slots__ = ()


def zero_like(v):
    """Zeroed store for an accumulator whose initializer is ``v`` (shape only)."""
    if type(v) is float:
        return 0.0
    if type(v) is tuple:
        return MPair((zero_like(v[0]), zero_like(v[1])))
    if type(v) is list:
        return [zero_like(e) for e in v]
    # Bool, Fin and Unit leaves carry no sum; they keep the initializer's value
    return v


def freeze(s):
    """Decay a store into an ordinary value."""
    if type(s) is MPair:
        return (freeze(s[0]), freeze(s[1]))
    if type(s) is list:
        return [freeze(e) for e in s]
    return s


def acc_add(c, k, v):
    """``(c, k) += v``, pointwise over numeric leaves."""
    cur = c[k]
    if type(cur) is float:
        c[k] = cur + v
    elif isinstance(cur, list):
        for j, e in enumerate(v):
            acc_add(cur, j, e)


def div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return NAN
        neg = (a < 0) != (math.copysign(1.0, b) < 0)
        return -INF if neg else INF


def sgn(x):
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return x  # keeps 0.0, -0.0 and NaN


def sqrt(x):
    return math.sqrt(x) if x >= 0 else NAN


def _rounding(fn):
    def op(x):
        if x != x or x in (INF, -INF):
            return x
        return float(fn(x))

    op.__name__ = fn.__name__
    return op


ceil = _rounding(math.ceil)
floor = _rounding(math.floor)
trunc = _rounding(math.trunc)


def host_wrapper(name, routine):
    """Call a host routine on floats, converting faults and the result."""

    def call(*args):
        try:
            out = routine(*args)
        except Exception as e:  # noqa: BLE001 - any host failure is reported the same way
            raise HostRoutineFault(name, e) from e
        try:
            return float(out)
        except (TypeError, ValueError) as e:
            raise HostRoutineFault(name, e) from e

    call.__name__ = f"host_{name}"
    return call


HELPERS = {
    "MPair": MPair,
    "_zero": zero_like,
    "_freeze": freeze,
    "_acc_add": acc_add,
    "_div": div,
    "_sgn": sgn,
    "_sqrt": sqrt,
    "_ceil": ceil,
    "_floor": floor,
    "_trunc": trunc,
    "_INF": INF,
    "_NAN": NAN,
}
