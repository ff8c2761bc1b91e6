"""Compiled entry points: instance tables, invocation and op counts."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..builder import handle_for
from ..errors import UnboundIndexGeneric
from ..ir.check import ensure_valid
from ..ir.syntax import OpaqueDef
from ..ir.types import Fin, show_type, substitute
from .lower import Lowering, check_bindable
from .marshal import bind_sizes, from_runtime, to_runtime


@dataclass
class OpCount:
    static: dict
    dynamic: dict = field(default_factory=dict)

    @property
    def total_static(self):
        return sum(self.static.values())

    @property
    def total_dynamic(self):
        return sum(self.dynamic.values())


def _label(key):
    name, targs = key
    if not targs:
        return name
    return f"{name}<{', '.join(show_type(t) for t in targs)}>"


class Callable:
    """A compiled entry point; one lowered body per reachable (def, sizes) pair."""

    def __init__(self, handle, reg, count=False):
        self.reg = reg
        self.entry = handle.name
        self.param_specs = tuple(handle.params)
        self.ret_spec = handle.ret
        self.d = reg[handle.name]
        self.count = count
        self._low = Lowering(reg, count)
        self._last = None
        check_bindable(self.d)
        if not self.d.generics:
            self._low.build(self.entry, ())

    @property
    def instances(self):
        return dict(self._low.instances)

    def instance_labels(self):
        return [_label(k) for k in self._low.instances]

    def bind(self, args):
        sizes = {}
        for a, spec, (_, ty) in zip(args, self.param_specs, self.d.params):
            bind_sizes(a, spec, ty, sizes)
        targs = []
        for name, _ in self.d.generics:
            if name not in sizes:
                raise UnboundIndexGeneric(f"cannot infer size {name} from the arguments")
            targs.append(Fin(sizes[name]))
        return tuple(targs)

    def __call__(self, *args):
        return invoke(self, *args)


def compile(f, reg=None, *, count=False):  # noqa: A001 - the API name
    """Validate the registry and lower ``f`` with all its callees."""
    if isinstance(f, str):
        f = handle_for(reg, f)
    reg = reg if reg is not None else f.registry
    if isinstance(reg[f.name], OpaqueDef):
        raise TypeError("compile an IR definition, not an opaque declaration")
    ensure_valid(reg)
    return Callable(f, reg, count)


def invoke(c, *args):
    if len(args) != len(c.d.params):
        raise TypeError(f"{c.entry} takes {len(c.d.params)} arguments, got {len(args)}")
    targs = c.bind(args) if c.d.generics else ()
    mapping = {n: t for (n, _), t in zip(c.d.generics, targs)}
    inst = c._low.instances.get((c.entry, targs))
    if inst is None or inst.fn is None:
        inst = c._low.build(c.entry, targs)
    rt = [
        to_runtime(a, spec, substitute(ty, mapping), f"argument {k}")
        for k, (a, spec, (_, ty)) in enumerate(zip(args, c.param_specs, c.d.params))
    ]
    counters = [0] * len(c._low.instances)
    out = inst.fn(counters, *rt)
    c._last = counters
    return from_runtime(out, c.ret_spec, substitute(c.d.ret, mapping))


def op_count(c):
    """Static lets per lowered body and primitive evaluations of the last invoke."""
    static = {_label(k): inst.static_lets for k, inst in c._low.instances.items()}
    dynamic = {}
    if c._last is not None:
        for k, inst in c._low.instances.items():
            if inst.index < len(c._last):
                dynamic[_label(k)] = c._last[inst.index]
    return OpCount(static, dynamic)
