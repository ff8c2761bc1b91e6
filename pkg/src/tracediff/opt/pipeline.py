"""Clean-up applied to freshly transposed forward/backward pairs."""

from __future__ import annotations

from dataclasses import replace

from .._deep import deep
from ..ir.check import callees
from ..ir.syntax import OpaqueDef
from ..ir.types import Unit
from .simplify import DEFAULT, simplify
from .tapes import compact, retype


def optimize_def(name, reg, config=DEFAULT):
    """Simplify one registered definition in place."""
    return reg.replace(simplify(reg[name], reg, config))


def _pending(reg):
    pairs = [v for k, v in reg.memo.items() if k[0] == "transpose" and k[2] is True]
    pairs = [p for p in pairs if ("final", p[0]) not in reg.memo]
    order = {n: i for i, n in enumerate(reg.names())}
    return sorted(pairs, key=lambda p: order[p[0]])


def _plain(reg, name, seen=None):
    """True when ``name`` reaches no opaque call and no custom derivative."""
    seen = set() if seen is None else seen
    if name in seen:
        return True
    seen.add(name)
    item = reg[name]
    if isinstance(item, OpaqueDef) or name in reg.custom_jvp:
        return False
    return all(_plain(reg, g, seen) for g in callees(item))


def _source(reg, fname):
    """The primal def a forward pass was derived from, if it was lifted rather than given."""
    jname = next((k[1] for k, v in reg.memo.items()
                  if k[0] == "transpose" and k[2] is True and v[0] == fname), None)
    return next((k[1] for k, v in reg.memo.items() if k[0] == "jvp" and v == jname), None)


def note_primal(reg, fname):
    """Let callers of an empty-tape forward pass call the primal instead.

    Only for lifted functions: their forward pass computes the primal value
    with exactly the primal's operations, so the two agree bit for bit.
    """
    if reg[fname].ret.second != Unit:
        return
    src = _source(reg, fname)
    if src is not None and _plain(reg, src):
        reg.memo[("primal", fname)] = src


@deep
def finalize_transposed(reg, config=DEFAULT):
    """Simplify and compact every erased pair not yet finalized, callees first.

    Callers of a compacted forward pass are only ever other pairs of the same
    batch (user code calls a pair after it is finalized), so retyping them
    in registry order is enough.
    """
    for fname, bname in _pending(reg):
        fwd = retype(reg[fname], reg)
        reg.replace(fwd)
        t, _ = reg[bname].params[-1]
        bwd = reg[bname]
        bwd = replace(bwd, params=bwd.params[:-1] + ((t, fwd.ret.second),))
        reg.replace(retype(bwd, reg))
        fwd = simplify(reg[fname], reg, config)
        bwd = simplify(reg[bname], reg, config)
        out = compact(fwd, bwd, reg)
        if out is not None:
            fwd, bwd = out
            reg.replace(simplify(fwd, reg, config))
            reg.replace(simplify(bwd, reg, config))
        else:
            reg.replace(fwd)
            reg.replace(bwd)
        reg.memo[("final", fname)] = True
        note_primal(reg, fname)
