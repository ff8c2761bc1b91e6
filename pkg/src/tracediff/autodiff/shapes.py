"""Mask-directed pruning of types and the IR that reshapes pruned values.

A value of type ``ty`` with mask ``m`` is represented, under a keep-set, by
the value of ``prune(ty, m, keep)``: leaves outside the keep-set are gone,
pairs with one side gone collapse to the other side, and fully pruned values
are ``None`` (no variable at all).
"""

from __future__ import annotations

from ..ir.syntax import FalseLit, FinLit, For, Fst, Index, Let, PairLit, RefFst, RefSnd, Snd
from ..ir.types import Acc, Arr, BoolTy, Fin, Pair, RealTy, TypeVar, Unit, UnitTy
from .roles import B, D, P, T, U

KEEP_ALL = frozenset((B, P, T, D, U))
KEEP_PRIMAL = frozenset((P, D, U))
KEEP_ADJOINT = frozenset((T,))


def prune(ty, m, keep):
    match ty:
        case Pair(a, b):
            pa, pb = prune(a, m[1], keep), prune(b, m[2], keep)
            if pa is None:
                return pb
            if pb is None:
                return pa
            return Pair(pa, pb)
        case Arr(i, e):
            pe = prune(e, m[1], keep)
            return None if pe is None else Arr(i, pe)
        case Acc(inner):
            pi = prune(inner, m[1], keep)
            return None if pi is None else Acc(pi)
    return ty if m in keep else None


def same_keep(ty, mf, mt, kf, kt):
    """True when both views keep exactly the same leaves of ``ty``."""
    match ty:
        case Pair(a, b):
            return same_keep(a, mf[1], mt[1], kf, kt) and same_keep(b, mf[2], mt[2], kf, kt)
        case Arr(_, e) | Acc(e):
            return same_keep(e, mf[1], mt[1], kf, kt)
    return (mf in kf) == (mt in kt)


def zeros(em, ty):
    """Emit the additive zero of ``ty``."""
    match ty:
        case RealTy():
            return em.const(0.0)
        case UnitTy():
            return em.unit()
        case BoolTy():
            return em.let(ty, FalseLit())
        case Fin(n):
            if n == 0:
                raise TypeError("Fin(0) has no values")
            return em.let(ty, FinLit(0))
        case Pair(a, b):
            return em.pair(zeros(em, a), zeros(em, b))
        case Arr(i, e):
            j = em.fresh(i)
            em.push()
            z = zeros(em, e)
            return em.let(ty, For(j, i, em.pop(z)))
        case TypeVar():
            raise TypeError(f"no zero value for generic index type {ty}")
    raise TypeError(f"no zero value for {ty}")


def mkpair(em, a, b):
    if a is None:
        return b
    if b is None:
        return a
    return em.pair(a, b)


def proj_plan(em, var, ty, m, keep, side, ref=False):
    """Plan the projection of one side of a pruned pair.

    Returns ``(out, let)`` where ``let`` is the pending let binding ``out``
    (or None when ``out`` is ``var`` itself or absent).
    """
    if var is None:
        return None, None
    pa, pb = prune(ty.first, m[1], keep), prune(ty.second, m[2], keep)
    mine, other = (pa, pb) if side == 0 else (pb, pa)
    if mine is None:
        return None, None
    if other is None:
        return var, None
    if ref:
        out_ty = Acc(mine)
        expr = RefFst(var) if side == 0 else RefSnd(var)
    else:
        out_ty = mine
        expr = Fst(var) if side == 0 else Snd(var)
    out = em.fresh(out_ty)
    return out, Let(out, out_ty, expr)


def proj(em, var, ty, m, keep, side, ref=False):
    out, let = proj_plan(em, var, ty, m, keep, side, ref)
    if let is not None:
        em.stack[-1].append(let)
    return out


def coerce(em, var, ty, mf, mt, kf, kt):
    """Reshape ``var`` (``ty`` under ``mf``/``kf``) into ``ty`` under ``mt``/``kt``.

    Leaves only present in the target view are filled with zeros; leaves only
    present in the source are dropped.
    """
    if prune(ty, mt, kt) is None:
        return None
    if same_keep(ty, mf, mt, kf, kt):
        return var
    match ty:
        case Pair(a, b):
            va = proj(em, var, ty, mf, kf, 0)
            vb = proj(em, var, ty, mf, kf, 1)
            return mkpair(
                em,
                coerce(em, va, a, mf[1], mt[1], kf, kt),
                coerce(em, vb, b, mf[2], mt[2], kf, kt),
            )
        case Arr(i, e):
            j = em.fresh(i)
            em.push()
            el = None if var is None else em.let(prune(e, mf[1], kf), Index(var, j))
            out = coerce(em, el, e, mf[1], mt[1], kf, kt)
            return em.let(Arr(i, em.types[out]), For(j, i, em.pop(out)))
    if var is not None and mf in kf:
        return var
    return zeros(em, ty)


def build_tape(em, entries):
    """Right-nested, unit-terminated tuple of the taped values."""
    t = em.unit()
    for var, ty in reversed(entries):
        t = em.let(Pair(ty, em.types[t]), PairLit(var, t))
    return t


def tape_type(types):
    out = Unit
    for ty in reversed(types):
        out = Pair(ty, out)
    return out

