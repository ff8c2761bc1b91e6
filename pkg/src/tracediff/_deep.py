"""Run deeply recursive IR walks on a thread with a large stack.

Strict backward passes nest one accumulator block per let, so a few
thousand lets already exceed CPython's default recursion budget.
"""

from __future__ import annotations

import functools
import sys
import threading

STACK_BYTES = 512 * 1024 * 1024
RECURSION_LIMIT = 1_000_000

_state = threading.local()


def run_deep(fn, *args, **kwargs):
    if getattr(_state, "inside", False):
        return fn(*args, **kwargs)
    out = {}

    def target():
        _state.inside = True
        try:
            out["value"] = fn(*args, **kwargs)
        except BaseException as e:  # re-raised on the calling thread
            out["error"] = e

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, RECURSION_LIMIT))
    old_size = threading.stack_size()
    threading.stack_size(STACK_BYTES)
    try:
        t = threading.Thread(target=target, name="tracediff-deep")
        t.start()
    finally:
        threading.stack_size(old_size)
    t.join()
    if "error" in out:
        raise out["error"]
    return out["value"]


def deep(fn):
    """Decorator form of ``run_deep``."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return run_deep(fn, *args, **kwargs)

    return wrapper
