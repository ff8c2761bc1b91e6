"""Exception hierarchy shared by every stage of the pipeline."""


class IRError(Exception):
    """Base class for all errors raised by tracediff."""


class KindError(IRError):
    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class IRTypeError(IRError, TypeError):
    """A let binding (or result) violates a typing rule.

    ``rule`` names the violated rule, ``index`` is the position of the
    offending let in a pre-order walk of the function body (``None`` for
    the result or the signature).
    """

    def __init__(self, rule, detail="", index=None, func=None):
        self.rule = rule
        self.index = index
        self.func = func
        where = []
        if func is not None:
            where.append(f"in {func}")
        if index is not None:
            where.append(f"at let #{index}")
        msg = rule
        if where:
            msg += f" ({', '.join(where)})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ParseError(IRError):
    def __init__(self, msg, line, col):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {msg}")


class RegistryError(IRError):
    pass


class RecursionCycle(RegistryError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("recursive call cycle: " + " -> ".join(self.names))


class UnresolvedCallee(RegistryError):
    pass


class BadCustomJvpSignature(RegistryError):
    pass


class ValidationErrors(RegistryError):
    """Aggregate of every problem found by ``validate_registry``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


# builder


class EscapeError(IRError):
    pass


class AccumulatorEscape(IRError):
    pass


class NonScalarOpaque(IRError):
    pass


class ArityMismatch(IRError):
    pass


class InferenceFailure(IRError):
    pass


class TraceError(IRError):
    """Misuse of the tracing API (no active trace, wrong handle kind...)."""


# autodiff


class MissingDerivative(IRError):
    pass


class MultiParamVjp(IRError):
    pass


class NonlinearTangentUse(IRError):
    pass


# execution


class UnboundIndexGeneric(IRError):
    pass


class MissingHostRoutine(IRError):
    pass


class MarshalError(IRError):
    pass


class HostRoutineFault(IRError):
    def __init__(self, name, exc):
        self.name = name
        self.exc = exc
        super().__init__(f"host routine for {name} raised {exc!r}")


class NonConvergence(IRError):
    pass
