"""Error taxonomy shared across the kernel.

Every error that can be traced to source text carries a ``span`` (byte
offsets into the document) so tooling can surface it in place.
"""


class HvxError(Exception):
    """Base class for all kernel errors."""

    def __init__(self, message, span=None):
        super().__init__(message)
        self.message = message
        self.span = span

    def with_span(self, span):
        """Attach a span if none is set yet; returns self."""
        if self.span is None and span is not None:
            self.span = span
        return self


class ReadError(HvxError):
    """Malformed source text; ``span`` points at the offending byte."""

    def __init__(self, message, offset):
        super().__init__(message, span=(offset, offset))
        self.offset = offset


class SpliceError(HvxError):
    """A textual edit that cannot be applied (bad span or bad replacement)."""


class ExpandError(HvxError):
    """Compile-phase failure: bad macro use, bad definition, bad pattern."""


class EvalError(HvxError):
    """Runtime failure: unbound symbol, arity or type error, and so on."""


class LangUserError(EvalError):
    """Raised by user code via the ``error`` / ``throw`` builtins."""


class FuelExhausted(HvxError):
    """The step budget ran out.

    Deliberately not an EvalError: callers treat it as a pause request
    rather than a program crash.
    """


class RunStopped(FuelExhausted):
    """Evaluation was interrupted by an explicit stop request."""
