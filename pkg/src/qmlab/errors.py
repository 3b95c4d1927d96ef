"""Exception hierarchy shared across the package.

Two broad families: :class:`ValidationError` for inputs that violate a
declared contract (rejected, never repaired) and :class:`NumericalError`
for failures arising during a computation (refinement caps, Newton
divergence, violated invariants that signal a bug upstream).
"""


class QmlabError(Exception):
    """Base class for all package errors."""


class ValidationError(QmlabError, ValueError):
    """Input violates a declared precondition or schema."""


class NumericalError(QmlabError, RuntimeError):
    """A computation failed or produced an inconsistent result."""


class RefinePathError(NumericalError):
    """A sampled circle path aliases (a step of >= 0.5 turns).

    Carries the offending step index so the caller can subdivide.
    """

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"step {index} moves by >= 0.5 turns; refine the path")


class RefinementDepthError(NumericalError):
    """Automatic dyadic refinement exceeded its depth cap."""


class IntegrationError(NumericalError):
    """Flow integration failed (e.g. Newton divergence in an implicit step)."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"integrator failed at step {step}")


class InvariantError(NumericalError):
    """A structural invariant that should hold by construction was violated."""


class DegenerateSaddleError(ValidationError):
    """A vertex is not PL-Morse after tie-breaking (e.g. a monkey saddle)."""

    def __init__(self, vertex: int, message: str | None = None):
        self.vertex = vertex
        super().__init__(message or f"vertex {vertex} is a degenerate (non-simple) critical point")
