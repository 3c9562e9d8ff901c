"""Exception hierarchy shared by all solver modules."""


class SolverError(Exception):
    """Base class for every error raised by adsolver."""


class ValidationError(SolverError, ValueError):
    """The instance is structurally invalid (non-square, negative, ...)."""


class IrreducibilityError(ValidationError):
    """An operation needing a strongly connected liking graph got a reducible market."""


class NoEquilibriumError(SolverError):
    """A singleton strongly connected component does not like its own good."""

    def __init__(self, agent):
        self.agent = agent
        super().__init__(
            f"no equilibrium: agent {agent + 1} forms a singleton component "
            f"and does not value its own good"
        )


class PrecisionError(SolverError, ArithmeticError):
    """Fixed-point evaluation could not certify the requested error bound."""


class FlowError(SolverError):
    """A flow violates capacity, conservation or equality-edge constraints."""


class SingularMatrixError(SolverError, ArithmeticError):
    pass


class ExtractionError(SolverError):
    """Turning a near-equilibrium into exact prices failed.

    Per the correctness argument this only happens on upstream bugs or when
    the loop stopped with too large a surplus (reduced-constant profiles).
    """


class IterationCapExceeded(SolverError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class VerificationFailed(SolverError):
    def __init__(self, message, report=None, trace=None):
        super().__init__(message)
        self.report = report
        self.trace = trace if trace is not None else []


class BitlengthExceeded(IterationCapExceeded):
    """Exact-mode prices outgrew the configured bitlength limit."""
