"""Exception hierarchy shared by all modules."""

import numpy as np


class HomvarError(Exception):
    """Base class for library errors."""


class DimensionError(HomvarError, ValueError):
    pass


class EigenSolverError(HomvarError, np.linalg.LinAlgError):
    """Raised when the dense eigensolver fails to converge.

    Attributes
    ----------
    norm : float
        Column-sum norm of the offending operator.
    iterations : int
        Iteration cap of the underlying QR sweep that was exhausted.
    """

    def __init__(self, norm, iterations, detail=""):
        self.norm = float(norm)
        self.iterations = int(iterations)
        msg = f"eigensolver did not converge (norm={self.norm:.6g}, iterations={self.iterations})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NeutralDegeneracyError(HomvarError):
    """S-orthonormalization hit a (near) neutral vector and the fallback did not help."""

    def __init__(self, pivot, detail=""):
        self.pivot = float(pivot)
        msg = f"neutral degeneracy (|<v|v>| = {self.pivot:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ValidationError(HomvarError, ValueError):
    """A measure or configuration violates a stated invariant.

    ``invariant`` names the violated property so the CLI can report it.
    """

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


class TraceProjectionError(HomvarError):
    """Rescaling onto the trace surface is undefined (trace ~ 0 or wrong sign)."""

    def __init__(self, trace, target):
        self.trace = trace
        self.target = target
        super().__init__(f"cannot project trace {trace:.6g} onto {target:.6g}")


class UnboundedSequenceError(HomvarError):
    def __init__(self, index, value, bound):
        self.index = index
        self.value = value
        self.bound = bound
        super().__init__(
            f"total variation {value:.6g} of element {index} exceeds the uniform bound {bound:.6g}"
        )


class NotConvergedError(HomvarError):
    pass
