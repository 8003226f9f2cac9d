"""Exception types raised by the lab."""

import numpy as np


class CentroflowError(Exception):
    pass


class ConvexityViolation(CentroflowError):
    """Raised when a support field fails s > 0 or r = s'' + s > floor."""

    def __init__(self, nodes, message=None):
        self.nodes = np.asarray(nodes, dtype=int)
        if message is None:
            shown = ", ".join(str(i) for i in self.nodes[:8])
            more = "..." if self.nodes.size > 8 else ""
            message = f"convexity violated at {self.nodes.size} node(s): {shown}{more}"
        super().__init__(message)


class NumericError(CentroflowError):
    """An iterative routine failed to converge; `best` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class GenerationError(CentroflowError):
    """Random body generation gave up after too many rejected draws."""
