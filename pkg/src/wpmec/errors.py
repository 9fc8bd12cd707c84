"""Exception types raised by the solvers."""


class InvalidInputError(ValueError):
    """A parameter is outside its admissible range."""


class FeasibilityError(ValueError):
    """An allocation violates the time or sign constraints."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class BracketError(ValueError):
    """A root bracket does not straddle a sign change."""


class UnboundedError(ValueError):
    """Bracket expansion hit its cap without a sign change."""


class NonConvergenceError(RuntimeError):
    """An iterative method exhausted its iteration budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SubproblemError(RuntimeError):
    """A per-device ADMM subproblem failed to converge."""

    def __init__(self, message, device=None, branch=None):
        super().__init__(message)
        self.device = device
        self.branch = branch


class CapacityError(ValueError):
    """The instance is too large for mode enumeration."""

    def __init__(self, message, cap=None):
        super().__init__(message)
        self.cap = cap


class ScenarioError(RuntimeError):
    """A solver failed inside a sweep; the message names the sweep point."""
