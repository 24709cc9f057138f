"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Malformed or mismatched inputs: wrong space, window out of range."""


class DomainError(ValueError):
    """A value-level precondition is violated (zero measure, bad parameter)."""


class CertificationError(RuntimeError):
    """A standing hypothesis failed on the sampled system.

    ``axiom`` names the violated condition, e.g. "uniform-expansion",
    "topological-exactness", "holder-potential", "cone-invariance".
    """

    def __init__(self, axiom: str, message: str):
        super().__init__(f"[{axiom}] {message}")
        self.axiom = axiom


class ConvergenceError(RuntimeError):
    """An iterative solve did not meet its tolerance within the window.

    Carries the recorded iteration history so the caller can inspect it
    or retry with a larger window.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history
