"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates an operation's precondition."""


class OracleMissError(RuntimeError):
    """No oracle candidate matched; the attack run must abort.

    Signals a broken silence invariant, a hash collision, or a
    deliberately broken configuration. Never retried.
    """


class StateCorruptionError(RuntimeError):
    """Attack state machine asked to descend from a resolved leaf."""


class NoProbeError(RuntimeError):
    """No ciphertext constant splits a candidate secret set."""

    def __init__(self, stuck_set, message=None):
        self.stuck_set = tuple(stuck_set)
        super().__init__(message or f"no probe splits secret set {self.stuck_set}")


class IncompleteRecoveryError(RuntimeError):
    """Coefficients left unresolved after the index phase."""


class PlacementError(RuntimeError):
    """No vulnerable memory cell matches the victim flag offset."""


class FaultStateError(RuntimeError):
    """Fault pipeline operation out of order (e.g. flip before arming)."""
