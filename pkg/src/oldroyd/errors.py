"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operator received a field in the wrong representation, kind or shape,
    or one that violates a stated precondition (e.g. nonzero mean)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration.  ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class CFLError(RuntimeError):
    """The configured time step exceeds the advective stability limit."""

    def __init__(self, dt, dt_admissible, t):
        self.dt = dt
        self.dt_admissible = dt_admissible
        self.t = t
        super().__init__(f"dt={dt:.6g} exceeds admissible dt={dt_admissible:.6g} at t={t:.6g}")


class BlowUpError(RuntimeError):
    """A non-finite value appeared during time stepping.

    ``t_last`` is the last time with a finite state and ``trajectory`` holds
    everything recorded up to it.
    """

    def __init__(self, t_last, trajectory=None):
        self.t_last = t_last
        self.trajectory = trajectory
        super().__init__(f"non-finite state after t={t_last:.6g}")
