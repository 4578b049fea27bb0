"""Exception types raised across the package."""


class EtopError(Exception):
    """Base class for all library errors."""


class PoleProximity(EtopError, ValueError):
    """An argument sits within the pole guard of a lattice point.

    ``argument`` names the offending input (``"z"``, ``"u"``, ``"z+u"``,
    or a mode label) so callers can report it.
    """

    def __init__(self, message, argument=None):
        super().__init__(message)
        self.argument = argument


class ZeroArgument(EtopError, ValueError):
    """The zero mode was requested with a vanishing shift."""


class ZeroMode(EtopError, ValueError):
    """An operation defined only for nonzero modes got the zero mode."""


class ConstraintViolation(EtopError, ValueError):
    """A state flagged as constrained does not satisfy its constraint."""


class UnknownIdentity(EtopError, KeyError):
    """Identity id not present in the verification catalogue."""


class StepRejected(EtopError, RuntimeError):
    """An integrator stage produced an unusable state."""


class SchemaError(EtopError, ValueError):
    """A state or configuration document does not match its schema."""
