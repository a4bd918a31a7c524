"""Exception hierarchy shared across the toolkit."""


class TacsimError(RuntimeError):
    """Base class for all toolkit errors."""


class ConfigurationError(TacsimError):
    """Invalid user input: bad shape kind, bad config key/value, missing preset."""


class SimulationFault(TacsimError):
    """Numerical fault in the solver: NaN state, inverted deformation
    gradient, or a particle escaping the grid domain.

    Carries the index of the first offending particle when known.
    """

    def __init__(self, message: str, particle: int | None = None):
        if particle is not None and particle >= 0:
            message = f"{message} (particle {particle})"
        super().__init__(message)
        self.particle = particle


class ExtractionError(TacsimError):
    """Surface extraction cannot proceed (e.g. fewer than 3 surface particles)."""


class AlignmentError(TacsimError):
    """Image alignment failed (overlap region too small)."""


class RenderError(TacsimError):
    """Scene construction or rendering input error."""
