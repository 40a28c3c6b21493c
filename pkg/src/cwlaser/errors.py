"""Exception hierarchy shared by all subsystems."""


class CwlaserError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CwlaserError):
    """Structural problem in a laser configuration or scenario file."""


class DomainError(CwlaserError):
    """Carrier density outside the admissible range of a coefficient."""


class PoleError(CwlaserError):
    """Spectral parameter too close to a pole of the dispersion response."""


class SimulationError(CwlaserError):
    """Time-domain integration failed (carrier floor breach, NaN, ...)."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (at t={t:g})")
        self.t = t


class ConvergenceError(CwlaserError):
    """An iterative solver (Newton, winding refinement) failed to converge."""


class RootCountMismatch(CwlaserError):
    """Newton harvest and argument-principle count disagree."""

    def __init__(self, newton_count, winding_count, window):
        super().__init__(
            f"found {newton_count} roots by Newton but boundary winding "
            f"gives {winding_count} in window {window}")
        self.newton_count = newton_count
        self.winding_count = winding_count


class NotARootError(CwlaserError):
    """Requested eigenmode at a value that is not a characteristic root."""


class GapLossError(CwlaserError):
    """Spectral gap required for the mode basis is absent."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class TrackingJumpError(CwlaserError):
    """Eigenvalue continuation jumped further than the trust radius."""


class ValidityBoxExit(CwlaserError):
    """Reduced-model trajectory left the carrier box the basis was built for."""

    def __init__(self, t, n):
        super().__init__(f"carrier density {n} left the basis validity box at t={t:g}")
        self.t = t
        self.n = n
