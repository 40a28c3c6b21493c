"""Traveling-wave modeling of multisection semiconductor lasers.

Subpackages cover the time-domain solver (twm), the characteristic
function and optical spectra (spectral), finite-dimensional mode
reduction (modes), independent cross-check numerics (oracle), and
configuration / CLI plumbing (configio, cli).
"""

from ._kernels import BACKEND
from .errors import (CwlaserError, ConfigError, DomainError, GapLossError,
                     NotARootError, PoleError, RootCountMismatch,
                     SimulationError, TrackingJumpError, ValidityBoxExit)
from .grid import Grid, make_grid
from .params import (Affine, LaserConfig, SectionParams, fig1_like, gain,
                     propagation_coefficient, dispersion_response,
                     single_section, validate)
from .twm import (FieldState, InjectionSignal, SimOutput, carrier_rhs,
                  initial_state, lyapunov_D, run, step)

__version__ = "0.1.0"
