"""Laser geometry, section coefficients, and pointwise coefficient functions.

All quantities are dimensionless.  The longitudinal interval [0, L] is split
into sections with spatially constant coefficients; each section carries its
own carrier density n_k.  Coefficients that may depend on the carrier density
(rho, gamma, omega_r) are represented as affine functions anchored at the
transparency density n = 1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError, PoleError

CHI_POLE_TOL = 1e-9


@dataclass(frozen=True)
class Affine:
    """Affine coefficient ``value + slope * (nu - 1)`` of the carrier density."""

    value: float
    slope: float = 0.0

    def __call__(self, nu: float) -> float:
        return self.value + self.slope * (nu - 1.0)

    @classmethod
    def make(cls, spec) -> "Affine":
        """Accept a bare number or an Affine."""
        if isinstance(spec, Affine):
            return spec
        return cls(float(spec))


@dataclass(frozen=True)
class SectionParams:
    """Physical coefficients of one laser section.

    Parameters
    ----------
    length : section length (the first section has length 1 by normalization).
    kappa : real coupling between forward and backward wave.
    d : complex waveguide loss/detuning coefficient.
    alpha_h : Henry (linewidth enhancement) factor.
    gain_model : "linear" or "log"; both vanish at nu = 1.
    gain_slope : derivative of the gain at nu = 1, must be positive.
    rho, gamma, omega_r : dispersion strength, polarization damping, and
        resonance offset; affine in the section carrier density.
    current : pump current, > 0.
    lifetime : carrier lifetime, > 0.
    n_floor : lower end of the admissible carrier range (default 0 for the
        log gain model, -inf for the linear model).
    """

    length: float = 1.0
    kappa: float = 0.0
    d: complex = 0.5 + 0.0j
    alpha_h: float = 0.0
    gain_model: str = "linear"
    gain_slope: float = 1.0
    rho: Affine = Affine(0.0)
    gamma: Affine = Affine(90.0)
    omega_r: Affine = Affine(0.0)
    current: float = 1e-3
    lifetime: float = 100.0
    n_floor: float | None = None

    def __post_init__(self):
        if self.gain_model not in ("linear", "log"):
            raise ConfigError(f"unknown gain model {self.gain_model!r}")
        if self.n_floor is None:
            floor = 0.0 if self.gain_model == "log" else -math.inf
            object.__setattr__(self, "n_floor", floor)
        object.__setattr__(self, "d", complex(self.d))
        object.__setattr__(self, "rho", Affine.make(self.rho))
        object.__setattr__(self, "gamma", Affine.make(self.gamma))
        object.__setattr__(self, "omega_r", Affine.make(self.omega_r))


@dataclass(frozen=True)
class LaserConfig:
    """Multi-section laser: ordered sections plus facet reflectivities.

    The scaling constant of the field normalization is tied to epsilon
    (P = epsilon), so the slow carrier rate keeps order-one coefficients.
    """

    sections: tuple[SectionParams, ...]
    r0: complex = 0.0 + 0.0j
    rL: complex = 0.0 + 0.0j
    epsilon: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        object.__setattr__(self, "r0", complex(self.r0))
        object.__setattr__(self, "rL", complex(self.rL))
        if not self.sections:
            raise ConfigError("no sections defined")
        if abs(self.r0) >= 1.0:
            raise ConfigError(f"|r0| = {abs(self.r0):g} must be < 1")
        if abs(self.rL) >= 1.0:
            raise ConfigError(f"|rL| = {abs(self.rL):g} must be < 1")
        for k, sec in enumerate(self.sections):
            if sec.length <= 0.0:
                raise ConfigError(f"section {k}: length {sec.length:g} must be > 0")
            if sec.gain_slope <= 0.0:
                raise ConfigError(f"section {k}: gain slope {sec.gain_slope:g} must be > 0")
            if sec.current <= 0.0:
                raise ConfigError(f"section {k}: current {sec.current:g} must be > 0")
            if sec.lifetime <= 0.0:
                raise ConfigError(f"section {k}: lifetime {sec.lifetime:g} must be > 0")
        if self.epsilon < 0.0:
            raise ConfigError("epsilon must be >= 0")

    @property
    def m(self) -> int:
        return len(self.sections)

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.sections))

    @property
    def boundaries(self) -> np.ndarray:
        """Section start points z_1 = 0, ..., z_{m+1} = L."""
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.sections])])

    @property
    def scaling(self) -> float:
        """Field scaling constant P (tied to epsilon)."""
        return self.epsilon

    def floors(self) -> np.ndarray:
        return np.array([s.n_floor for s in self.sections])

    def with_epsilon(self, eps: float) -> "LaserConfig":
        """Change epsilon while keeping the slow carrier rate F = f/epsilon fixed.

        Currents scale with epsilon and lifetimes against it, so the
        dimensionless slow dynamics is invariant.
        """
        if eps <= 0.0:
            raise ConfigError("with_epsilon requires eps > 0")
        ratio = eps / self.epsilon
        secs = tuple(replace(s, current=s.current * ratio, lifetime=s.lifetime / ratio)
                     for s in self.sections)
        return replace(self, sections=secs, epsilon=eps)

    def with_reflectivity(self, r0=None, rL=None) -> "LaserConfig":
        kw = {}
        if r0 is not None:
            kw["r0"] = complex(r0)
        if rL is not None:
            kw["rL"] = complex(rL)
        return replace(self, **kw)


def gain(section: SectionParams, nu: float) -> float:
    """Gain G(nu); vanishes at nu = 1 and is strictly increasing."""
    if nu <= section.n_floor:
        raise DomainError(
            f"carrier density {nu:g} is at or below the floor {section.n_floor:g}")
    if section.gain_model == "log":
        return section.gain_slope * math.log(nu)
    return section.gain_slope * (nu - 1.0)


def propagation_coefficient(section: SectionParams, nu: float) -> complex:
    """Net complex field rate (1 + i alpha_h) G(nu) - d - rho(nu)."""
    g = gain(section, nu)
    return (1.0 + 1j * section.alpha_h) * g - section.d - section.rho(nu)


def dispersion_response(section: SectionParams, nu: float, lam: complex,
                        pole_tol: float = CHI_POLE_TOL) -> complex:
    """Lorentzian response rho*gamma / (lam - i omega_r + gamma) of the polarization."""
    if nu <= section.n_floor:
        raise DomainError(
            f"carrier density {nu:g} is at or below the floor {section.n_floor:g}")
    gam = section.gamma(nu)
    den = lam - 1j * section.omega_r(nu) + gam
    if abs(den) < pole_tol:
        raise PoleError(
            f"spectral parameter {lam} within {pole_tol:g} of the pole "
            f"{1j * section.omega_r(nu) - gam}")
    return section.rho(nu) * gam / den


# short aliases used throughout the numerics
beta = propagation_coefficient
chi = dispersion_response


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "warning" (structural violations raise ConfigError instead)
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


def validate(config: LaserConfig, probe_densities=(1.0, 1.5, 2.0)) -> list[Diagnostic]:
    """Check physical plausibility; returns warnings.

    Structural violations (|r0| >= 1, nonpositive lengths, ...) are already
    rejected by the constructors.  Violations of the usual physical
    assumptions only warn, because well-studied devices (strongly pumped
    first sections) are modeled with Re d < 0.
    """
    out = []
    for k, sec in enumerate(config.sections):
        if sec.d.real < 0.0:
            out.append(Diagnostic(
                "warning", f"section {k}: Re d = {sec.d.real:g} < 0 "
                "(waveguide gain instead of loss)"))
        for nu in probe_densities:
            if nu <= sec.n_floor:
                continue
            if sec.gamma(nu) <= 1.0:
                out.append(Diagnostic(
                    "warning",
                    f"section {k}: polarization damping {sec.gamma(nu):g} <= 1 "
                    f"at nu = {nu:g}"))
                break
        for nu in probe_densities:
            if nu >= 1.0 and sec.rho(nu) < 0.0:
                out.append(Diagnostic(
                    "warning",
                    f"section {k}: dispersion strength {sec.rho(nu):g} < 0 "
                    f"at nu = {nu:g}"))
                break
    return out


def check_carriers(config: LaserConfig, n) -> np.ndarray:
    """Validate and return the carrier vector as a float array."""
    n = np.asarray(n, dtype=float)
    if n.shape != (config.m,):
        raise DomainError(f"carrier vector has shape {n.shape}, expected ({config.m},)")
    floors = config.floors()
    if np.any(n <= floors):
        bad = int(np.argmax(n <= floors))
        raise DomainError(
            f"carrier density n_{bad} = {n[bad]:g} at or below floor {floors[bad]:g}")
    return n


def single_section(**kw) -> LaserConfig:
    """Convenience constructor for one-section test configurations."""
    cfg_kw = {k: kw.pop(k) for k in ("r0", "rL", "epsilon") if k in kw}
    return LaserConfig(sections=(SectionParams(**kw),), **cfg_kw)


def fig1_like(eta: float = 0.3, phi: float = 0.0, epsilon: float = 5e-3) -> LaserConfig:
    """Two-section DFB laser with a passive feedback section.

    First section: strong coupling, linear gain, gain dispersion.  Second
    section: passive (no coupling, no net propagation coefficient), carrier
    pinned by current = 1/lifetime.  The feedback facet is eta * e^{i phi}.
    """
    active = SectionParams(
        length=1.0, kappa=3.96, d=-0.275 + 0.0j, alpha_h=5.0,
        gain_model="linear", gain_slope=2.145,
        rho=Affine(0.44), gamma=Affine(90.0), omega_r=Affine(-20.0),
        current=6.757e-3, lifetime=359.0)
    passive = SectionParams(
        length=1.136, kappa=0.0, d=0.0 + 0.0j, alpha_h=0.0,
        gain_model="linear", gain_slope=1.0,
        rho=Affine(0.0), gamma=Affine(90.0), omega_r=Affine(0.0),
        current=1.0 / 359.0, lifetime=359.0)
    return LaserConfig(sections=(active, passive),
                       r0=1e-5, rL=eta * cmath.exp(1j * phi), epsilon=epsilon)
