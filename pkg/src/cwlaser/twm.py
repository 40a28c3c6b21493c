"""Time-domain integration of the traveling-wave laser model.

State: counterpropagating field envelopes (psi1, psi2) and polarization
components (p1, p2) on a uniform z-grid, plus one carrier density per
section.  The stepper is a split characteristics scheme with dt = dz; see
_kernels.step_numpy for the algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import pack_coefficients
from ._kernels.step_numpy import carrier_rate
from .errors import ConfigError, SimulationError
from .grid import Grid, make_grid
from .params import LaserConfig, check_carriers

DEFAULT_SEED_AMPLITUDE = 1e-3


@dataclass(frozen=True)
class InjectionSignal:
    """Piecewise-constant optical injection amplitude at the z = 0 facet.

    ``values`` has one more entry than ``times``: values[j] applies on
    (times[j-1], times[j]] with the convention that the signal is
    right-open, i.e. value(t) = values[#(times <= t)].
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or v.ndim != 1 or len(v) != len(t) + 1:
            raise ConfigError("injection needs len(values) == len(times) + 1")
        if len(t) > 1 and np.any(np.diff(t) <= 0.0):
            raise ConfigError("injection breakpoints must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def value(self, t: float) -> complex:
        return complex(self.values[np.searchsorted(self.times, t, side="right")])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    @classmethod
    def zero(cls) -> "InjectionSignal":
        return cls(np.empty(0), np.zeros(1, dtype=complex))

    @classmethod
    def constant(cls, value) -> "InjectionSignal":
        return cls(np.empty(0), np.array([value], dtype=complex))

    @classmethod
    def pulse(cls, t_on: float, t_off: float, value) -> "InjectionSignal":
        return cls(np.array([t_on, t_off]),
                   np.array([0.0, value, 0.0], dtype=complex))


@dataclass
class FieldState:
    """Full simulator state at one time instant."""

    psi1: np.ndarray
    psi2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    n: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi1 = np.ascontiguousarray(self.psi1, dtype=complex)
        self.psi2 = np.ascontiguousarray(self.psi2, dtype=complex)
        self.p1 = np.ascontiguousarray(self.p1, dtype=complex)
        self.p2 = np.ascontiguousarray(self.p2, dtype=complex)
        self.n = np.ascontiguousarray(self.n, dtype=float)
        shapes = {a.shape for a in (self.psi1, self.psi2, self.p1, self.p2)}
        if len(shapes) != 1:
            raise ConfigError("field component arrays must share one shape")

    def copy(self) -> "FieldState":
        return FieldState(self.psi1.copy(), self.psi2.copy(),
                          self.p1.copy(), self.p2.copy(), self.n.copy(), self.t)


@dataclass
class SimOutput:
    """Sampled observables of one run."""

    t: np.ndarray
    n: np.ndarray          # (n_samples, m)
    power: np.ndarray      # (n_samples, m) section field power
    out0: np.ndarray       # psi2(t, 0), the z=0 facet output
    outL: np.ndarray       # psi1(t, L)
    D: np.ndarray          # boundedness diagnostic
    snapshots: list = field(default_factory=list)   # (t, FieldState) pairs


class SimWorkspace:
    """Mutable arrays plus packed coefficients consumed by the kernels.

    Internally the fields live on the expanded grid layout with duplicated
    interface nodes, so every node evolves with a unique section's
    coefficients (the one-sided polarization limits at an interface differ;
    psi stays continuous by the seam copies in the stepper).
    """

    def __init__(self, state: FieldState, config: LaserConfig, grid: Grid,
                 signal: InjectionSignal):
        self.coeff = pack_coefficients(config, grid)
        self.grid = grid
        if len(state.psi1) != grid.n_nodes:
            raise ConfigError(
                f"state has {len(state.psi1)} nodes, grid has {grid.n_nodes}")
        check_carriers(config, state.n)
        ex = grid.expand_map()
        self._collapse = grid.collapse_map()
        self.psi1 = state.psi1[ex].copy()
        self.psi2 = state.psi2[ex].copy()
        self.p1 = state.p1[ex].copy()
        self.p2 = state.p2[ex].copy()
        self.n = state.n.copy()
        self.t = float(state.t)
        nn = grid.n_expanded
        self.s_psi1 = np.empty(nn, dtype=complex)
        self.s_psi2 = np.empty(nn, dtype=complex)
        self.s_p1 = np.empty(nn, dtype=complex)
        self.s_p2 = np.empty(nn, dtype=complex)
        self.inj_times = signal.times
        self.inj_values = signal.values
        self._signal = signal

    def injection_value(self, t: float) -> complex:
        return self._signal.value(t)

    def state(self) -> FieldState:
        c = self._collapse
        return FieldState(self.psi1[c].copy(), self.psi2[c].copy(),
                          self.p1[c].copy(), self.p2[c].copy(),
                          self.n.copy(), self.t)


def initial_state(config: LaserConfig, grid: Grid,
                  amplitude: complex = DEFAULT_SEED_AMPLITUDE,
                  n=None, t: float = 0.0,
                  signal: InjectionSignal | None = None) -> FieldState:
    """Default initial data: small constant field, equilibrated polarization.

    The polarization starts on the instantaneous equilibrium of its linear
    ODE, p = Gamma psi / (Gamma - i Omega_r), which avoids an initial
    relaxation transient of rate Gamma.
    """
    if n is None:
        n = np.ones(config.m)
    n = check_carriers(config, n)
    node_sec = grid.node_section()
    gam = np.array([s.gamma(n[k]) for k, s in enumerate(config.sections)])
    om = np.array([s.omega_r(n[k]) for k, s in enumerate(config.sections)])
    factor = (gam / (gam - 1j * om))[node_sec]
    psi1 = np.full(grid.n_nodes, amplitude, dtype=complex)
    psi2 = np.full(grid.n_nodes, amplitude, dtype=complex)
    state = FieldState(psi1, psi2, factor * psi1, factor * psi2, n, t)
    # start on the boundary identity so the invariant holds from step zero
    alpha = signal.value(t) if signal is not None else 0.0
    state.psi1[0] = config.r0 * state.psi2[0] + alpha
    state.psi2[-1] = config.rL * state.psi1[-1]
    return state


def step(state: FieldState, config: LaserConfig, signal: InjectionSignal,
         grid: Grid, backend: str | None = None) -> FieldState:
    """Advance one step of size dt = dz; returns a new state."""
    ws = SimWorkspace(state, config, grid, signal)
    _kernels.advance(ws, 1, backend=backend)
    return ws.state()


def section_power(coeff, psi1, psi2) -> np.ndarray:
    """Trapezoid integral of |psi|^2 over each section (expanded layout)."""
    w = np.abs(psi1) ** 2 + np.abs(psi2) ** 2
    m = len(coeff.current)
    out = np.empty(m)
    for k in range(m):
        wk = w[int(coeff.sec_start[k]):int(coeff.sec_end[k]) + 1]
        out[k] = coeff.dz * (wk.sum() - 0.5 * (wk[0] + wk[-1]))
    return out


def lyapunov_D(config: LaserConfig, state: FieldState, n_star: float,
               grid: Grid | None = None) -> float:
    """Boundedness diagnostic (P/2)||psi||^2 + sum_k l_k (n_k - n_star)."""
    if grid is None:
        grid = make_grid(config)
    coeff = pack_coefficients(config, grid)
    ex = grid.expand_map()
    power = section_power(coeff, state.psi1[ex], state.psi2[ex]).sum()
    lengths = np.array([s.length for s in config.sections])
    return float(0.5 * config.scaling * power
                 + np.dot(lengths, state.n - n_star))


def carrier_rhs(config: LaserConfig, n, psi1, psi2, p1, p2,
                grid: Grid | None = None) -> np.ndarray:
    """Carrier rates f_k = I_k - n_k/tau_k - (P/l_k) * section integral."""
    if grid is None:
        grid = make_grid(config)
    n = check_carriers(config, n)
    coeff = pack_coefficients(config, grid)
    if len(psi1) != grid.n_nodes:
        raise ConfigError(
            f"profile has {len(psi1)} nodes, grid has {grid.n_nodes}")
    ex = grid.expand_map()
    return carrier_rate(coeff, n, np.asarray(psi1, dtype=complex)[ex],
                        np.asarray(psi2, dtype=complex)[ex],
                        np.asarray(p1, dtype=complex)[ex],
                        np.asarray(p2, dtype=complex)[ex])


def run(config: LaserConfig, initial: FieldState, signal: InjectionSignal,
        horizon: float, grid: Grid, stride: int = 1,
        snapshot_times=(), n_star: float = 1.0,
        backend: str | None = None) -> SimOutput:
    """Integrate over ``horizon`` time units, sampling every ``stride`` steps.

    Snapshot times are rounded to the nearest step.  Deterministic for fixed
    inputs; raises SimulationError with the failing time on abort.
    """
    if horizon < 0.0:
        raise ConfigError("horizon must be >= 0")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    dt = grid.dz
    nsteps = int(round(horizon / dt))
    ws = SimWorkspace(initial, config, grid, signal)

    snap_steps = sorted({int(round((ts - ws.t) / dt)) for ts in snapshot_times})
    for s in snap_steps:
        if s < 0 or s > nsteps:
            raise ConfigError(f"snapshot time outside the horizon: step {s}")

    lengths = np.array([s.length for s in config.sections])
    ts, ns, pows, o0, oL, dd = [], [], [], [], [], []
    snapshots = []

    def record():
        ts.append(ws.t)
        ns.append(ws.n.copy())
        pows.append(section_power(ws.coeff, ws.psi1, ws.psi2))
        o0.append(complex(ws.psi2[0]))
        oL.append(complex(ws.psi1[-1]))
        dd.append(0.5 * config.scaling * pows[-1].sum()
                  + float(np.dot(lengths, ws.n - n_star)))

    record()
    if 0 in snap_steps:
        snapshots.append((ws.t, ws.state()))
    done = 0
    while done < nsteps:
        next_snap = min((s for s in snap_steps if s > done), default=nsteps)
        chunk = min(stride - (done % stride) if done % stride else stride,
                    next_snap - done, nsteps - done)
        _kernels.advance(ws, chunk, backend=backend)
        done += chunk
        if done % stride == 0 or done == nsteps:
            record()
        if done in snap_steps:
            snapshots.append((ws.t, ws.state()))

    return SimOutput(t=np.array(ts), n=np.array(ns), power=np.array(pows),
                     out0=np.array(o0), outL=np.array(oL), D=np.array(dd),
                     snapshots=snapshots)
