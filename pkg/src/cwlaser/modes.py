"""Finite-dimensional reduction onto the dominant optical modes.

Near a critical carrier density the field splits into q slowly evolving
dominant modes and an exponentially damped remainder.  This module builds
the mode basis B(n) (eigenfunctions plus biorthogonal adjoint rows acting
as the spectral projection), assembles the reduced flow

    dE_c/dt = [H_c(n) + eps a1(E_c, n)] E_c,
    dn/dt   = eps F(n, B(n) E_c),

with the second-order remainder truncated to zero, and integrates it.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator

from .errors import (ConvergenceError, DomainError, GapLossError,
                     TrackingJumpError, ValidityBoxExit)
from .grid import Grid, make_grid
from .params import LaserConfig, check_carriers, gain
from .spectral import (EigenMode, Spectrum, _scaled_entries, eigenmode,
                       find_eigenvalues, newton_root, section_mu)

GAUGE_STEP = 1e-4
BIORTHO_TOL = 1e-8


def _trapz_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.dz)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _stack(mode: EigenMode) -> np.ndarray:
    return np.stack([mode.psi1, mode.psi2, mode.p1, mode.p2])


def adjoint_profile(config: LaserConfig, n, lam: complex,
                    grid: Grid) -> np.ndarray:
    """Adjoint eigenfunction, conjugated, as a (4, N+1) stack.

    The conjugated adjoint field w solves w' = [[mu, i kappa],
    [-i kappa, -mu]] w with w(0) ~ (1, r0) and w(L) ~ (rL, 1); its
    polarization row is slaved by v = rho w / (lam - i Omega_r + Gamma).
    Stored without conjugation so that row . u (plain dot, trapezoid
    weights) realizes the adjoint pairing <phi, u>.
    """
    n = check_carriers(config, n)
    nn = grid.n_nodes
    v = np.empty((nn, 2), dtype=complex)
    logs = np.empty(nn)
    cur = np.array([1.0, complex(config.r0)])
    v[0] = cur
    logs[0] = 0.0
    acc = 0.0
    node = 0
    for k, sec in enumerate(config.sections):
        mu = section_mu(sec, n[k], lam)
        # generator is -M; realized by negating both mu and kappa
        mant, x, _ = _scaled_entries(-mu, -sec.kappa, grid.dz)
        phase = cmath.exp(1j * x.imag)
        for _ in range(int(grid.cells_per_section[k])):
            cur = mant @ cur
            cur *= phase
            acc += x.real
            norm = max(abs(cur[0]), abs(cur[1]))
            if norm > 0.0:
                cur /= norm
                acc += math.log(norm)
            node += 1
            v[node] = cur
            logs[node] = acc
    amp = np.exp(logs - logs.max())
    w1 = v[:, 0] * amp
    w2 = v[:, 1] * amp

    node_sec = grid.node_section()
    fac = np.empty(config.m, dtype=complex)
    for k, sec in enumerate(config.sections):
        fac[k] = sec.rho(n[k]) / (lam - 1j * sec.omega_r(n[k])
                                  + sec.gamma(n[k]))
    return np.stack([w1, w2, fac[node_sec] * w1, fac[node_sec] * w2])


@dataclass(frozen=True)
class ModeBasis:
    """Frozen mode basis at the reference density n_ref.

    ``rows`` are the biorthogonalized adjoint functionals (trapezoid
    weights folded in): coefficients of a field stack u are rows_i . u
    summed over components and nodes, delta_ij on the basis itself.
    """

    config: LaserConfig
    grid: Grid
    n_ref: np.ndarray
    lams: np.ndarray            # (q,) eigenvalues at n_ref
    profiles: np.ndarray        # (q, 4, N+1) mode stacks B_j(n_ref)
    rows: np.ndarray            # (q, 4, N+1) projection functionals
    n_box: np.ndarray           # (m, 2) validity intervals
    trust_radius: float

    @property
    def q(self) -> int:
        return len(self.lams)

    def project(self, stack: np.ndarray) -> np.ndarray:
        """Reduced coordinates of a (4, N+1) field stack."""
        return np.einsum("qcn,cn->q", self.rows, stack)

    def synthesize(self, coeffs, profiles=None) -> np.ndarray:
        """Field stack B E_c for reduced coordinates E_c."""
        profs = self.profiles if profiles is None else profiles
        return np.einsum("q,qcn->cn", np.asarray(coeffs, dtype=complex),
                         profs)

    def in_box(self, n) -> bool:
        n = np.asarray(n, dtype=float)
        return bool(np.all(n >= self.n_box[:, 0])
                    and np.all(n <= self.n_box[:, 1]))

    def check_box(self, n, t=None):
        if not self.in_box(n):
            raise ValidityBoxExit(t if t is not None else math.nan,
                                  np.asarray(n, dtype=float))


def _biorthogonal_rows(profiles, adjoints, weights):
    """Gram-corrected projection rows; returns (rows, gram)."""
    q = len(profiles)
    raw = adjoints * weights          # fold quadrature into the rows
    gram = np.einsum("icn,jcn->ij", raw, profiles)
    scale = np.abs(np.diag(gram))
    if np.any(scale < 1e-12):
        raise ConvergenceError(
            "biorthogonal normalizer vanishes; dominant eigenvalue is "
            "defective (h'(lambda) ~ 0)")
    rows = np.linalg.solve(gram, raw.reshape(q, -1)).reshape(raw.shape)
    return rows, gram


def continue_root(config: LaserConfig, n_from, n_to, lam: complex,
                  trust: float, max_step: float = 0.05) -> complex:
    """Continue a root of h along the straight carrier path n_from -> n_to."""
    n_from = np.asarray(n_from, dtype=float)
    n_to = np.asarray(n_to, dtype=float)
    d = n_to - n_from
    dist = float(np.max(np.abs(d)))
    if dist == 0.0:
        return lam
    s = 0.0
    ds = min(1.0, max_step / dist)
    while s < 1.0:
        s_next = min(1.0, s + ds)
        got = newton_root(config, n_from + s_next * d, lam)
        if got is None or abs(got[0] - lam) > trust:
            ds *= 0.5
            if ds * dist < 1e-8:
                raise TrackingJumpError(
                    f"eigenvalue continuation lost the branch near "
                    f"n = {n_from + s * d}")
            continue
        lam = got[0]
        s = s_next
    return lam


def build_basis(config: LaserConfig, n_crit, q: int, n_box,
                grid: Grid | None = None,
                spectrum: Spectrum | None = None) -> ModeBasis:
    """Mode basis for the q dominant (simple) eigenvalues at n_crit.

    The validity box is certified by continuing each tracked root to every
    box corner and checking it stays strictly dominant over the rest of
    the spectrum there.
    """
    n_crit = np.array(check_carriers(config, n_crit), dtype=float)
    if grid is None:
        grid = make_grid(config)
    n_box = np.asarray(n_box, dtype=float)
    if n_box.shape != (config.m, 2) or np.any(n_box[:, 0] > n_box[:, 1]):
        raise DomainError("n_box must be (m, 2) intervals lo <= hi")
    if not np.all((n_crit >= n_box[:, 0]) & (n_crit <= n_box[:, 1])):
        raise DomainError("n_crit must lie inside n_box")

    if spectrum is None:
        spectrum = find_eigenvalues(config, n_crit)
    eigs = sorted(spectrum.eigenvalues, key=lambda e: -e.lam.real)
    if len(eigs) < q:
        raise GapLossError(f"only {len(eigs)} eigenvalues found, need {q}",
                           spectrum=spectrum)
    if any(e.multiplicity != 1 for e in eigs[:q]):
        raise GapLossError("dominant eigenvalue not simple",
                           spectrum=spectrum)
    lams = np.array([e.lam for e in eigs[:q]])
    trust = 0.45 * math.pi / config.length

    modes = [eigenmode(config, n_crit, lam, grid=grid) for lam in lams]
    profiles = np.stack([_stack(m) for m in modes])
    adjoints = np.stack([adjoint_profile(config, n_crit, lam, grid)
                         for lam in lams])
    rows, _ = _biorthogonal_rows(profiles, adjoints, _trapz_weights(grid))

    check = np.einsum("icn,jcn->ij", rows, profiles)
    if np.max(np.abs(check - np.eye(q))) > BIORTHO_TOL:
        raise ConvergenceError("biorthogonality residual above tolerance")

    # certify the gap across the box corners
    corners = np.stack(np.meshgrid(*[n_box[k] for k in range(config.m)],
                                   indexing="ij"), axis=-1).reshape(-1, config.m)
    for corner in corners:
        tracked = [continue_root(config, n_crit, corner, lam, trust)
                   for lam in lams]
        spec_c = find_eigenvalues(config, corner)
        rest = [e.lam.real for e in spec_c.eigenvalues
                if all(abs(e.lam - t) > 1e-6 for t in tracked)]
        rest.append(spec_c.R_inf)
        if min(t.real for t in tracked) <= max(rest):
            raise GapLossError(
                f"tracked modes lose dominance at box corner {corner}",
                spectrum=spec_c)

    return ModeBasis(config=config, grid=grid, n_ref=n_crit, lams=lams,
                     profiles=profiles, rows=rows, n_box=n_box,
                     trust_radius=trust)


def basis_at(basis: ModeBasis, config: LaserConfig, n,
             lams=None):
    """Gauge-locked basis profiles and eigenvalues at a nearby density n.

    Each mode is recomputed at n and rotated so its inner product with the
    reference profile is real positive (removes the phase freedom, making
    B(n) smooth in n).
    """
    n = check_carriers(config, n)
    if lams is None:
        lams = [continue_root(config, basis.n_ref, n, lam,
                              basis.trust_radius) for lam in basis.lams]
    w = _trapz_weights(basis.grid)
    profs = np.empty_like(basis.profiles)
    for j, lam in enumerate(lams):
        st = _stack(eigenmode(config, n, lam, grid=basis.grid))
        ip = np.einsum("cn,cn->", np.conj(basis.profiles[j]) * w, st)
        if abs(ip) < 1e-8:
            raise ConvergenceError(
                f"gauge lock failed for mode {j} at n = {n} "
                f"(overlap {abs(ip):.2e})")
        profs[j] = st * (abs(ip) / ip)
    return profs, np.asarray(lams, dtype=complex)


def mode_matrix(basis: ModeBasis, config: LaserConfig, n) -> np.ndarray:
    """H_c(n): diagonal matrix of the tracked eigenvalues."""
    basis.check_box(n)
    lams = [continue_root(config, basis.n_ref, n, lam, basis.trust_radius)
            for lam in basis.lams]
    return np.diag(lams)


def F_slow(config: LaserConfig, n, stack, grid: Grid) -> np.ndarray:
    """Slow carrier rate F = f/eps with the P/eps = 1 cancellation applied.

    The quadratic field term enters with unit weight regardless of eps;
    for eps = 0 the pump/decay part is returned unscaled (the slow rate is
    not defined at eps = 0; this convention keeps F finite and is what the
    eps -> 0 rescaling of currents and lifetimes produces).
    """
    n = check_carriers(config, n)
    psi1, psi2, p1, p2 = stack
    out = np.empty(config.m)
    for k, sec in enumerate(config.sections):
        g = gain(sec, n[k])
        rho = sec.rho(n[k])
        sl = grid.section_slice(k)
        w = ((g - rho) * (np.abs(psi1[sl]) ** 2 + np.abs(psi2[sl]) ** 2)
             + rho * (np.conj(psi1[sl]) * p1[sl]
                      + np.conj(psi2[sl]) * p2[sl]).real)
        quad = grid.dz * (w.sum() - 0.5 * (w[0] + w[-1])) / sec.length
        pump = sec.current - n[k] / sec.lifetime
        if config.epsilon > 0.0:
            pump /= config.epsilon
        out[k] = pump - quad
    return out


def carrier_form(basis: ModeBasis, config: LaserConfig, n,
                 profiles=None) -> np.ndarray:
    """Hermitian forms Q_k with E_c* Q_k E_c = quadratic part of F_k."""
    n = check_carriers(config, n)
    if profiles is None:
        profiles, _ = basis_at(basis, config, n)
    q = basis.q
    grid = basis.grid
    Q = np.empty((config.m, q, q), dtype=complex)
    for k, sec in enumerate(config.sections):
        g = gain(sec, n[k])
        rho = sec.rho(n[k])
        sl = grid.section_slice(k)
        w = np.full(grid.section_nodes[k + 1] - grid.section_nodes[k] + 1,
                    grid.dz)
        w[0] *= 0.5
        w[-1] *= 0.5
        for i in range(q):
            for j in range(q):
                a1i, a2i, b1i, b2i = profiles[i][:, sl]
                a1j, a2j, b1j, b2j = profiles[j][:, sl]
                # hermitian part of the bilinear carrier functional
                val = np.sum(w * (
                    (g - rho) * (np.conj(a1i) * a1j + np.conj(a2i) * a2j)
                    + 0.5 * rho * (np.conj(a1i) * b1j + np.conj(b1i) * a1j
                                   + np.conj(a2i) * b2j + np.conj(b2i) * a2j)))
                Q[k, i, j] = val / sec.length
    return Q


def basis_drift(basis: ModeBasis, config: LaserConfig, n,
                step: float = GAUGE_STEP) -> np.ndarray:
    """M_k = P~_c dB/dn_k as (m, q, q) matrices, by gauge-locked central
    differences."""
    n = np.array(check_carriers(config, n), dtype=float)
    out = np.empty((config.m, basis.q, basis.q), dtype=complex)
    for k in range(config.m):
        npl = n.copy()
        npl[k] += step
        nmi = n.copy()
        nmi[k] -= step
        ppl, _ = basis_at(basis, config, npl)
        pmi, _ = basis_at(basis, config, nmi)
        dB = (ppl - pmi) / (2.0 * step)
        out[k] = np.einsum("icn,jcn->ij", basis.rows, dB)
    return out


def a1_matrix(basis: ModeBasis, config: LaserConfig, E_c, n) -> np.ndarray:
    """First-order basis-drift correction a1 = -sum_k F_k P~_c dB/dn_k."""
    basis.check_box(n)
    E_c = np.asarray(E_c, dtype=complex)
    profiles, _ = basis_at(basis, config, n)
    field = basis.synthesize(E_c, profiles)
    F = F_slow(config, n, field, basis.grid)
    drift = basis_drift(basis, config, n)
    return -np.einsum("k,kij->ij", F, drift)


@dataclass
class ReducedState:
    E_c: np.ndarray
    n: np.ndarray
    t: float = 0.0


def reduced_rhs(basis: ModeBasis, config: LaserConfig,
                state: ReducedState):
    """(dE_c, dn) of the truncated reduced flow."""
    basis.check_box(state.n, state.t)
    E = np.asarray(state.E_c, dtype=complex)
    lams = [continue_root(config, basis.n_ref, state.n, lam,
                          basis.trust_radius) for lam in basis.lams]
    profiles, _ = basis_at(basis, config, state.n, lams=lams)
    field = basis.synthesize(E, profiles)
    F = F_slow(config, state.n, field, basis.grid)
    drift = basis_drift(basis, config, state.n)
    a1 = -np.einsum("k,kij->ij", F, drift)
    dE = (np.diag(lams) + config.epsilon * a1) @ E
    dn = config.epsilon * F
    return dE, dn


# ---------------------------------------------------------------------------
# evaluators for integration: exact (recomputed per call) and tabulated

class ExactEvaluator:
    """Recomputes lambda(n), Q_k(n), and the drift matrices on demand."""

    def __init__(self, basis: ModeBasis, config: LaserConfig):
        self.basis = basis
        self.config = config

    def coefficients(self, n):
        basis, config = self.basis, self.config
        lams = [continue_root(config, basis.n_ref, n, lam,
                              basis.trust_radius) for lam in basis.lams]
        profiles, _ = basis_at(basis, config, n, lams=lams)
        Q = carrier_form(basis, config, n, profiles=profiles)
        drift = basis_drift(basis, config, n)
        return np.asarray(lams, dtype=complex), Q, drift


class TabulatedEvaluator:
    """Coefficients sampled on a grid over the validity box, interpolated.

    Multilinear interpolation is done inline (the reduced right-hand side
    is evaluated millions of times; generic interpolator objects dominate
    the runtime otherwise).  Resolution is per carrier component.
    """

    def __init__(self, basis: ModeBasis, config: LaserConfig,
                 resolution: int = 17):
        if config.m > 3:
            raise DomainError("tabulation over more than 3 carrier "
                              "components is not supported; use the exact "
                              "evaluator")
        exact = ExactEvaluator(basis, config)
        self._axes = [np.linspace(basis.n_box[k, 0], basis.n_box[k, 1],
                                  resolution) for k in range(config.m)]
        mesh = np.meshgrid(*self._axes, indexing="ij")
        pts = np.stack([a.ravel() for a in mesh], axis=-1)
        q, m = basis.q, config.m
        nc = q + 2 * m * q * q
        table = np.empty((len(pts), nc), dtype=complex)
        for i, p in enumerate(pts):
            lam, Q, dr = exact.coefficients(p)
            table[i] = np.concatenate([lam.ravel(), Q.ravel(), dr.ravel()])
        shape = tuple(len(a) for a in self._axes)
        self._table = np.ascontiguousarray(table.reshape(shape + (nc,)))
        self._q = q
        self._m = m

    def coefficients(self, n):
        n = np.asarray(n, dtype=float)
        m, q = self._m, self._q
        acc = self._table
        # successive 1-d linear interpolation along each carrier axis
        for k in range(m):
            ax = self._axes[k]
            i = int(np.searchsorted(ax, n[k])) - 1
            i = min(max(i, 0), len(ax) - 2)
            f = (n[k] - ax[i]) / (ax[i + 1] - ax[i])
            acc = (1.0 - f) * acc[i] + f * acc[i + 1]
        lam = acc[:q]
        Q = acc[q:q + m * q * q].reshape(m, q, q)
        dr = acc[q + m * q * q:].reshape(m, q, q)
        return lam, Q, dr


def _rhs_from_coeffs(config, lams, Q, drift, E, n):
    quad = np.einsum("i,kij,j->k", np.conj(E), Q, E).real
    pump = np.array([s.current - n[k] / s.lifetime
                     for k, s in enumerate(config.sections)])
    if config.epsilon > 0.0:
        pump = pump / config.epsilon
    F = pump - quad
    a1 = -np.einsum("k,kij->ij", F, drift)
    dE = (np.diag(lams) + config.epsilon * a1) @ E
    dn = config.epsilon * F
    return dE, dn


@dataclass
class ReducedOutput:
    t: np.ndarray
    E_c: np.ndarray      # (n_samples, q)
    n: np.ndarray        # (n_samples, m)


def integrate_reduced(basis: ModeBasis, config: LaserConfig,
                      init: ReducedState, horizon: float,
                      rtol: float = 1e-9, atol: float = 1e-12,
                      max_samples: int = 4000,
                      evaluator=None) -> ReducedOutput:
    """Integrate the reduced flow with an adaptive embedded RK pair.

    Aborts with ValidityBoxExit when the carrier vector leaves the basis
    box (detected by integrator event).
    """
    if horizon <= 0.0:
        raise DomainError("horizon must be > 0")
    basis.check_box(init.n, init.t)
    if evaluator is None:
        evaluator = TabulatedEvaluator(basis, config)
    q, m = basis.q, config.m

    def unpack(y):
        E = y[:q] + 1j * y[q:2 * q]
        n = y[2 * q:]
        return E, n

    curr = np.array([s.current for s in config.sections])
    inv_tau = np.array([1.0 / s.lifetime for s in config.sections])
    eps = config.epsilon
    inv_eps = 1.0 / eps if eps > 0.0 else 1.0
    lo, hi = basis.n_box[:, 0], basis.n_box[:, 1]

    def rhs(t, y):
        E, n = unpack(y)
        # trial steps may poke slightly past the box before the exit
        # event fires; clamp the coefficient lookup
        n = np.clip(n, lo, hi)
        lams, Q, drift = evaluator.coefficients(n)
        quad = ((Q @ E) @ E.conj()).real
        F = (curr - n * inv_tau) * inv_eps - quad
        dE = lams * E - eps * (np.tensordot(F, drift, axes=1) @ E)
        dn = eps * F
        return np.concatenate([dE.real, dE.imag, dn])

    def box_event(t, y):
        _, n = unpack(y)
        return float(np.min(np.minimum(n - basis.n_box[:, 0],
                                       basis.n_box[:, 1] - n)))
    box_event.terminal = True
    box_event.direction = -1

    y0 = np.concatenate([np.asarray(init.E_c, dtype=complex).real,
                         np.asarray(init.E_c, dtype=complex).imag,
                         np.asarray(init.n, dtype=float)])
    t_eval = np.linspace(init.t, init.t + horizon, max_samples)
    sol = solve_ivp(rhs, (init.t, init.t + horizon), y0, method="RK45",
                    rtol=rtol, atol=atol, t_eval=t_eval, events=box_event)
    if sol.status == 1:     # terminated by the box event
        t_exit = sol.t_events[0][0]
        _, n_exit = unpack(sol.y_events[0][0])
        raise ValidityBoxExit(float(t_exit), n_exit)
    if not sol.success:
        raise ConvergenceError(f"reduced integration failed: {sol.message}")
    E = sol.y[:q].T + 1j * sol.y[q:2 * q].T
    return ReducedOutput(t=sol.t, E_c=E, n=sol.y[2 * q:].T)


# ---------------------------------------------------------------------------
# full-model comparison

@dataclass
class ComparisonReport:
    t: np.ndarray
    n_full: np.ndarray
    n_reduced: np.ndarray
    E_proj_abs: np.ndarray    # |projection of the full field|, (n_samples, q)
    E_c_abs: np.ndarray
    max_n_error: float
    max_E_error: float


def compare_full_vs_reduced(config: LaserConfig, basis: ModeBasis,
                            init: ReducedState, horizon: float,
                            stable_perturbation=None,
                            stride: int = 50,
                            evaluator=None,
                            rtol: float = 1e-9) -> ComparisonReport:
    """Run the PDE and the reduced ODE from matched initial data.

    The full field starts as B(n0) E_c(0) (plus an optional stable
    component); the report compares carrier traces and the modulus of the
    reduced coordinates against the frozen-basis projection of the full
    field.
    """
    from . import _kernels
    from .twm import FieldState, InjectionSignal, SimWorkspace

    grid = basis.grid
    stack = basis.synthesize(init.E_c)
    if stable_perturbation is not None:
        stack = stack + np.asarray(stable_perturbation, dtype=complex)
    state = FieldState(stack[0].copy(), stack[1].copy(), stack[2].copy(),
                       stack[3].copy(), np.asarray(init.n, dtype=float),
                       init.t)
    state.psi1[0] = config.r0 * state.psi2[0]
    state.psi2[-1] = config.rL * state.psi1[-1]

    ws = SimWorkspace(state, config, grid, InjectionSignal.zero())
    dt = grid.dz
    nsteps = int(round(horizon / dt))
    collapse = grid.collapse_map()

    ts, nf, proj = [], [], []

    def record():
        ts.append(ws.t)
        nf.append(ws.n.copy())
        st = np.stack([ws.psi1[collapse], ws.psi2[collapse],
                       ws.p1[collapse], ws.p2[collapse]])
        proj.append(np.abs(basis.project(st)))

    record()
    done = 0
    while done < nsteps:
        chunk = min(stride, nsteps - done)
        _kernels.advance(ws, chunk)
        done += chunk
        record()
    t_arr = np.array(ts)

    red = integrate_reduced(basis, config, init, horizon, rtol=rtol,
                            max_samples=max(len(t_arr), 2),
                            evaluator=evaluator)
    n_red = np.stack([np.interp(t_arr, red.t, red.n[:, k])
                      for k in range(config.m)], axis=1)
    E_abs = np.stack([np.interp(t_arr, red.t, np.abs(red.E_c[:, j]))
                      for j in range(basis.q)], axis=1)
    n_full = np.array(nf)
    proj_arr = np.array(proj)
    return ComparisonReport(
        t=t_arr, n_full=n_full, n_reduced=n_red,
        E_proj_abs=proj_arr, E_c_abs=E_abs,
        max_n_error=float(np.max(np.abs(n_full - n_red))),
        max_E_error=float(np.max(np.abs(proj_arr - E_abs))))
