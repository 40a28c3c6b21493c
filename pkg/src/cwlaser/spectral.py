"""Transfer matrices, characteristic function, eigenvalues, and spectral gaps.

The field operator linearized at a frozen carrier density n has purely
point spectrum to the right of the essential growth rate; its eigenvalues
are the roots of the characteristic function

    h(n; lambda) = [rL, -1] . T_m ... T_1 . [r0, 1]^T,

where T_k is the 2x2 transfer matrix of section k at the spectral
parameter lambda.  All magnitudes here are handled in mantissa/exponent
form (h = mantissa * exp(exponent)) because exp(gamma l) overflows for
strongly pumped sections; roots only need h up to nonzero factors.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceError, DomainError, GapLossError,
                     NotARootError, PoleError, RootCountMismatch)
from .grid import Grid, make_grid
from .params import (LaserConfig, SectionParams, check_carriers, chi,
                     propagation_coefficient)

REL_RESIDUAL_TOL = 1e-9
DEDUP_TOL = 1e-7
MULT_RADIUS = 1e-4
AXIS_DELTA = 1e-8
OVERFLOW_LIMIT = 700.0


# ---------------------------------------------------------------------------
# transfer matrices

@dataclass(frozen=True)
class SectionTransfer:
    """Transfer matrix of one section at fixed (n_k, lambda).

    ``matrix`` is the plain 2x2 value; ``mantissa``/``exponent`` give the
    overflow-safe factorization matrix = exp(exponent) * mantissa.
    """

    matrix: np.ndarray
    mantissa: np.ndarray
    exponent: complex
    mu: complex
    gamma: complex
    z: float


def _scaled_entries(mu: complex, kappa: float, z: float):
    """Entries of exp(-gamma z) T(z) plus the exponent gamma z.

    gamma is the principal square root of mu^2 + kappa^2 (Re gamma >= 0),
    so E = exp(-2 gamma z) has modulus <= 1 and all entries stay order one.
    The closed form is even in gamma, hence branch independent.
    """
    gam = cmath.sqrt(mu * mu + kappa * kappa)
    x = gam * z
    E = cmath.exp(-2.0 * x)
    ch = 0.5 * (1.0 + E)                      # exp(-x) cosh(x)
    if abs(x) < 1e-6:
        sfac = z * cmath.exp(-x) * (1.0 + x * x / 6.0)   # exp(-x) sinh(x)/gamma
    else:
        sfac = 0.5 * (1.0 - E) / gam
    t11 = ch - mu * sfac
    t12 = -1j * kappa * sfac
    t21 = 1j * kappa * sfac
    t22 = ch + mu * sfac
    return np.array([[t11, t12], [t21, t22]]), x, gam


def _entry_bound(mu: complex, kappa: float, z: float) -> np.ndarray:
    """Worst-case entry magnitudes of the scaled matrix assuming the two
    terms forming each diagonal entry do not cancel.  Used to normalize
    the characteristic residual; a root shows up as |h| far below this
    bound."""
    gam = cmath.sqrt(mu * mu + kappa * kappa)
    x = gam * z
    E = cmath.exp(-2.0 * x)
    ch = 0.5 * abs(1.0 + E)
    if abs(x) < 1e-6:
        sfac = abs(z * cmath.exp(-x)) * (1.0 + abs(x) ** 2 / 6.0)
    else:
        sfac = 0.5 * abs(1.0 - E) / abs(gam)
    diag = ch + abs(mu) * sfac
    off = abs(kappa) * sfac
    return np.array([[diag, off], [off, diag]])


def section_mu(section: SectionParams, nu: float, lam: complex) -> complex:
    """Spectral decay exponent mu = lambda - chi - beta of a section."""
    return lam - chi(section, nu, lam) - propagation_coefficient(section, nu)


def transfer_section(section: SectionParams, nu: float, lam: complex,
                     z: float | None = None) -> SectionTransfer:
    """Closed-form transfer matrix over length z (default: full section)."""
    if z is None:
        z = section.length
    if z < 0.0:
        raise DomainError(f"transfer length {z:g} must be >= 0")
    mu = section_mu(section, nu, lam)
    mant, x, gam = _scaled_entries(mu, section.kappa, z)
    if abs(x.real) > OVERFLOW_LIMIT:
        raise OverflowError(
            f"|Re gamma| z = {abs(x.real):g} > {OVERFLOW_LIMIT:g}; "
            "use the mantissa/exponent form")
    return SectionTransfer(matrix=cmath.exp(x) * mant, mantissa=mant,
                           exponent=x, mu=mu, gamma=gam, z=z)


# ---------------------------------------------------------------------------
# characteristic function

@dataclass(frozen=True)
class CharValue:
    """h = mantissa * exp(exponent); ``rel_residual`` measures how much
    cancellation occurred in the final boundary combination (a root has
    rel_residual -> 0 while generic values are order one)."""

    mantissa: complex
    exponent: complex
    rel_residual: float

    @property
    def value(self) -> complex:
        return self.mantissa * cmath.exp(self.exponent)

    def __complex__(self) -> complex:
        return self.value


def char_fn(config: LaserConfig, n, lam: complex) -> CharValue:
    """Characteristic function in mantissa/exponent form."""
    n = check_carriers(config, n)
    v0 = complex(config.r0)
    v1 = 1.0 + 0.0j
    # m0, m1 bound |v0|, |v1| assuming no cancellation anywhere; the ratio
    # |h| / bound then measures total cancellation, not just the final
    # subtraction (which is the whole story only when rL != 0)
    m0 = abs(v0)
    m1 = 1.0
    expo = 0.0 + 0.0j
    for k, sec in enumerate(config.sections):
        mu = section_mu(sec, n[k], lam)
        mant, x, _ = _scaled_entries(mu, sec.kappa, sec.length)
        bound = _entry_bound(mu, sec.kappa, sec.length)
        v0, v1 = (mant[0, 0] * v0 + mant[0, 1] * v1,
                  mant[1, 0] * v0 + mant[1, 1] * v1)
        m0, m1 = (bound[0, 0] * m0 + bound[0, 1] * m1,
                  bound[1, 0] * m0 + bound[1, 1] * m1)
        expo += x
        scale = max(abs(v0), abs(v1), m0, m1)
        if scale != 0.0 and not (1e-100 < scale < 1e100):
            v0 /= scale
            v1 /= scale
            m0 /= scale
            m1 /= scale
            expo += math.log(scale)
    a = config.rL * v0
    h = a - v1
    mag = abs(config.rL) * m0 + m1
    rel = abs(h) / mag if mag > 0.0 else 0.0
    return CharValue(mantissa=h, exponent=expo, rel_residual=rel)


def growth_rates(config: LaserConfig, n):
    """(R_psi, R_p, R_inf): field round-trip, polarization, and combined
    essential growth rates."""
    n = check_carriers(config, n)
    L = config.length
    acc = sum(s.length * propagation_coefficient(s, n[k]).real
              for k, s in enumerate(config.sections))
    rr = abs(config.r0 * config.rL)
    r_psi = -math.inf if rr == 0.0 else (acc + 0.5 * math.log(rr)) / L
    r_p = -min(s.gamma(n[k]) for k, s in enumerate(config.sections))
    return r_psi, r_p, max(r_psi, r_p)


def lambda_upper_bound(config: LaserConfig, n) -> float:
    """Upper bound on Re lambda over the whole point spectrum."""
    n = check_carriers(config, n)
    best = -math.inf
    for k, s in enumerate(config.sections):
        beta = propagation_coefficient(s, n[k])
        best = max(best, beta.real + 2.0 * s.rho(n[k]), -0.5 * s.gamma(n[k]))
    return best


# ---------------------------------------------------------------------------
# winding numbers (argument principle on polygonal contours)

def _phase(config, n, lam):
    """(arg h, log |h|, |h'/h|) at lam, assembled from the scaled form.

    The logarithmic derivative is a finite-difference estimate; it bounds
    how fast arg h and log |h| can drift along a short contour segment.
    """
    c = char_fn(config, n, lam)
    if c.mantissa == 0.0:
        raise ConvergenceError(f"characteristic function vanishes on the "
                               f"contour at {lam}")
    delta = 1e-6 * max(1.0, abs(lam))
    try:
        cp = char_fn(config, n, lam + delta)
        cm = char_fn(config, n, lam - delta)
        rp = (cp.mantissa / c.mantissa) * cmath.exp(cp.exponent - c.exponent)
        rm = (cm.mantissa / c.mantissa) * cmath.exp(cm.exponent - c.exponent)
        dlog = abs(rp - rm) / (2.0 * delta)
    except (PoleError, OverflowError, ZeroDivisionError):
        dlog = math.inf
    return (cmath.phase(c.mantissa) + c.exponent.imag,
            math.log(abs(c.mantissa)) + c.exponent.real,
            dlog)


def _wrap(d: float) -> float:
    return (d + math.pi) % (2.0 * math.pi) - math.pi


def contour_winding(config: LaserConfig, n, points, max_evals: int = 60000) -> int:
    """Winding number of h along a closed polyline through ``points``.

    A segment is accepted once the wrapped phase step is below pi/2, the
    modulus changes by less than a factor of 2, and the endpoint
    logarithmic derivatives bound the possible phase drift below pi/2.
    The latter two conditions catch silent aliasing near poles, where
    arg h can spin through a full turn between samples while the wrapped
    difference looks small.  Raises if refinement stalls (root on or
    numerically touching the contour).
    """
    n = check_carriers(config, n)
    evals = [len(points)]
    cache = [(p, _phase(config, n, p)) for p in points]

    def seg(p0, f0, p1, f1, depth):
        d = _wrap(f1[0] - f0[0])
        if (abs(d) < 0.5 * math.pi
                and abs(f1[1] - f0[1]) < math.log(2.0)
                and max(f0[2], f1[2]) * abs(p1 - p0) < 0.5 * math.pi):
            return d
        if depth > 48 or evals[0] > max_evals:
            raise ConvergenceError(
                "winding refinement did not converge; a root may lie on "
                f"the contour near {0.5 * (p0 + p1)}")
        pm = 0.5 * (p0 + p1)
        fm = _phase(config, n, pm)
        evals[0] += 1
        return seg(p0, f0, pm, fm, depth + 1) + seg(pm, fm, p1, f1, depth + 1)

    total = 0.0
    for (p0, f0), (p1, f1) in zip(cache, cache[1:] + cache[:1]):
        total += seg(p0, f0, p1, f1, 0)
    w = total / (2.0 * math.pi)
    if abs(w - round(w)) > 1e-6:
        raise ConvergenceError(f"winding number {w:g} is not an integer")
    return int(round(w))


def _rectangle(window, per_edge: int):
    re_lo, re_hi, im_lo, im_hi = window
    top = np.linspace(re_lo, re_hi, per_edge, endpoint=False)
    right = np.linspace(im_lo, im_hi, per_edge, endpoint=False)
    pts = ([complex(x, im_lo) for x in top]
           + [complex(re_hi, y) for y in right]
           + [complex(x, im_hi) for x in top[::-1] + (re_hi - re_lo) / per_edge]
           + [complex(re_lo, y) for y in right[::-1] + (im_hi - im_lo) / per_edge])
    return pts


def winding_number(config: LaserConfig, n, window, per_edge: int = 32) -> int:
    """Roots of h (with multiplicity) inside the rectangle
    window = (re_lo, re_hi, im_lo, im_hi)."""
    return contour_winding(config, n, _rectangle(window, per_edge))


def _circle_winding(config, n, center, radius, per: int = 16) -> int:
    pts = [center + radius * cmath.exp(2j * math.pi * j / per) for j in range(per)]
    return contour_winding(config, n, pts)


# ---------------------------------------------------------------------------
# root finding

def newton_root(config: LaserConfig, n, lam0: complex,
                maxit: int = 80, tol: float = 1e-12):
    """Newton iteration on h from lam0; returns (lambda, rel_residual).

    The step -h/h' is evaluated from ratios of scaled characteristic
    values, which keeps the huge exp(Sum gamma l) factors out of the
    arithmetic entirely.
    """
    lam = complex(lam0)
    step_cap = 2.0 * math.pi / config.length
    for _ in range(maxit):
        scale = max(1.0, abs(lam))
        delta = 1e-7 * scale
        try:
            c0 = char_fn(config, n, lam)
            cp = char_fn(config, n, lam + delta)
            cm = char_fn(config, n, lam - delta)
        except PoleError:
            return None
        if c0.mantissa == 0.0:
            return lam, 0.0
        rp = (cp.mantissa / c0.mantissa) * cmath.exp(cp.exponent - c0.exponent)
        rm = (cm.mantissa / c0.mantissa) * cmath.exp(cm.exponent - c0.exponent)
        den = rp - rm
        if den == 0.0:
            return None
        step = -2.0 * delta / den
        if abs(step) > step_cap:
            step *= step_cap / abs(step)
        lam += step
        if abs(step) < tol * scale:
            res = char_fn(config, n, lam).rel_residual
            if res < REL_RESIDUAL_TOL:
                return lam, res
            return None
    return None


def fixed_point_seeds(config: LaserConfig, n, j_values, iters: int = 40):
    """Candidate eigenvalues from the dispersion-corrected round-trip formula.

    Without coupling and dispersion the roots are
    lambda_j = lambda_0 + j pi i / L with
    lambda_0 = (Sum l_k beta_k + log(r0 rL)/2) / L; the chi correction is
    folded in by fixed-point iteration.  Needs r0 rL != 0.
    """
    rr = config.r0 * config.rL
    if rr == 0.0:
        return []
    L = config.length
    lam0 = (sum(s.length * propagation_coefficient(s, n[k])
                for k, s in enumerate(config.sections))
            + 0.5 * cmath.log(rr)) / L
    seeds = []
    for j in j_values:
        lam = lam0 + 1j * math.pi * j / L
        try:
            for _ in range(iters):
                corr = sum((s.length / L) * chi(s, n[k], lam)
                           for k, s in enumerate(config.sections))
                new = lam0 + 1j * math.pi * j / L + corr
                if abs(new - lam) < 1e-13:
                    lam = new
                    break
                lam = new
        except PoleError:
            continue
        seeds.append(lam)
    return seeds


@dataclass(frozen=True)
class Eigenvalue:
    lam: complex
    multiplicity: int
    residual: float


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: tuple
    R_psi: float
    R_p: float
    R_inf: float
    Lambda_u: float
    q: int
    xi: float
    delta: float
    window: tuple

    def dominant(self):
        return max(self.eigenvalues, key=lambda e: e.lam.real, default=None)


def default_window(config: LaserConfig, n, im_halfwidth: float = 25.0):
    _, _, r_inf = growth_rates(config, n)
    lu = lambda_upper_bound(config, n)
    lo = r_inf + 0.1 if math.isfinite(r_inf) else -0.5 * min(
        s.gamma(np.asarray(n, float)[k]) for k, s in enumerate(config.sections)) + 0.1
    return (lo, lu + 0.1, -im_halfwidth, im_halfwidth)


def find_eigenvalues(config: LaserConfig, n, window=None,
                     grid_re: int = 6, axis_delta: float = AXIS_DELTA,
                     extra_seeds=()) -> Spectrum:
    """All roots of h inside the window, audited by the argument principle.

    Newton runs are seeded from a uniform grid over the window plus the
    round-trip fixed-point formula; converged roots are deduplicated and
    their total multiplicity is checked against the boundary winding
    number (exact integer match required).
    """
    n = check_carriers(config, n)
    if window is None:
        window = default_window(config, n)
    re_lo, re_hi, im_lo, im_hi = window
    if re_hi <= re_lo or im_hi <= im_lo:
        raise DomainError(f"empty search window {window}")
    L = config.length

    # seed grid: resolve the pi/L longitudinal mode spacing in Im
    ny = max(4, int(math.ceil((im_hi - im_lo) / (0.5 * math.pi / L))))
    res = np.linspace(re_lo, re_hi, grid_re + 2)[1:-1]
    ims = np.linspace(im_lo, im_hi, ny + 2)[1:-1]
    seeds = [complex(a, b) for a in res for b in ims]
    j_lo = int(math.floor(im_lo * L / math.pi)) - 1
    j_hi = int(math.ceil(im_hi * L / math.pi)) + 1
    seeds += fixed_point_seeds(config, n, range(j_lo, j_hi + 1))
    seeds += [complex(s) for s in extra_seeds]

    pad = 0.05 * max(re_hi - re_lo, 1.0)
    roots = []
    for s in seeds:
        got = newton_root(config, n, s)
        if got is None:
            continue
        lam, resid = got
        if not (re_lo - pad <= lam.real <= re_hi + pad
                and im_lo - pad <= lam.imag <= im_hi + pad):
            continue
        if not (re_lo <= lam.real <= re_hi and im_lo <= lam.imag <= im_hi):
            continue
        for r in roots:
            if abs(r[0] - lam) < DEDUP_TOL:
                break
        else:
            roots.append((lam, resid))

    eigs = []
    for lam, resid in roots:
        mult = _circle_winding(config, n, lam, MULT_RADIUS)
        if mult < 1:
            mult = 1    # root sits within round-off of the tiny circle
        eigs.append(Eigenvalue(lam=lam, multiplicity=mult, residual=resid))
    eigs.sort(key=lambda e: (e.lam.real, e.lam.imag))

    total = sum(e.multiplicity for e in eigs)
    wind = winding_number(config, n, window)
    if wind != total:
        raise RootCountMismatch(total, wind, window)

    r_psi, r_p, r_inf = growth_rates(config, n)
    lu = lambda_upper_bound(config, n)
    q = sum(e.multiplicity for e in eigs if e.lam.real > -axis_delta)
    rest = [e.lam.real for e in eigs if e.lam.real <= -axis_delta]
    xi = -max(rest + [r_inf])
    return Spectrum(eigenvalues=tuple(eigs), R_psi=r_psi, R_p=r_p,
                    R_inf=r_inf, Lambda_u=lu, q=q, xi=xi,
                    delta=axis_delta, window=tuple(window))


# ---------------------------------------------------------------------------
# eigenmodes

@dataclass(frozen=True)
class EigenMode:
    lam: complex
    psi1: np.ndarray
    psi2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    defect: float
    norm_constant: complex
    grid: Grid


def eigenmode(config: LaserConfig, n, lam: complex,
              grid: Grid | None = None,
              residual_tol: float = 1e-6,
              defect_tol: float = 1e-8) -> EigenMode:
    """Eigenfunction profile at a characteristic root.

    Propagates [r0, 1] through per-cell transfer matrices (scaled, with the
    log magnitude carried separately), fills the polarization from its
    rational slaving formula, and normalizes ||psi|| = 1 with the phase
    fixed by the first nonzero psi1 + psi2 node.
    """
    n = check_carriers(config, n)
    if grid is None:
        grid = make_grid(config)
    c = char_fn(config, n, lam)
    if c.rel_residual > residual_tol:
        raise NotARootError(
            f"|h| residual {c.rel_residual:.3e} exceeds {residual_tol:g} "
            f"at lambda = {lam}")

    nn = grid.n_nodes
    v = np.empty((nn, 2), dtype=complex)
    logs = np.empty(nn)
    v[0] = (complex(config.r0), 1.0)
    logs[0] = 0.0
    cur = np.array(v[0])
    acc = 0.0
    node = 0
    for k, sec in enumerate(config.sections):
        mu = section_mu(sec, n[k], lam)
        mant, x, _ = _scaled_entries(mu, sec.kappa, grid.dz)
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

    shift = logs.max()
    amp = np.exp(logs - shift)
    psi1 = v[:, 0] * amp
    psi2 = v[:, 1] * amp

    # polarization slaving, per node through its section
    node_sec = grid.node_section()
    fac = np.empty(config.m, dtype=complex)
    for k, sec in enumerate(config.sections):
        gam = sec.gamma(n[k])
        den = lam - 1j * sec.omega_r(n[k]) + gam
        fac[k] = gam / den
    p1 = fac[node_sec] * psi1
    p2 = fac[node_sec] * psi2

    w = np.abs(psi1) ** 2 + np.abs(psi2) ** 2
    norm2 = grid.dz * (w.sum() - 0.5 * (w[0] + w[-1]))
    scale = 1.0 / math.sqrt(norm2)
    tot = psi1 + psi2
    nz = np.flatnonzero(np.abs(tot) > 1e-12 * np.abs(tot).max())
    anchor = tot[nz[0]] if len(nz) else 1.0
    phase_fix = abs(anchor) / anchor
    norm_constant = scale * phase_fix
    psi1 = psi1 * norm_constant
    psi2 = psi2 * norm_constant
    p1 = p1 * norm_constant
    p2 = p2 * norm_constant

    defect = abs(psi2[-1] - config.rL * psi1[-1])
    if defect > defect_tol:
        raise NotARootError(
            f"boundary defect {defect:.3e} exceeds {defect_tol:g}; "
            f"lambda = {lam} is not a root")
    return EigenMode(lam=lam, psi1=psi1, psi2=psi2, p1=p1, p2=p2,
                     defect=defect, norm_constant=norm_constant, grid=grid)


# ---------------------------------------------------------------------------
# critical carrier density

def track_root(config: LaserConfig, n_start, n_stop, free_index: int,
               lam_seed: complex, max_step: float = 0.05):
    """Continue a root of h in the free carrier component from n_start to
    n_stop; returns the root at n_stop.  Steps shrink on tracking loss."""
    n = np.array(check_carriers(config, n_start), dtype=float)
    lam = complex(lam_seed)
    x = n[free_index]
    target = float(n_stop)
    step = math.copysign(min(max_step, abs(target - x)), target - x)
    while x != target:
        if abs(target - x) <= abs(step):
            x_next = target
        else:
            x_next = x + step
        nv = n.copy()
        nv[free_index] = x_next
        got = newton_root(config, nv, lam)
        if got is None or abs(got[0] - lam) > 0.45 * math.pi / config.length:
            step *= 0.5
            if abs(step) < 1e-10:
                raise ConvergenceError(
                    f"root tracking lost the branch near n_free = {x:g}")
            continue
        lam = got[0]
        x = x_next
    return lam


def dominant_crossing(config: LaserConfig, n_seed, free_index: int,
                      n_max: float = 5.0, step: float = 0.05):
    """Smallest free-carrier value at which the dominant root of the seed
    spectrum reaches the imaginary axis; returns (n_crit, omega, Spectrum).

    Tracks the dominant eigenvalue upward in the free component, brackets
    Re lambda = 0, then hands over to the two-unknown Newton polish."""
    n = np.array(check_carriers(config, n_seed), dtype=float)
    spec = find_eigenvalues(config, n)
    dom = spec.dominant()
    if dom is None:
        raise ConvergenceError("seed spectrum is empty; widen the window")
    lam = dom.lam
    x = n[free_index]
    if lam.real > 0.0:
        raise DomainError(
            f"seed spectrum already unstable (Re lambda = {lam.real:g})")
    while lam.real < 0.0:
        if x >= n_max:
            raise ConvergenceError(
                f"no axis crossing of the tracked root below n_free = {n_max:g}")
        x_next = min(x + step, n_max)
        lam_next = track_root(config, _with(n, free_index, x), x_next,
                              free_index, lam)
        if lam_next.real >= 0.0:
            # bisect the bracket [x, x_next]
            lo, hi = x, x_next
            lam_lo = lam
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lam_mid = track_root(config, _with(n, free_index, lo), mid,
                                     free_index, lam_lo)
                if lam_mid.real < 0.0:
                    lo, lam_lo = mid, lam_mid
                else:
                    hi = mid
                if hi - lo < 1e-10 or abs(lam_mid.real) < 1e-10:
                    break
            return critical_density_search(
                config, _with(n, free_index, lo), free_index, lam_lo.imag)
        x, lam = x_next, lam_next
    return critical_density_search(config, _with(n, free_index, x),
                                   free_index, lam.imag)


def _with(n, idx, val):
    out = np.array(n, dtype=float)
    out[idx] = val
    return out


def critical_density_search(config: LaserConfig, n_seed, free_index: int,
                            omega_seed: float, maxit: int = 60,
                            tol: float = 1e-12, confirm: bool = True):
    """Solve h(n; i omega) = 0 for (n_free, omega) and confirm the gap.

    Newton on the two real equations Re h = Im h = 0 with a finite
    difference Jacobian; on success the full spectrum is recomputed and
    the rotating-wave criticality (exactly one eigenvalue on the axis,
    all others strictly damped, essential growth below the gap) verified.
    Returns (n_crit, omega, Spectrum).
    """
    n = np.array(check_carriers(config, n_seed), dtype=float)
    if not 0 <= free_index < config.m:
        raise DomainError(f"free index {free_index} out of range")
    x = np.array([n[free_index], float(omega_seed)])

    def fvec(x):
        nv = n.copy()
        nv[free_index] = x[0]
        c = char_fn(config, nv, 1j * x[1])
        return np.array([c.mantissa.real, c.mantissa.imag])

    converged = False
    for _ in range(maxit):
        f0 = fvec(x)
        J = np.empty((2, 2))
        for j in range(2):
            hstep = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += hstep
            J[:, j] = (fvec(xp) - f0) / hstep
        try:
            dx = np.linalg.solve(J, -f0)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in critical search")
        # damp wild steps to stay on the seeded branch
        cap = 0.2 * max(1.0, abs(x[0]))
        if abs(dx[0]) > cap:
            dx *= cap / abs(dx[0])
        wcap = 0.45 * math.pi / config.length
        if abs(dx[1]) > wcap:
            dx *= wcap / abs(dx[1])
        x = x + dx
        floor = config.sections[free_index].n_floor
        if not np.isfinite(x).all() or x[0] <= floor:
            raise ConvergenceError(
                f"critical search left the admissible carrier range at {x}")
        if np.linalg.norm(dx) < tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"critical search did not converge within {maxit} iterations")

    n_crit = n.copy()
    n_crit[free_index] = x[0]
    omega = float(x[1])
    residual = char_fn(config, n_crit, 1j * omega).rel_residual
    if residual > REL_RESIDUAL_TOL:
        raise ConvergenceError(
            f"critical search stalled with residual {residual:.3e}")
    if not confirm:
        return n_crit, omega, None

    win = list(default_window(config, n_crit))
    win[2] = min(win[2], omega - 5.0)
    win[3] = max(win[3], omega + 5.0)
    spec = find_eigenvalues(config, n_crit, window=tuple(win))
    if spec.q != 1:
        raise GapLossError(
            f"expected exactly one eigenvalue on the axis, found q = {spec.q}",
            spectrum=spec)
    if not (spec.xi > 0.0 and spec.R_inf < -spec.xi + 1e-12):
        raise GapLossError(
            f"no spectral gap: xi = {spec.xi:g}, R_inf = {spec.R_inf:g}",
            spectrum=spec)
    return n_crit, omega, spec
