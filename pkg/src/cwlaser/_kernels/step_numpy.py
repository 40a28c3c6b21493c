"""Pure-numpy time stepper (fallback when the compiled kernel is absent).

One step of size dt = dz:
  1. carrier rate at the old state, half-step predictor n_mid,
  2. Strang split for the field: exact half-step exponential of the local
     source matrix (in the sum/difference wave basis it decouples into two
     2x2 blocks), exact one-cell transport shift, boundary refresh, second
     half-step exponential, boundary refresh,
  3. carrier corrector with the trapezoid section integrals evaluated on
     the time-averaged field.
With all source coefficients zero the scheme reduces to exact transport.
"""

from __future__ import annotations

import numpy as np

from ..errors import SimulationError
from .common import GAIN_LOG, CoeffPack


def _gain(c: CoeffPack, nv: np.ndarray) -> np.ndarray:
    lin = c.gain_slope * (nv - 1.0)
    if not np.any(c.gain_model == GAIN_LOG):
        return lin
    with np.errstate(invalid="ignore", divide="ignore"):
        log = c.gain_slope * np.log(np.maximum(nv, 1e-300))
    return np.where(c.gain_model == GAIN_LOG, log, lin)


def _expm2x2(a, b, cc, d, h):
    """Entrywise exp(h * [[a, b], [cc, d]]) for arrays of 2x2 blocks."""
    tr = 0.5 * (a + d)
    dif = 0.5 * (a - d)
    delta = np.sqrt(dif * dif + b * cc + 0j)
    x = delta * h
    small = np.abs(x) < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        sfac = np.where(small, h * (1.0 + x * x / 6.0),
                        np.sinh(x) / np.where(small, 1.0, delta))
    ch = np.cosh(x)
    ph = np.exp(tr * h)
    return ph * (ch + sfac * dif), ph * (sfac * b), ph * (sfac * cc), ph * (ch - sfac * dif)


def _half_propagators(c: CoeffPack, nv: np.ndarray, h: float):
    """Per-section 2x2 half-step propagators in the (psi1 +- psi2) basis."""
    g = _gain(c, nv)
    rho = c.rho_val + c.rho_slope * (nv - 1.0)
    gam = c.gam_val + c.gam_slope * (nv - 1.0)
    om = c.om_val + c.om_slope * (nv - 1.0)
    beta = (1.0 + 1j * c.alpha_h) * g - c.d - rho
    pole = 1j * om - gam
    plus = _expm2x2(beta - 1j * c.kappa, rho + 0j, gam + 0j, pole, h)
    minus = _expm2x2(beta + 1j * c.kappa, rho + 0j, gam + 0j, pole, h)
    return plus, minus


def _is_identity(prop):
    e11, e12, e21, e22 = prop
    return (np.all(e11 == 1.0) and np.all(e12 == 0.0)
            and np.all(e21 == 0.0) and np.all(e22 == 1.0))


def _apply_half(ws, plus, minus):
    ns = ws.coeff.node_sec
    e11p, e12p, e21p, e22p = (e[ns] for e in plus)
    e11m, e12m, e21m, e22m = (e[ns] for e in minus)
    up = ws.psi1 + ws.psi2
    um = ws.psi1 - ws.psi2
    qp = ws.p1 + ws.p2
    qm = ws.p1 - ws.p2
    up2 = e11p * up + e12p * qp
    qp2 = e21p * up + e22p * qp
    um2 = e11m * um + e12m * qm
    qm2 = e21m * um + e22m * qm
    ws.psi1[:] = 0.5 * (up2 + um2)
    ws.psi2[:] = 0.5 * (up2 - um2)
    ws.p1[:] = 0.5 * (qp2 + qm2)
    ws.p2[:] = 0.5 * (qp2 - qm2)


def carrier_rate(c: CoeffPack, nv, psi1, psi2, p1, p2) -> np.ndarray:
    """Carrier density rate: pump - decay - stimulated recombination."""
    g = _gain(c, nv)
    rho = c.rho_val + c.rho_slope * (nv - 1.0)
    out = np.empty(len(nv))
    for k in range(len(nv)):
        sl = slice(int(c.sec_start[k]), int(c.sec_end[k]) + 1)
        w = ((g[k] - rho[k])
             * (np.abs(psi1[sl]) ** 2 + np.abs(psi2[sl]) ** 2)
             + rho[k] * (np.conj(psi1[sl]) * p1[sl]
                         + np.conj(psi2[sl]) * p2[sl]).real)
        trap = c.dz * (w.sum() - 0.5 * (w[0] + w[-1]))
        out[k] = (c.current[k] - nv[k] * c.inv_tau[k]
                  - c.scaling * c.inv_len[k] * trap)
    return out


def _check_floor(c: CoeffPack, nv, t):
    if not np.all(np.isfinite(nv)):
        raise SimulationError("carrier density became non-finite", t=t)
    if np.any(nv <= c.floors):
        k = int(np.argmax(nv <= c.floors))
        raise SimulationError(
            f"carrier floor breach: n_{k} = {nv[k]:g} <= {c.floors[k]:g}", t=t)


def advance(ws, nsteps: int) -> None:
    """Advance the workspace ``nsteps`` steps of size dt = dz in place."""
    c = ws.coeff
    dt = c.dz
    last = len(ws.psi1) - 1
    for _ in range(nsteps):
        t_new = ws.t + dt
        f_old = carrier_rate(c, ws.n, ws.psi1, ws.psi2, ws.p1, ws.p2)
        n_mid = ws.n + 0.5 * dt * f_old
        _check_floor(c, n_mid, ws.t)
        plus, minus = _half_propagators(c, n_mid, 0.5 * dt)
        # keep pure transport exact to round-off when all sources vanish
        sources = not (_is_identity(plus) and _is_identity(minus))

        ws.s_psi1[:] = ws.psi1
        ws.s_psi2[:] = ws.psi2
        ws.s_p1[:] = ws.p1
        ws.s_p2[:] = ws.p2

        if sources:
            _apply_half(ws, plus, minus)
        # exact transport: psi1 one cell right, psi2 one cell left; the
        # duplicated interface copies both take the value transported from
        # their own upwind side (the plain shift lands on the twin copy)
        ws.psi1[1:] = ws.psi1[:-1].copy()
        ws.psi2[:-1] = ws.psi2[1:].copy()
        ws.psi1[c.seam] = ws.psi1[c.seam - 1]
        ws.psi2[c.seam - 1] = ws.psi2[c.seam]
        inj = ws.injection_value(t_new)
        ws.psi1[0] = c.r0 * ws.psi2[0] + inj
        ws.psi2[last] = c.rL * ws.psi1[last]
        if sources:
            _apply_half(ws, plus, minus)
            # re-impose psi continuity across interfaces: each direction is
            # authoritative on its upwind side
            ws.psi1[c.seam] = ws.psi1[c.seam - 1]
            ws.psi2[c.seam - 1] = ws.psi2[c.seam]
            ws.psi1[0] = c.r0 * ws.psi2[0] + inj
            ws.psi2[last] = c.rL * ws.psi1[last]

        f_mid = carrier_rate(c, n_mid,
                             0.5 * (ws.psi1 + ws.s_psi1),
                             0.5 * (ws.psi2 + ws.s_psi2),
                             0.5 * (ws.p1 + ws.s_p1),
                             0.5 * (ws.p2 + ws.s_p2))
        ws.n += dt * f_mid
        _check_floor(c, ws.n, t_new)
        ws.t = t_new
    if not (np.all(np.isfinite(ws.psi1)) and np.all(np.isfinite(ws.psi2))
            and np.all(np.isfinite(ws.p1)) and np.all(np.isfinite(ws.p2))):
        raise SimulationError("field values became non-finite", t=ws.t)
