# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernel.

Implements exactly the same split-step algorithm as step_numpy.advance;
the numpy module is the readable reference, this one removes the
per-step Python overhead for long runs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, log

from ..errors import SimulationError

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double complex csqrt(double complex)
    double complex ccosh(double complex)
    double complex csinh(double complex)
    double complex conj(double complex)
    double cabs(double complex)
    double creal(double complex)
    double cimag(double complex)

DEF GAIN_LOG = 1


cdef inline void _expm2x2(double complex a, double complex b,
                          double complex cc, double complex d, double h,
                          double complex* e11, double complex* e12,
                          double complex* e21, double complex* e22) nogil:
    cdef double complex tr = 0.5 * (a + d)
    cdef double complex dif = 0.5 * (a - d)
    cdef double complex delta = csqrt(dif * dif + b * cc)
    cdef double complex x = delta * h
    cdef double complex sfac, ch, ph
    if cabs(x) < 1e-6:
        sfac = h * (1.0 + x * x / 6.0)
    else:
        sfac = csinh(x) / delta
    ch = ccosh(x)
    ph = cexp(tr * h)
    e11[0] = ph * (ch + sfac * dif)
    e12[0] = ph * (sfac * b)
    e21[0] = ph * (sfac * cc)
    e22[0] = ph * (ch - sfac * dif)


def advance(double complex[::1] psi1, double complex[::1] psi2,
            double complex[::1] p1, double complex[::1] p2,
            double[::1] n, double t, long nsteps,
            double complex[::1] s_psi1, double complex[::1] s_psi2,
            double complex[::1] s_p1, double complex[::1] s_p2,
            # coefficient pack
            double[::1] kappa, double complex[::1] dcoef, double[::1] alpha_h,
            signed char[::1] gain_model, double[::1] gain_slope,
            double[::1] rho_val, double[::1] rho_slope,
            double[::1] gam_val, double[::1] gam_slope,
            double[::1] om_val, double[::1] om_slope,
            double[::1] current, double[::1] inv_tau, double[::1] inv_len,
            double[::1] floors, long[::1] sec_start, long[::1] sec_end,
            long[::1] node_sec, long[::1] seam,
            double complex r0, double complex rL, double scaling, double dz,
            double[::1] inj_times, double complex[::1] inj_vals):
    """Advance nsteps in place; returns the new time."""
    cdef Py_ssize_t m = n.shape[0]
    cdef Py_ssize_t nn = psi1.shape[0]
    cdef Py_ssize_t last = nn - 1
    cdef Py_ssize_t nt = inj_times.shape[0]
    cdef double dt = dz
    cdef double h = 0.5 * dt

    cdef cnp.ndarray buf = np.empty((9, m), dtype=complex)
    cdef double complex[:, ::1] prop = buf
    cdef cnp.ndarray nbuf = np.empty((3, m), dtype=float)
    cdef double[:, ::1] nwork = nbuf

    cdef Py_ssize_t step, j, k, a, b
    cdef long cur = 0
    cdef double t_new, g, rho, gam, om, w, wsum, trap, f, nm
    cdef double complex beta, pole, inj, up, um, qp, qm, up2, um2, qp2, qm2
    cdef double complex a1, a2, b1, b2
    cdef bint sources
    cdef int fail_k = -1
    cdef double fail_n = 0.0

    while cur < nt and inj_times[cur] <= t:
        cur += 1

    for step in range(nsteps):
        t_new = t + dt
        # --- carrier rate at the old state -> predictor n_mid
        for k in range(m):
            nm = n[k]
            if gain_model[k] == GAIN_LOG:
                g = gain_slope[k] * log(nm if nm > 1e-300 else 1e-300)
            else:
                g = gain_slope[k] * (nm - 1.0)
            rho = rho_val[k] + rho_slope[k] * (nm - 1.0)
            a = sec_start[k]
            b = sec_end[k]
            wsum = 0.0
            for j in range(a, b + 1):
                w = ((g - rho) * (creal(psi1[j]) ** 2 + cimag(psi1[j]) ** 2
                                  + creal(psi2[j]) ** 2 + cimag(psi2[j]) ** 2)
                     + rho * (creal(conj(psi1[j]) * p1[j])
                              + creal(conj(psi2[j]) * p2[j])))
                if j == a or j == b:
                    wsum += 0.5 * w
                else:
                    wsum += w
            trap = dz * wsum
            f = current[k] - n[k] * inv_tau[k] - scaling * inv_len[k] * trap
            nwork[0, k] = f
            nwork[1, k] = n[k] + 0.5 * dt * f
            if not isfinite(nwork[1, k]) or nwork[1, k] <= floors[k]:
                raise SimulationError(
                    f"carrier floor breach: n_{k} = {nwork[1, k]:g} <= {floors[k]:g}",
                    t=t)

        # --- per-section half-step propagators at n_mid
        sources = False
        for k in range(m):
            nm = nwork[1, k]
            if gain_model[k] == GAIN_LOG:
                g = gain_slope[k] * log(nm if nm > 1e-300 else 1e-300)
            else:
                g = gain_slope[k] * (nm - 1.0)
            rho = rho_val[k] + rho_slope[k] * (nm - 1.0)
            gam = gam_val[k] + gam_slope[k] * (nm - 1.0)
            om = om_val[k] + om_slope[k] * (nm - 1.0)
            beta = (1.0 + 1j * alpha_h[k]) * g - dcoef[k] - rho
            pole = 1j * om - gam
            _expm2x2(beta - 1j * kappa[k], rho, gam, pole, h,
                     &prop[0, k], &prop[1, k], &prop[2, k], &prop[3, k])
            _expm2x2(beta + 1j * kappa[k], rho, gam, pole, h,
                     &prop[4, k], &prop[5, k], &prop[6, k], &prop[7, k])
            if (prop[0, k] != 1.0 or prop[1, k] != 0.0 or prop[2, k] != 0.0
                    or prop[3, k] != 1.0 or prop[4, k] != 1.0
                    or prop[5, k] != 0.0 or prop[6, k] != 0.0
                    or prop[7, k] != 1.0):
                sources = True

        # --- save old field for the time-averaged carrier corrector
        for j in range(nn):
            s_psi1[j] = psi1[j]
            s_psi2[j] = psi2[j]
            s_p1[j] = p1[j]
            s_p2[j] = p2[j]

        if sources:
            _half(psi1, psi2, p1, p2, prop, node_sec)

        # exact transport: psi1 one cell right, psi2 one cell left; seam
        # copies take the value transported from their own upwind side
        for j in range(last, 0, -1):
            psi1[j] = psi1[j - 1]
        for j in range(last):
            psi2[j] = psi2[j + 1]
        for j in range(seam.shape[0]):
            psi1[seam[j]] = psi1[seam[j] - 1]
            psi2[seam[j] - 1] = psi2[seam[j]]
        while cur < nt and inj_times[cur] <= t_new:
            cur += 1
        inj = inj_vals[cur]
        psi1[0] = r0 * psi2[0] + inj
        psi2[last] = rL * psi1[last]
        if sources:
            _half(psi1, psi2, p1, p2, prop, node_sec)
            for j in range(seam.shape[0]):
                psi1[seam[j]] = psi1[seam[j] - 1]
                psi2[seam[j] - 1] = psi2[seam[j]]
            psi1[0] = r0 * psi2[0] + inj
            psi2[last] = rL * psi1[last]

        # --- carrier corrector on the time-averaged field
        for k in range(m):
            nm = nwork[1, k]
            if gain_model[k] == GAIN_LOG:
                g = gain_slope[k] * log(nm if nm > 1e-300 else 1e-300)
            else:
                g = gain_slope[k] * (nm - 1.0)
            rho = rho_val[k] + rho_slope[k] * (nm - 1.0)
            a = sec_start[k]
            b = sec_end[k]
            wsum = 0.0
            for j in range(a, b + 1):
                a1 = 0.5 * (psi1[j] + s_psi1[j])
                a2 = 0.5 * (psi2[j] + s_psi2[j])
                b1 = 0.5 * (p1[j] + s_p1[j])
                b2 = 0.5 * (p2[j] + s_p2[j])
                w = ((g - rho) * (creal(a1) ** 2 + cimag(a1) ** 2
                                  + creal(a2) ** 2 + cimag(a2) ** 2)
                     + rho * (creal(conj(a1) * b1) + creal(conj(a2) * b2)))
                if j == a or j == b:
                    wsum += 0.5 * w
                else:
                    wsum += w
            trap = dz * wsum
            f = current[k] - nm * inv_tau[k] - scaling * inv_len[k] * trap
            n[k] = n[k] + dt * f
            if not isfinite(n[k]) or n[k] <= floors[k]:
                raise SimulationError(
                    f"carrier floor breach: n_{k} = {n[k]:g} <= {floors[k]:g}",
                    t=t_new)
        t = t_new

    for j in range(nn):
        if not (isfinite(creal(psi1[j])) and isfinite(cimag(psi1[j]))
                and isfinite(creal(psi2[j])) and isfinite(cimag(psi2[j]))
                and isfinite(creal(p1[j])) and isfinite(cimag(p1[j]))
                and isfinite(creal(p2[j])) and isfinite(cimag(p2[j]))):
            raise SimulationError("field values became non-finite", t=t)
    return t


cdef void _half(double complex[::1] psi1, double complex[::1] psi2,
                double complex[::1] p1, double complex[::1] p2,
                double complex[:, ::1] prop, long[::1] node_sec) nogil:
    cdef Py_ssize_t j, s
    cdef double complex up, um, qp, qm, up2, um2, qp2, qm2
    for j in range(psi1.shape[0]):
        s = node_sec[j]
        up = psi1[j] + psi2[j]
        um = psi1[j] - psi2[j]
        qp = p1[j] + p2[j]
        qm = p1[j] - p2[j]
        up2 = prop[0, s] * up + prop[1, s] * qp
        qp2 = prop[2, s] * up + prop[3, s] * qp
        um2 = prop[4, s] * um + prop[5, s] * qm
        qm2 = prop[6, s] * um + prop[7, s] * qm
        psi1[j] = 0.5 * (up2 + um2)
        psi2[j] = 0.5 * (up2 - um2)
        p1[j] = 0.5 * (qp2 + qm2)
        p2[j] = 0.5 * (qp2 - qm2)
