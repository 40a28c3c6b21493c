"""Independent cross-check numerics.

Everything here deliberately uses a different algorithm family than the
code it verifies: brute-force RK4 instead of closed-form exponentials,
matrix-pencil exponential fitting instead of root finding, and finite
differences instead of transfer-matrix propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .grid import Grid
from .params import LaserConfig, SectionParams, check_carriers
from .spectral import section_mu


def transfer_by_integration(section: SectionParams, nu: float, lam: complex,
                            z: float, steps: int = 10000) -> np.ndarray:
    """Fundamental matrix of psi' = [[-mu, -ik], [ik, mu]] psi by RK4."""
    mu = section_mu(section, nu, lam)
    kap = section.kappa
    A = np.array([[-mu, -1j * kap], [1j * kap, mu]])
    return _rk4_fundamental(A[None], z, steps)[0]


def transfer_by_integration_batch(mus, kappas, z, steps: int = 10000):
    """Vectorized RK4 fundamental matrices for many (mu, kappa) samples."""
    mus = np.asarray(mus, dtype=complex)
    kappas = np.asarray(kappas, dtype=float)
    A = np.zeros((len(mus), 2, 2), dtype=complex)
    A[:, 0, 0] = -mus
    A[:, 1, 1] = mus
    A[:, 0, 1] = -1j * kappas
    A[:, 1, 0] = 1j * kappas
    return _rk4_fundamental(A, z, steps)


def _rk4_fundamental(A: np.ndarray, z: float, steps: int) -> np.ndarray:
    """One RK4 step of the matrix ODE Y' = A Y is linear in Y, so the whole
    integration is the step matrix applied ``steps`` times."""
    h = z / steps
    eye = np.broadcast_to(np.eye(2, dtype=complex), A.shape)
    hA = h * A
    hA2 = hA @ hA
    S = eye + hA + hA2 / 2.0 + (hA2 @ hA) / 6.0 + (hA2 @ hA2) / 24.0
    Y = np.array(eye)
    for _ in range(steps):
        Y = S @ Y
    return Y


@dataclass(frozen=True)
class ModalFit:
    """Complex exponential fit y(t) ~ sum_j c_j exp(lambda_j (t - t0))."""

    rates: np.ndarray       # complex lambda-hat, sorted by descending Re
    amplitudes: np.ndarray
    residual: float         # relative l2 misfit on the fit window
    window: tuple           # (t_start, t_end)


def modal_fit(t: np.ndarray, y: np.ndarray, n_modes: int = 2,
              skip_fraction: float = 0.3,
              max_residual: float = 1e-2) -> ModalFit:
    """Fit dominant complex exponentials to a uniformly sampled series.

    Matrix-pencil method: shift-invariance of the signal subspace of a
    Hankel matrix gives the pole estimates, amplitudes follow by least
    squares.  The fit is rejected (error raised) when the relative
    residual exceeds ``max_residual``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=complex)
    if len(t) != len(y) or len(t) < 8:
        raise ValueError("need matching series with at least 8 samples")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-8, atol=1e-12 * max(dt, 1.0)):
        raise ValueError("modal_fit requires uniform sampling")
    start = int(len(y) * skip_fraction)
    ys = y[start:]
    ts = t[start:]
    M = len(ys)
    L = max(n_modes + 2, M // 3)
    if M - L < n_modes + 1:
        raise ValueError("series too short for the requested mode count")

    # Hankel matrix, signal subspace from the SVD
    H = np.lib.stride_tricks.sliding_window_view(ys, L + 1)
    _, s, Vh = np.linalg.svd(H, full_matrices=False)
    V = Vh[:n_modes].T                   # (L+1, K) basis of the row space
    V1 = V[:-1]
    V2 = V[1:]
    poles = np.linalg.eigvals(np.linalg.pinv(V1) @ V2)
    rates = np.log(poles) / dt

    # amplitudes by least squares on the Vandermonde system
    E = np.exp(np.outer(ts - ts[0], rates))
    amps, *_ = np.linalg.lstsq(E, ys, rcond=None)
    fit = E @ amps
    denom = np.linalg.norm(ys)
    residual = float(np.linalg.norm(ys - fit) / denom) if denom > 0 else 0.0
    if residual > max_residual:
        raise ConvergenceError(
            f"modal fit rejected: relative residual {residual:.3e} > "
            f"{max_residual:g}")
    order = np.argsort(-rates.real)
    return ModalFit(rates=rates[order], amplitudes=amps[order],
                    residual=residual, window=(float(ts[0]), float(ts[-1])))


def _deriv4(f: np.ndarray, dz: float) -> np.ndarray:
    """4th-order first derivative with one-sided stencils at block ends."""
    n = len(f)
    out = np.empty_like(f)
    if n < 5:
        raise ValueError("need at least 5 nodes per section for 4th order")
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * dz)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2]
              + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * dz)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2]
              - 6.0 * f[3] + f[4]) / (12.0 * dz)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3]
               + 6.0 * f[-4] - f[-5]) / (12.0 * dz)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3]
               - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * dz)
    return out


def apply_H_fd(config: LaserConfig, n, grid: Grid,
               psi1, psi2, p1, p2):
    """Apply the frozen-carrier field operator with finite differences.

    The z-derivative is evaluated section by section (one-sided stencils
    at facets and interfaces, where the eigenfunction derivative jumps);
    all local source terms use the exact coefficients.
    """
    n = check_carriers(config, n)
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    p1 = np.asarray(p1, dtype=complex)
    p2 = np.asarray(p2, dtype=complex)
    d1 = np.empty_like(psi1)
    d2 = np.empty_like(psi2)
    for k in range(config.m):
        sl = grid.section_slice(k)
        d1[sl] = _deriv4(psi1[sl], grid.dz)
        d2[sl] = _deriv4(psi2[sl], grid.dz)

    node_sec = grid.node_section()
    from .params import propagation_coefficient
    beta = np.array([propagation_coefficient(s, n[k])
                     for k, s in enumerate(config.sections)])[node_sec]
    kap = np.array([s.kappa for s in config.sections])[node_sec]
    rho = np.array([s.rho(n[k]) for k, s in enumerate(config.sections)])[node_sec]
    gam = np.array([s.gamma(n[k]) for k, s in enumerate(config.sections)])[node_sec]
    om = np.array([s.omega_r(n[k]) for k, s in enumerate(config.sections)])[node_sec]

    out_psi1 = -d1 - 1j * kap * psi2 + beta * psi1 + rho * p1
    out_psi2 = d2 - 1j * kap * psi1 + beta * psi2 + rho * p2
    out_p1 = gam * psi1 + (1j * om - gam) * p1
    out_p2 = gam * psi2 + (1j * om - gam) * p2
    return out_psi1, out_psi2, out_p1, out_p2
