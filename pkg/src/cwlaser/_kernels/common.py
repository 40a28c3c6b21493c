"""Shared coefficient packing for the time-stepping kernels.

Both the compiled and the numpy kernel consume the same flat per-section
arrays so they can implement the identical algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import Grid
from ..params import LaserConfig

GAIN_LINEAR = 0
GAIN_LOG = 1


@dataclass
class CoeffPack:
    kappa: np.ndarray
    d: np.ndarray           # complex
    alpha_h: np.ndarray
    gain_model: np.ndarray  # int8
    gain_slope: np.ndarray
    rho_val: np.ndarray
    rho_slope: np.ndarray
    gam_val: np.ndarray
    gam_slope: np.ndarray
    om_val: np.ndarray
    om_slope: np.ndarray
    current: np.ndarray
    inv_tau: np.ndarray
    inv_len: np.ndarray
    floors: np.ndarray
    sec_start: np.ndarray      # int64, m: first node of section k (expanded)
    sec_end: np.ndarray        # int64, m: last node of section k (expanded)
    node_sec: np.ndarray       # int64, section index per expanded node
    seam: np.ndarray           # int64, right-hand copies of interior interfaces
    r0: complex = 0.0
    rL: complex = 0.0
    scaling: float = 0.0       # field scaling constant P
    dz: float = 0.0


def pack_coefficients(config: LaserConfig, grid: Grid) -> CoeffPack:
    secs = config.sections
    start, end = grid.expanded_bounds()
    return CoeffPack(
        kappa=np.array([s.kappa for s in secs], dtype=float),
        d=np.array([s.d for s in secs], dtype=complex),
        alpha_h=np.array([s.alpha_h for s in secs], dtype=float),
        gain_model=np.array(
            [GAIN_LOG if s.gain_model == "log" else GAIN_LINEAR for s in secs],
            dtype=np.int8),
        gain_slope=np.array([s.gain_slope for s in secs], dtype=float),
        rho_val=np.array([s.rho.value for s in secs], dtype=float),
        rho_slope=np.array([s.rho.slope for s in secs], dtype=float),
        gam_val=np.array([s.gamma.value for s in secs], dtype=float),
        gam_slope=np.array([s.gamma.slope for s in secs], dtype=float),
        om_val=np.array([s.omega_r.value for s in secs], dtype=float),
        om_slope=np.array([s.omega_r.slope for s in secs], dtype=float),
        current=np.array([s.current for s in secs], dtype=float),
        inv_tau=np.array([1.0 / s.lifetime for s in secs], dtype=float),
        inv_len=np.array([1.0 / s.length for s in secs], dtype=float),
        floors=config.floors(),
        sec_start=start,
        sec_end=end,
        node_sec=np.repeat(np.arange(config.m, dtype=np.int64),
                           end - start + 1),
        seam=start[1:].copy(),
        r0=complex(config.r0),
        rL=complex(config.rL),
        scaling=config.scaling,
        dz=grid.dz,
    )
