"""Kernel backend selection.

The compiled Cython kernel is preferred when its extension module imported
successfully; otherwise the numpy implementation of the identical algorithm
is used.  Set CWLASER_BACKEND=numpy or CWLASER_BACKEND=compiled to force a
choice (forcing the compiled kernel raises if it is unavailable).
"""

from __future__ import annotations

import os

from . import step_numpy
from .common import CoeffPack, pack_coefficients

try:
    from . import _step_cy
except ImportError:
    _step_cy = None

_requested = os.environ.get("CWLASER_BACKEND", "").strip().lower()
if _requested in ("", "auto"):
    BACKEND = "compiled" if _step_cy is not None else "numpy"
elif _requested in ("compiled", "cython"):
    if _step_cy is None:
        raise ImportError(
            "CWLASER_BACKEND=compiled but the extension module is not built")
    BACKEND = "compiled"
elif _requested == "numpy":
    BACKEND = "numpy"
else:
    raise ImportError(f"unknown CWLASER_BACKEND value {_requested!r}")


def _advance_compiled(ws, nsteps: int) -> None:
    c = ws.coeff
    ws.t = _step_cy.advance(
        ws.psi1, ws.psi2, ws.p1, ws.p2, ws.n, ws.t, nsteps,
        ws.s_psi1, ws.s_psi2, ws.s_p1, ws.s_p2,
        c.kappa, c.d, c.alpha_h, c.gain_model, c.gain_slope,
        c.rho_val, c.rho_slope, c.gam_val, c.gam_slope,
        c.om_val, c.om_slope, c.current, c.inv_tau, c.inv_len,
        c.floors, c.sec_start, c.sec_end, c.node_sec, c.seam,
        c.r0, c.rL, c.scaling, c.dz,
        ws.inj_times, ws.inj_values)


def advance(ws, nsteps: int, backend: str | None = None) -> None:
    """Advance a workspace in place with the selected backend."""
    which = backend or BACKEND
    if which == "compiled":
        _advance_compiled(ws, nsteps)
    else:
        step_numpy.advance(ws, nsteps)


__all__ = ["BACKEND", "CoeffPack", "advance", "pack_coefficients", "step_numpy"]
