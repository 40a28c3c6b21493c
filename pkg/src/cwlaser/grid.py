"""Uniform z-grid with section boundaries locked onto grid nodes.

The time stepper uses dt = dz (unit characteristic speeds), so transport is
an exact one-cell shift.  That requires every section length to be an
integer multiple of dz; the construction below picks the cell count per
section from the rational structure of the length ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .params import LaserConfig

# Cap on the rational approximation of length ratios.  Large enough for any
# practical section layout, small enough that irrational ratios fail the
# boundary-placement check instead of producing million-cell grids.
_MAX_DENOMINATOR = 4096


@dataclass(frozen=True)
class Grid:
    dz: float
    z: np.ndarray            # node coordinates, length N + 1
    cells_per_section: np.ndarray   # int, length m
    section_nodes: np.ndarray       # int, length m + 1; node index of each boundary

    @property
    def n_cells(self) -> int:
        return len(self.z) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.z)

    def node_section(self) -> np.ndarray:
        """Section index per node (boundary nodes belong to the right section)."""
        idx = np.searchsorted(self.section_nodes[1:-1], np.arange(self.n_nodes),
                              side="right")
        return idx.astype(np.int64)

    def section_slice(self, k: int) -> slice:
        """Node slice covering section k including both boundary nodes."""
        return slice(int(self.section_nodes[k]), int(self.section_nodes[k + 1]) + 1)

    # -- expanded layout with duplicated interface nodes ----------------
    # The time stepper stores interior section interfaces twice, once per
    # adjacent section, so that each copy evolves with its own section's
    # coefficients (psi stays continuous by construction; the one-sided
    # polarization limits genuinely differ).

    @property
    def n_expanded(self) -> int:
        return self.n_nodes + len(self.cells_per_section) - 1

    def expanded_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-section (start, end) node indices in the expanded layout."""
        m = len(self.cells_per_section)
        ks = np.arange(m, dtype=np.int64)
        start = self.section_nodes[:-1].astype(np.int64) + ks
        end = self.section_nodes[1:].astype(np.int64) + ks
        return start, end

    def expand_map(self) -> np.ndarray:
        """For each expanded index, the plain node index it mirrors."""
        start, end = self.expanded_bounds()
        out = np.empty(self.n_expanded, dtype=np.int64)
        for k in range(len(start)):
            sl = slice(int(start[k]), int(end[k]) + 1)
            out[sl] = np.arange(self.section_nodes[k],
                                self.section_nodes[k + 1] + 1)
        return out

    def collapse_map(self) -> np.ndarray:
        """For each plain node, its expanded index (interface nodes map to
        the right-section copy, matching node_section())."""
        return np.arange(self.n_nodes, dtype=np.int64) + self.node_section()


def make_grid(config: LaserConfig, target_cells: int = 256) -> Grid:
    """Build a uniform grid with at least ``target_cells`` cells.

    Section lengths must have (nearly) rational ratios; otherwise no uniform
    dz can hit every section boundary and a ConfigError is raised.
    """
    if target_cells < 1:
        raise ConfigError("target_cells must be >= 1")
    lengths = [s.length for s in config.sections]
    fracs = [Fraction(l / lengths[0]).limit_denominator(_MAX_DENOMINATOR)
             for l in lengths]
    base = math.lcm(*[f.denominator for f in fracs])
    unit = np.array([int(f * base) for f in fracs], dtype=np.int64)
    total_unit = int(unit.sum())
    mult = max(1, math.ceil(target_cells / total_unit))
    cells = unit * mult
    n = int(cells.sum())
    length = config.length
    dz = length / n
    for k, l in enumerate(lengths):
        if abs(cells[k] * dz - l) > 1e-9 * max(1.0, l):
            raise ConfigError(
                f"section lengths {lengths} are not commensurable; cannot place "
                "all section boundaries on a uniform grid")
    section_nodes = np.concatenate([[0], np.cumsum(cells)]).astype(np.int64)
    z = np.linspace(0.0, length, n + 1)
    return Grid(dz=dz, z=z, cells_per_section=cells, section_nodes=section_nodes)
