"""Sampling grids and unit-norm dictionaries for sparse recovery.

Angle grids are uniform in the directional cosine (DFT-style sampling);
distance grids are uniform in 1/r, which makes the Fresnel quadratic
phase advance linearly from column to column and thereby equalizes
neighbor-column correlations. A uniform-in-r variant exists purely for
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import ArrayGeometry
from .channel import FAR_FIELD, steering_fresnel_cosines, steering_planar_cosines

__all__ = [
    "ParameterGrid",
    "Dictionary",
    "GridError",
    "angle_grid",
    "angle_dictionary",
    "distance_grid",
    "distance_dictionary",
    "coherence",
]


class GridError(ValueError):
    """Grid request violates an ambiguity or ordering constraint."""


@dataclass(frozen=True)
class ParameterGrid:
    """Ordered sampling points for one parameter axis.

    ``kind`` is 'azimuth', 'elevation' or 'distance'. Angle values are
    directional cosines; distance values are meters, optionally ending in
    the far-field marker (infinity).
    """

    kind: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("azimuth", "elevation", "distance"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or len(v) < 1:
            raise ValueError("grid values must be a non-empty 1D sequence")
        if np.any(np.diff(v) <= 0):
            raise ValueError(f"{self.kind} grid values must be strictly increasing")
        if self.kind != "distance":
            if np.any(np.abs(v) >= 1):
                raise ValueError(f"{self.kind} grid cosines must lie in (-1, 1)")
            if not np.allclose(v + v[::-1], 0.0, atol=1e-12):
                raise ValueError(f"{self.kind} grid must be symmetric about 0")

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def spacing(self) -> float:
        """Smallest finite step between consecutive values."""
        finite = self.values[np.isfinite(self.values)]
        if len(finite) < 2:
            return 0.0
        return float(np.min(np.diff(finite)))


class Dictionary:
    """Unit-norm column dictionary over a parameter grid."""

    def __init__(self, columns: np.ndarray, grid: ParameterGrid):
        columns = np.asarray(columns)
        if columns.ndim != 2:
            raise ValueError("columns must be a 2D matrix")
        if columns.shape[1] != grid.count:
            raise ValueError(
                f"column count {columns.shape[1]} != grid count {grid.count}")
        self.columns = columns
        self.grid = grid

    @property
    def axis_length(self) -> int:
        return self.columns.shape[0]

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]

    @cached_property
    def mutual_coherence(self) -> float:
        return coherence(self)


def angle_grid(count: int, omega_max: float, kind: str = "azimuth",
               d_over_lambda: float = 0.5) -> ParameterGrid:
    """Uniform cosine grid over [-omega_max, omega_max].

    The spacing is 2*omega_max/(count - 1); for odd counts the center
    value is pinned to exactly 0. ``omega_max`` must stay below the
    aliasing bound lambda/(4 d) of the frequency-doubled statistics.
    """
    if count < 2:
        raise GridError(f"angle grid needs count >= 2, got {count}")
    if kind not in ("azimuth", "elevation"):
        raise GridError(f"angle grid kind must be azimuth or elevation, got {kind!r}")
    bound = 1.0 / (4.0 * d_over_lambda)
    if not 0 < omega_max < bound:
        raise GridError(
            f"omega_max={omega_max} outside (0, {bound:g}); beyond lambda/(4d) the "
            f"doubled-frequency phase 2*k*d*omega aliases")
    values = np.linspace(-omega_max, omega_max, count)
    if count % 2 == 1:
        values[count // 2] = 0.0
    return ParameterGrid(kind=kind, values=values)


def angle_dictionary(axis_length: int, grid: ParameterGrid, doubled: bool = False,
                     d_over_lambda: float = 0.5) -> Dictionary:
    """Steering dictionary along one array axis.

    Column i has entries exp(j * f * k * d * m * omega_i) / sqrt(axis_length)
    over the symmetric index range m, with f = 2 when ``doubled`` (matching
    the covariance statistics, whose phases advance at twice the spatial
    frequency) and f = 1 otherwise.
    """
    if grid.kind == "distance":
        raise ValueError("angle_dictionary requires an angular grid")
    if axis_length < 1 or axis_length % 2 == 0:
        raise ValueError(f"axis_length must be odd and >= 1, got {axis_length}")
    half = (axis_length - 1) // 2
    m = np.arange(-half, half + 1)
    factor = 2.0 if doubled else 1.0
    kd = 2.0 * math.pi * d_over_lambda
    phases = factor * kd * np.outer(m, grid.values)
    cols = np.exp(1j * phases) / math.sqrt(axis_length)
    return Dictionary(cols, grid)


def distance_grid(r_min: float, r_max: float, count: int,
                  include_far_field: bool = False,
                  spacing: str = "reciprocal") -> ParameterGrid:
    """Distance grid from r_min to r_max, uniform in 1/r by default.

    ``spacing='uniform'`` samples uniformly in r instead, which is kept
    only as the baseline for the neighbor-correlation comparison. The
    optional far-field point (1/r = 0) is appended last.
    """
    if not 0 < r_min < r_max:
        raise GridError(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    if count < 2:
        raise GridError(f"distance grid needs count >= 2, got {count}")
    if spacing == "reciprocal":
        s = np.linspace(1.0 / r_max, 1.0 / r_min, count)
        values = np.sort(1.0 / s)
    elif spacing == "uniform":
        values = np.linspace(r_min, r_max, count)
    else:
        raise GridError(f"unknown spacing {spacing!r}")
    values[0], values[-1] = r_min, r_max
    if include_far_field:
        values = np.append(values, FAR_FIELD)
    return ParameterGrid(kind="distance", values=values)


def distance_dictionary(geom: ArrayGeometry,
                        cosines: tuple[float, float],
                        grid: ParameterGrid) -> Dictionary:
    """Vectorized Fresnel steering columns along one direction.

    Column i is the unit-norm flattened steering matrix at (omega_y,
    omega_z, r_i); the far-field marker produces the planar column.
    """
    if grid.kind != "distance":
        raise ValueError("distance_dictionary requires a distance grid")
    omega_y, omega_z = cosines
    if omega_z * omega_z >= 1.0 or omega_y * omega_y >= 1.0 - omega_z * omega_z:
        from .geometry import InvalidDirectionError
        raise InvalidDirectionError(
            f"cosine pair ({omega_y}, {omega_z}) is not a physical direction")
    cols = np.empty((geom.n_elements, grid.count), dtype=complex)
    for i, r in enumerate(grid.values):
        if math.isinf(r):
            mat = steering_planar_cosines(geom, omega_y, omega_z)
        else:
            mat = steering_fresnel_cosines(geom, omega_y, omega_z, r)
        v = mat.reshape(-1)
        cols[:, i] = v / np.linalg.norm(v)
    return Dictionary(cols, grid)


def coherence(dictionary: Dictionary, block: int = 1024) -> float:
    """Mutual coherence: max |inner product| over distinct unit columns.

    Computed blockwise so that very wide dictionaries do not materialize
    the full Gram matrix.
    """
    cols = dictionary.columns
    n = cols.shape[1]
    if n < 2:
        raise ValueError("coherence needs at least 2 columns")
    worst = 0.0
    for start in range(0, n, block):
        g = np.abs(cols[:, start:start + block].conj().T @ cols)
        for i in range(g.shape[0]):
            g[i, start + i] = 0.0
        worst = max(worst, float(g.max()))
    return min(worst, 1.0)
