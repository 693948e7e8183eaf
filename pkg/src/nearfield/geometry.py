"""Uniform planar array geometry and direction-cosine transforms.

The array lies in the x = 0 plane. Element (m, n) sits at (0, m*d, n*d)
with m in {-(n_y-1)/2, ..., (n_y-1)/2} and n in {-(n_z-1)/2, ..., (n_z-1)/2}.
Both dimensions must be odd so that a physical center element (0, 0)
exists; the point-symmetric index pairs used by the covariance statistics
are exact only in that case.

A source direction is parameterized by azimuth theta (rotation toward the
y axis) and elevation phi (rotation toward the z axis). The directional
cosines are Omega_y = cos(phi)*sin(theta) and Omega_z = sin(phi); they are
the spatial frequencies seen along the two array axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArrayGeometry",
    "Direction",
    "InvalidDirectionError",
    "element_positions",
    "direction_cosines",
    "direction_from_cosines",
    "rayleigh_distance",
]


class InvalidDirectionError(ValueError):
    """Cosine pair outside the physical front half-space."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with odd dimensions, centered at the origin.

    Attributes
    ----------
    n_y : int
        Number of elements along the horizontal (y) axis; odd.
    n_z : int
        Number of elements along the vertical (z) axis; odd.
    spacing_d : float
        Inter-element spacing in meters.
    wavelength : float
        Carrier wavelength in meters.
    """

    n_y: int
    n_z: int
    spacing_d: float
    wavelength: float

    def __post_init__(self) -> None:
        for name, value in (("n_y", self.n_y), ("n_z", self.n_z)):
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            if value % 2 == 0:
                raise ValueError(f"{name} must be odd, got {value}")
        if not self.spacing_d > 0:
            raise ValueError(f"spacing_d must be > 0, got {self.spacing_d}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")

    @property
    def n_elements(self) -> int:
        return self.n_y * self.n_z

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def d_over_lambda(self) -> float:
        return self.spacing_d / self.wavelength

    def m_indices(self) -> np.ndarray:
        """Signed horizontal element indices, length n_y."""
        half = (self.n_y - 1) // 2
        return np.arange(-half, half + 1)

    def n_indices(self) -> np.ndarray:
        """Signed vertical element indices, length n_z."""
        half = (self.n_z - 1) // 2
        return np.arange(-half, half + 1)

    def index_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """(m, n) index grids of shape (n_z, n_y); rows follow n, columns m."""
        return np.meshgrid(self.m_indices(), self.n_indices())

    def aperture(self) -> float:
        """Diagonal of the element bounding box, in meters."""
        return math.hypot((self.n_y - 1) * self.spacing_d,
                          (self.n_z - 1) * self.spacing_d)

    def center_indices(self) -> tuple[int, int]:
        """(row, column) array index of element (m, n) = (0, 0)."""
        return (self.n_z - 1) // 2, (self.n_y - 1) // 2


@dataclass(frozen=True)
class Direction:
    """Azimuth/elevation pair in radians, both restricted to (-pi/2, pi/2)."""

    theta: float
    phi: float

    def __post_init__(self) -> None:
        half_pi = math.pi / 2
        if not -half_pi < self.theta < half_pi:
            raise ValueError(f"theta must lie in (-pi/2, pi/2), got {self.theta}")
        if not -half_pi < self.phi < half_pi:
            raise ValueError(f"phi must lie in (-pi/2, pi/2), got {self.phi}")

    def unit_vector(self) -> np.ndarray:
        """Unit propagation vector (x, y, z) toward the source."""
        return np.array([
            math.cos(self.phi) * math.cos(self.theta),
            math.cos(self.phi) * math.sin(self.theta),
            math.sin(self.phi),
        ])


def element_positions(geom: ArrayGeometry) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Element index pairs and 3D positions, row-major over (n, m).

    Returns exactly n_y * n_z entries; the entry for (0, 0) is the zero
    vector. The ordering matches C-order flattening of the (n_z, n_y)
    snapshot matrices used throughout the package.
    """
    d = geom.spacing_d
    out = []
    for n in geom.n_indices():
        for m in geom.m_indices():
            out.append(((int(m), int(n)), np.array([0.0, m * d, n * d])))
    return out


def direction_cosines(direction: Direction) -> tuple[float, float]:
    """Directional cosines (Omega_y, Omega_z) of a direction."""
    omega_y = math.cos(direction.phi) * math.sin(direction.theta)
    omega_z = math.sin(direction.phi)
    return omega_y, omega_z


def direction_from_cosines(omega_y: float, omega_z: float) -> Direction:
    """Inverse of :func:`direction_cosines`.

    Raises
    ------
    InvalidDirectionError
        If the pair cannot come from a front-half-space direction, i.e.
        Omega_z**2 >= 1 or Omega_y**2 >= 1 - Omega_z**2. This signals an
        off-grid or spurious recovery rather than a programming error.
    """
    if omega_z * omega_z >= 1.0:
        raise InvalidDirectionError(
            f"omega_z={omega_z} has no physical elevation (|omega_z| must be < 1)")
    if omega_y * omega_y >= 1.0 - omega_z * omega_z:
        raise InvalidDirectionError(
            f"cosine pair ({omega_y}, {omega_z}) violates "
            f"omega_y**2 < 1 - omega_z**2")
    phi = math.asin(omega_z)
    theta = math.asin(omega_y / math.cos(phi))
    return Direction(theta=theta, phi=phi)


def rayleigh_distance(geom: ArrayGeometry) -> float:
    """Far-field boundary 2*D**2/lambda, with D the aperture diagonal."""
    d = geom.aperture()
    return 2.0 * d * d / geom.wavelength
