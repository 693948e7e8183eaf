"""Covariance decomposition of coupled angle/distance parameters.

Builds four second-order statistics from a snapshot ensemble. Each is an
(n_z, n_y) complex matrix indexed by the signed element pair (m, n):

* ``covariance_symmetric`` pairs point-symmetric elements, h(m, n) with
  h(-m, -n). Under the Fresnel model the quadratic (distance) phases are
  even in (m, n) and cancel in the conjugate product, leaving a statistic
  whose phase progression depends only on the direction cosines.
* ``sparse_function_azimuth`` / ``sparse_function_elevation`` average the
  symmetric covariance with its n-flipped / m-flipped counterpart, which
  turns the other angle's phase factor into a real cosine weight. The
  phase across m then carries only Omega_y (and across n only Omega_z).
* ``covariance_origin`` pairs every element with the center element, which
  keeps the full Fresnel structure: a power-weighted sum of the per-path
  steering matrices.

The expectation is realized as an empirical mean over snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SnapshotEnsemble, steering_fresnel_cosines, steering_planar_cosines

__all__ = [
    "SparseFunctionSet",
    "PowerSpreadSpectra",
    "covariance_symmetric",
    "sparse_function_azimuth",
    "sparse_function_elevation",
    "covariance_origin",
    "decompose",
    "entry",
    "power_spectrum_diagnostics",
]


def entry(matrix: np.ndarray, m: int, n: int) -> complex:
    """Matrix entry addressed by signed element indices (m, n)."""
    n_z, n_y = matrix.shape
    return matrix[n + (n_z - 1) // 2, m + (n_y - 1) // 2]


@dataclass(frozen=True)
class SparseFunctionSet:
    """The four decomposition statistics plus the snapshot count used."""

    c: np.ndarray
    w_theta: np.ndarray
    w_phi: np.ndarray
    w_r: np.ndarray
    snapshot_count: int


def covariance_symmetric(ens: SnapshotEnsemble, debias: bool = False) -> np.ndarray:
    """Point-symmetric conjugate covariance C.

    C[m, n] = mean_t h_t(m, n) * conj(h_t(-m, -n)). At finite SNR only the
    (0, 0) entry carries a noise bias (it is the lone self-pair);
    ``debias`` subtracts the known noise variance from it.
    """
    h = ens.snapshots
    c = (h * np.conj(h[:, ::-1, ::-1])).mean(axis=0)
    if debias and not math.isinf(ens.snr_db):
        cz, cy = ens.geometry.center_indices()
        c[cz, cy] -= ens.noise_variance
    return c


def sparse_function_azimuth(c: np.ndarray) -> np.ndarray:
    """Azimuth sparse function W_theta[m, n] = (C[m, n] + C[m, -n]) / 2.

    Structurally symmetric under n -> -n for any input. In the population
    limit the phase across m depends only on the azimuth cosines, with
    elevation entering through real row weights cos(2*k*d*n*Omega_z).
    """
    return 0.5 * (c + c[::-1, :])


def sparse_function_elevation(c: np.ndarray) -> np.ndarray:
    """Elevation sparse function W_phi[m, n] = (C[m, n] + C[-m, n]) / 2."""
    return 0.5 * (c + c[:, ::-1])


def covariance_origin(ens: SnapshotEnsemble, debias: bool = False) -> np.ndarray:
    """Origin-referenced covariance W_r[m, n] = mean_t h_t(m, n)*conj(h_t(0, 0)).

    Retains both the angular and the distance structure: its population
    value is the power-weighted sum of the Fresnel steering matrices.
    """
    cz, cy = ens.geometry.center_indices()
    h = ens.snapshots
    w = (h * np.conj(h[:, cz:cz + 1, cy:cy + 1])).mean(axis=0)
    if debias and not math.isinf(ens.snr_db):
        w[cz, cy] -= ens.noise_variance
    return w


def decompose(ens: SnapshotEnsemble, debias: bool = False) -> SparseFunctionSet:
    """All four statistics in one pass."""
    c = covariance_symmetric(ens, debias=debias)
    return SparseFunctionSet(
        c=c,
        w_theta=sparse_function_azimuth(c),
        w_phi=sparse_function_elevation(c),
        w_r=covariance_origin(ens, debias=debias),
        snapshot_count=ens.n_snapshots,
    )


@dataclass(frozen=True)
class PowerSpreadSpectra:
    """Naive matched-filter maps used for plotting and inspection only.

    ``angular`` is the |correlation| of the origin-referenced statistic
    with Fresnel columns over an (Omega_z, Omega_y) grid at one fixed
    distance; ``distance`` is the same along one fixed direction over a
    distance grid. Peaks of these maps need not coincide with the true
    parameters; the maps document the spread, they do not correct it.
    """

    omega_y_values: np.ndarray
    omega_z_values: np.ndarray
    r_values: np.ndarray
    angular: np.ndarray          # shape (len(omega_z), len(omega_y)), >= 0
    distance: np.ndarray         # shape (len(r_values),), >= 0
    at_r: float
    along: tuple[float, float]


def _unit_column(geom, omega_y, omega_z, r) -> np.ndarray:
    if math.isinf(r):
        mat = steering_planar_cosines(geom, omega_y, omega_z)
    else:
        mat = steering_fresnel_cosines(geom, omega_y, omega_z, r)
    v = mat.reshape(-1)
    return v / np.linalg.norm(v)


def power_spectrum_diagnostics(ens: SnapshotEnsemble,
                               omega_y_values: np.ndarray,
                               omega_z_values: np.ndarray,
                               r_values: np.ndarray,
                               at_r: float | None = None,
                               along: tuple[float, float] | None = None,
                               ) -> PowerSpreadSpectra:
    """Angular and distance power-spread maps of the naive joint sampling.

    ``at_r`` fixes the distance for the angular map and ``along`` fixes
    the direction cosines for the distance profile; both default to the
    ensemble's first ground-truth path.
    """
    if at_r is None:
        at_r = ens.paths[0].distance_r
    if along is None:
        along = ens.paths[0].cosines()

    w = covariance_origin(ens).reshape(-1)
    geom = ens.geometry

    angular = np.empty((len(omega_z_values), len(omega_y_values)))
    for i, oz in enumerate(omega_z_values):
        for j, oy in enumerate(omega_y_values):
            angular[i, j] = abs(np.vdot(_unit_column(geom, oy, oz, at_r), w))

    distance = np.array([
        abs(np.vdot(_unit_column(geom, along[0], along[1], r), w))
        for r in r_values
    ])

    return PowerSpreadSpectra(
        omega_y_values=np.asarray(omega_y_values, dtype=float),
        omega_z_values=np.asarray(omega_z_values, dtype=float),
        r_values=np.asarray(r_values, dtype=float),
        angular=angular,
        distance=distance,
        at_r=float(at_r),
        along=(float(along[0]), float(along[1])),
    )
