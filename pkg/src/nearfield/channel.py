"""Near-field channel synthesis for uniform planar arrays.

Channels are superpositions of per-path steering matrices weighted by
complex gains that are redrawn for every snapshot. Steering phases come
either from the exact spherical wavefront or from its second-order
(Fresnel) expansion, which splits the propagation delay into an
angle-only linear term and a distance-bearing quadratic term.

All steering matrices have shape (n_z, n_y): rows follow the vertical
index n, columns the horizontal index m, and the center element (0, 0)
is the phase reference with entry exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, Direction, direction_cosines

__all__ = [
    "FAR_FIELD",
    "PathParam",
    "SceneSpec",
    "SnapshotEnsemble",
    "SceneError",
    "steering_exact",
    "steering_fresnel",
    "steering_fresnel_cosines",
    "steering_planar_cosines",
    "generate_paths",
    "generate_snapshots",
]

FAR_FIELD = math.inf
"""Distance marker for a planar-wavefront path (1/r = 0)."""


class SceneError(ValueError):
    """Requested scene cannot be realized (e.g. infeasible separation)."""


@dataclass(frozen=True)
class PathParam:
    """One propagation path: direction, distance and average power.

    ``distance_r`` is the range from the array center in meters;
    ``FAR_FIELD`` (infinity) marks a planar-wavefront path. ``power`` is
    the linear variance of the path's complex gain.
    """

    direction: Direction
    distance_r: float
    power: float

    def __post_init__(self) -> None:
        if not (self.distance_r > 0):
            raise ValueError(f"distance_r must be > 0, got {self.distance_r}")
        if not self.power > 0:
            raise ValueError(f"power must be > 0, got {self.power}")

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.distance_r)

    def cosines(self) -> tuple[float, float]:
        return direction_cosines(self.direction)


def steering_planar_cosines(geom: ArrayGeometry,
                            omega_y: float,
                            omega_z: float) -> np.ndarray:
    """Planar-wavefront steering matrix; phase k*d*(m*Omega_y + n*Omega_z)."""
    mm, nn = geom.index_grids()
    pu = geom.spacing_d * (mm * omega_y + nn * omega_z)
    return np.exp(1j * geom.wavenumber * pu)


def steering_fresnel_cosines(geom: ArrayGeometry,
                             omega_y: float,
                             omega_z: float,
                             distance_r: float) -> np.ndarray:
    """Fresnel steering matrix parameterized directly by cosines.

    Entry (m, n) is exp(-j*k*delta) with
    delta = -p.u + (||p||^2 - (p.u)^2) / (2 r),
    p.u = d*(m*Omega_y + n*Omega_z) and ||p||^2 = d^2*(m^2 + n^2).
    The linear term is independent of r; the quadratic term carries all
    of the distance dependence and vanishes for the far-field marker.
    """
    if not distance_r > 0:
        raise ValueError(f"distance_r must be > 0, got {distance_r}")
    mm, nn = geom.index_grids()
    d = geom.spacing_d
    pu = d * (mm * omega_y + nn * omega_z)
    delta = -pu
    if not math.isinf(distance_r):
        pp = d * d * (mm * mm + nn * nn)
        delta = delta + (pp - pu * pu) / (2.0 * distance_r)
    return np.exp(-1j * geom.wavenumber * delta)


def steering_exact(geom: ArrayGeometry, path: PathParam) -> np.ndarray:
    """Exact spherical-wavefront steering matrix for one path.

    Entry (m, n) is exp(-j*k*(r_mn - r)) with r_mn the true distance from
    element (m, n) to the source at range r in the path direction. The
    difference r_mn - r is evaluated through its quadratic expansion
    (||p||^2 - 2 r p.u) / (r_mn + r), which stays accurate when r is many
    orders of magnitude larger than the aperture. A far-field path reduces
    to the planar model.
    """
    omega_y, omega_z = path.cosines()
    if path.is_far_field:
        return steering_planar_cosines(geom, omega_y, omega_z)
    r = path.distance_r
    mm, nn = geom.index_grids()
    d = geom.spacing_d
    pu = d * (mm * omega_y + nn * omega_z)
    pp = d * d * (mm * mm + nn * nn)
    excess = pp - 2.0 * r * pu           # r_mn^2 - r^2
    r_mn = np.sqrt(r * r + excess)
    diff = excess / (r_mn + r)           # r_mn - r, cancellation-free
    return np.exp(-1j * geom.wavenumber * diff)


def steering_fresnel(geom: ArrayGeometry, path: PathParam) -> np.ndarray:
    """Fresnel-approximate steering matrix for one path."""
    omega_y, omega_z = path.cosines()
    return steering_fresnel_cosines(geom, omega_y, omega_z, path.distance_r)


_STEERING = {"exact": steering_exact, "fresnel": steering_fresnel}


def steering_matrix(geom: ArrayGeometry, path: PathParam,
                    wavefront: str = "fresnel") -> np.ndarray:
    """Steering matrix under the named wavefront model."""
    try:
        fn = _STEERING[wavefront]
    except KeyError:
        raise ValueError(f"unknown wavefront model {wavefront!r}") from None
    return fn(geom, path)


@dataclass(frozen=True)
class SceneSpec:
    """Random-scene parameters for path generation.

    ``omega_max`` bounds both directional cosines. ``min_separation_bins``
    is the pairwise separation enforced per cosine axis, in units of grid
    bins (applied in both the grid-aligned and the continuous case).
    """

    n_paths: int = 3
    omega_max: float = 0.49
    r_min: float = 5.0
    r_max: float = 100.0
    power_profile: str = "uniform"      # uniform | equal | exponential
    grid_aligned: bool = True
    min_separation_bins: int = 2

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0 < self.omega_max < 1:
            raise ValueError(f"omega_max must lie in (0, 1), got {self.omega_max}")
        if not 0 < self.r_min < self.r_max:
            raise ValueError(
                f"need 0 < r_min < r_max, got ({self.r_min}, {self.r_max})")
        if self.power_profile not in ("uniform", "equal", "exponential"):
            raise ValueError(f"unknown power profile {self.power_profile!r}")
        if self.min_separation_bins < 0:
            raise ValueError("min_separation_bins must be >= 0")


def _profile_powers(rng: np.random.Generator, profile: str, count: int) -> np.ndarray:
    if profile == "equal":
        raw = np.ones(count)
    elif profile == "exponential":
        raw = 0.5 ** np.arange(count)
    else:
        raw = rng.uniform(0.5, 1.5, size=count)
    return raw / raw.sum()


def _separated_choice(rng: np.random.Generator, values: np.ndarray, count: int,
                      min_gap: float, attempts: int = 2000) -> np.ndarray:
    """Draw ``count`` distinct values with pairwise separation >= min_gap."""
    if count == 1:
        return np.array([rng.choice(values)])
    span = values.max() - values.min()
    if (count - 1) * min_gap > span:
        raise SceneError(
            f"cannot place {count} values with separation {min_gap:g} "
            f"within span {span:g}")
    for _ in range(attempts):
        picked = rng.choice(values, size=count, replace=False)
        diffs = np.abs(picked[:, None] - picked[None, :])
        if np.all(diffs[np.triu_indices(count, 1)] >= min_gap - 1e-12):
            return picked
    raise SceneError(
        f"failed to draw {count} values separated by {min_gap:g} "
        f"after {attempts} attempts")


def _grid_spacing(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if len(finite) < 2:
        return 0.0
    return float(np.min(np.diff(np.sort(finite))))


def generate_paths(rng,
                   scene: SceneSpec,
                   omega_y_values: np.ndarray | None = None,
                   omega_z_values: np.ndarray | None = None,
                   r_values: np.ndarray | None = None) -> list[PathParam]:
    """Draw a random list of paths satisfying the scene constraints.

    With ``scene.grid_aligned`` the cosines and distances are snapped
    exactly to the supplied grid values, and cosine separation is enforced
    in units of grid bins on each axis independently. Without grids the
    continuous draw enforces the same separation using the default bin
    width 2*omega_max/16. Powers are drawn from the profile and normalized
    to sum to one.

    Raises
    ------
    SceneError
        If the requested number of paths cannot be separated.
    """
    rng = np.random.default_rng(rng)
    L = scene.n_paths
    powers = _profile_powers(rng, scene.power_profile, L)

    if scene.grid_aligned:
        if omega_y_values is None or omega_z_values is None or r_values is None:
            raise SceneError("grid-aligned scenes require all three grids")
        gap_y = scene.min_separation_bins * _grid_spacing(omega_y_values)
        gap_z = scene.min_separation_bins * _grid_spacing(omega_z_values)
        oy = _separated_choice(rng, np.asarray(omega_y_values, dtype=float), L, gap_y)
        oz = _separated_choice(rng, np.asarray(omega_z_values, dtype=float), L, gap_z)
        rr = rng.choice(np.asarray(r_values, dtype=float), size=L, replace=True)
    else:
        bin_width = 2.0 * scene.omega_max / 16.0
        gap = scene.min_separation_bins * bin_width
        grid = None
        for _ in range(2000):
            oy = rng.uniform(-scene.omega_max, scene.omega_max, size=L)
            oz = rng.uniform(-scene.omega_max, scene.omega_max, size=L)
            dy = np.abs(oy[:, None] - oy[None, :])[np.triu_indices(L, 1)]
            dz = np.abs(oz[:, None] - oz[None, :])[np.triu_indices(L, 1)]
            if L == 1 or (np.all(dy >= gap) and np.all(dz >= gap)):
                grid = True
                break
        if grid is None:
            raise SceneError(
                f"failed to draw {L} off-grid directions with separation {gap:g}")
        rr = rng.uniform(scene.r_min, scene.r_max, size=L)

    paths = []
    for l in range(L):
        phi = math.asin(float(oz[l]))
        theta = math.asin(float(oy[l]) / math.cos(phi))
        paths.append(PathParam(direction=Direction(theta=theta, phi=phi),
                               distance_r=float(rr[l]),
                               power=float(powers[l])))
    return paths


@dataclass(frozen=True)
class SnapshotEnsemble:
    """T noisy channel realizations sharing geometry and paths.

    ``snapshots`` has shape (T, n_z, n_y); ``gains`` has shape (T, L) and
    holds the complex path gains actually used, so the noiseless channel
    can always be rebuilt exactly. ``snr_db`` may be ``math.inf`` for the
    noiseless case.
    """

    geometry: ArrayGeometry
    paths: tuple[PathParam, ...]
    snapshots: np.ndarray
    gains: np.ndarray
    snr_db: float
    seed: int
    wavefront: str = "fresnel"
    gain_model: str = "gaussian"
    _steering: np.ndarray = field(repr=False, default=None)

    @property
    def n_snapshots(self) -> int:
        return self.snapshots.shape[0]

    @property
    def signal_power(self) -> float:
        """Expected per-entry signal power, sum of path powers."""
        return float(sum(p.power for p in self.paths))

    @property
    def noise_variance(self) -> float:
        """Per-entry complex noise variance implied by snr_db."""
        if math.isinf(self.snr_db):
            return 0.0
        return self.signal_power * 10.0 ** (-self.snr_db / 10.0)

    def steering_stack(self) -> np.ndarray:
        """Per-path steering matrices, shape (L, n_z, n_y)."""
        if self._steering is None:
            stack = np.stack([steering_matrix(self.geometry, p, self.wavefront)
                              for p in self.paths])
            object.__setattr__(self, "_steering", stack)
        return self._steering

    def clean_snapshots(self) -> np.ndarray:
        """Noiseless snapshots rebuilt from the stored gains."""
        a = self.steering_stack().reshape(len(self.paths), -1)
        clean = self.gains @ a
        return clean.reshape(self.snapshots.shape)


def _draw_gains(rng: np.random.Generator, powers: np.ndarray, T: int,
                model: str) -> np.ndarray:
    L = len(powers)
    amp = np.sqrt(powers)
    if model == "gaussian":
        g = rng.standard_normal((T, L)) + 1j * rng.standard_normal((T, L))
        return g * (amp / math.sqrt(2.0))
    if model == "fixed":
        return np.tile(amp.astype(complex), (T, 1))
    if model == "orthogonal":
        # Unit-modulus codes, orthogonal across snapshots: the empirical
        # gain correlation matrix equals diag(powers) exactly, so the
        # covariance statistics match their population formulas.
        if T < L:
            raise ValueError(f"orthogonal gains need T >= L, got T={T}, L={L}")
        t = np.arange(T)[:, None]
        l = np.arange(L)[None, :]
        return amp * np.exp(2j * math.pi * t * l / T)
    raise ValueError(f"unknown gain model {model!r}")


def generate_snapshots(geom: ArrayGeometry,
                       paths: list[PathParam] | tuple[PathParam, ...],
                       n_snapshots: int,
                       snr_db: float,
                       wavefront: str = "fresnel",
                       seed: int = 0,
                       gain_model: str = "gaussian") -> SnapshotEnsemble:
    """Simulate a snapshot ensemble.

    Gains are redrawn per snapshot (i.i.d. zero-mean complex Gaussian with
    the path's power as variance under the default model); additive white
    complex Gaussian noise is scaled so that the expected per-entry signal
    power divided by the noise power equals 10**(snr_db/10). The result is
    bit-reproducible for a given (seed, geometry, paths, n_snapshots,
    snr_db, wavefront, gain_model).
    """
    if n_snapshots < 1:
        raise ValueError(f"n_snapshots must be >= 1, got {n_snapshots}")
    paths = tuple(paths)
    if not paths:
        raise ValueError("at least one path is required")

    gains_rng, noise_rng = (np.random.default_rng(s)
                            for s in np.random.SeedSequence(seed).spawn(2))
    powers = np.array([p.power for p in paths])
    gains = _draw_gains(gains_rng, powers, n_snapshots, gain_model)

    steering = np.stack([steering_matrix(geom, p, wavefront) for p in paths])
    a = steering.reshape(len(paths), -1)
    clean = gains @ a

    if math.isinf(snr_db):
        noisy = clean
    else:
        noise_var = float(powers.sum()) * 10.0 ** (-snr_db / 10.0)
        scale = math.sqrt(noise_var / 2.0)
        noise = scale * (noise_rng.standard_normal(clean.shape)
                         + 1j * noise_rng.standard_normal(clean.shape))
        noisy = clean + noise

    return SnapshotEnsemble(
        geometry=geom,
        paths=paths,
        snapshots=noisy.reshape(n_snapshots, geom.n_z, geom.n_y),
        gains=gains,
        snr_db=float(snr_db),
        seed=int(seed),
        wavefront=wavefront,
        gain_model=gain_model,
        _steering=steering,
    )
