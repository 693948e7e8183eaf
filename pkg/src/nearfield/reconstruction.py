"""Path assembly and channel rebuild from per-parameter recoveries.

Azimuth and elevation atoms are recovered independently, so their order
carries no path association. Pairing exploits that both sides estimate
the same per-path power: atoms are greedily matched by power similarity
(an optimal-assignment variant exists for ablation). Distances are then
recovered along the paired directions, per-snapshot gains follow from a
least-squares fit of the noisy snapshots on the estimated steering
columns, and the channel is rebuilt as their superposition.

``estimate_channel`` chains the whole estimator; ``joint_grid_pursuit``
is the brute-force baseline that searches the full 3D parameter product
grid and against which the decomposed estimator is checked.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, direction_from_cosines
from .channel import SnapshotEnsemble, steering_fresnel_cosines, \
    steering_planar_cosines
from .decomposition import covariance_origin, covariance_symmetric, \
    sparse_function_azimuth, sparse_function_elevation
from .dictionaries import ParameterGrid, angle_dictionary
from .recovery import AtomEstimate, StoppingRule, recover_azimuth, \
    recover_elevation, recover_distance

__all__ = [
    "PathEstimate",
    "ChannelEstimate",
    "PipelineConfig",
    "PipelineDiagnostics",
    "StageError",
    "match_angle_pairs",
    "estimate_gains",
    "reconstruct_channel",
    "nmse",
    "estimate_channel",
    "joint_grid_pursuit",
]


class StageError(RuntimeError):
    """Pipeline failure carrying the name of the stage that raised."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PathEstimate:
    """Recovered per-path parameters: cosines, distance and power."""

    omega_y: float
    omega_z: float
    distance_r: float
    power: float
    gain_per_snapshot: np.ndarray | None = field(repr=False, default=None)

    def __post_init__(self) -> None:
        if self.power < 0:
            raise ValueError(f"power must be >= 0, got {self.power}")

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.distance_r)


@dataclass
class ChannelEstimate:
    """Estimated paths, rebuilt snapshots and the resulting error."""

    paths: list[PathEstimate]
    rebuilt_snapshots: np.ndarray
    nmse_linear: float

    @property
    def nmse_db(self) -> float:
        if self.nmse_linear == 0.0:
            return -math.inf
        return 10.0 * math.log10(self.nmse_linear)


def match_angle_pairs(az_atoms, el_atoms, method: str = "greedy",
                      ) -> tuple[list[tuple[float, float, float]], list]:
    """Pair azimuth and elevation atoms by power similarity.

    Inputs are sequences of (value, power) tuples (``AtomEstimate`` works
    too). When the lists differ in length the excess atoms are dropped
    lowest-power-first and returned as the second element. Greedy matching
    repeatedly pairs the globally closest-in-power remaining atoms; ties
    break toward the lower azimuth index, then the lower elevation index.
    ``method='assignment'`` minimizes the total power difference instead.
    Paired power is the mean of the two sides.
    """
    def _as_pairs(atoms):
        out = []
        for a in atoms:
            if isinstance(a, AtomEstimate):
                out.append((a.value, a.power))
            else:
                out.append((float(a[0]), float(a[1])))
        return out

    az = _as_pairs(az_atoms)
    el = _as_pairs(el_atoms)
    if not az or not el:
        raise ValueError("cannot pair: one of the atom lists is empty")

    dropped = []
    target = min(len(az), len(el))
    for side in (az, el):
        while len(side) > target:
            weakest = min(range(len(side)), key=lambda i: (side[i][1], -i))
            dropped.append(side.pop(weakest))

    n = target
    if method == "assignment":
        best_perm, best_cost = None, math.inf
        for perm in itertools.permutations(range(n)):
            cost = sum(abs(az[i][1] - el[perm[i]][1]) for i in range(n))
            if cost < best_cost - 1e-15:
                best_cost, best_perm = cost, perm
        matches = [(i, best_perm[i]) for i in range(n)]
    elif method == "greedy":
        free_az = list(range(n))
        free_el = list(range(n))
        matches = []
        while free_az:
            best = min(
                ((abs(az[i][1] - el[j][1]), i, j) for i in free_az for j in free_el),
                key=lambda t: t,
            )
            _, i, j = best
            matches.append((i, j))
            free_az.remove(i)
            free_el.remove(j)
    else:
        raise ValueError(f"unknown pairing method {method!r}")

    pairs = [(az[i][0], el[j][0], 0.5 * (az[i][1] + el[j][1])) for i, j in matches]
    return pairs, dropped


def _steering_columns(geom: ArrayGeometry, paths) -> np.ndarray:
    cols = np.empty((geom.n_elements, len(paths)), dtype=complex)
    for i, p in enumerate(paths):
        if math.isinf(p.distance_r):
            mat = steering_planar_cosines(geom, p.omega_y, p.omega_z)
        else:
            mat = steering_fresnel_cosines(geom, p.omega_y, p.omega_z, p.distance_r)
        cols[:, i] = mat.reshape(-1)
    return cols


def estimate_gains(ens: SnapshotEnsemble, paths: list[PathEstimate]) -> np.ndarray:
    """Per-snapshot least-squares gains on the estimated steering columns.

    Returns an array of shape (T, L). Duplicate path estimates make the
    steering matrix rank deficient and raise an error naming the
    colliding paths.
    """
    if not paths:
        raise ValueError("need at least one path estimate")
    keys = [(p.omega_y, p.omega_z, p.distance_r) for p in paths]
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            if keys[i] == keys[j]:
                raise ValueError(
                    f"duplicate path estimates at indices {i} and {j}: "
                    f"(omega_y, omega_z, r) = {keys[i]}")
    a = _steering_columns(ens.geometry, paths)
    rank = np.linalg.matrix_rank(a)
    if rank < len(paths):
        gram = np.abs(a.conj().T @ a) / ens.geometry.n_elements
        np.fill_diagonal(gram, 0.0)
        i, j = np.unravel_index(int(np.argmax(gram)), gram.shape)
        raise ValueError(
            f"steering matrix is rank deficient (rank {rank} < {len(paths)}); "
            f"most collinear pair: paths {min(i, j)} and {max(i, j)}")
    y = ens.snapshots.reshape(ens.n_snapshots, -1).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return coef.T


def reconstruct_channel(paths: list[PathEstimate], gains: np.ndarray,
                        geom: ArrayGeometry) -> np.ndarray:
    """Superpose gain-weighted Fresnel steering matrices, shape (T, n_z, n_y)."""
    gains = np.asarray(gains, dtype=complex)
    if gains.ndim != 2 or gains.shape[1] != len(paths):
        raise ValueError(f"gains must have shape (T, {len(paths)})")
    if not paths:
        return np.zeros((gains.shape[0], geom.n_z, geom.n_y), dtype=complex)
    a = _steering_columns(geom, paths)
    flat = gains @ a.T
    return flat.reshape(gains.shape[0], geom.n_z, geom.n_y)


def nmse(estimate: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Normalized mean square error, linear and in dB.

    linear = sum_t ||estimate_t - truth_t||_F^2 / sum_t ||truth_t||_F^2.
    """
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise ValueError("truth snapshots have zero energy")
    linear = float(np.sum(np.abs(estimate - truth) ** 2)) / denom
    db = -math.inf if linear == 0.0 else 10.0 * math.log10(linear)
    return linear, db


@dataclass(frozen=True)
class PipelineConfig:
    """Grids, solver and stopping choices for the full estimator."""

    azimuth_grid: ParameterGrid
    elevation_grid: ParameterGrid
    distance_grid: ParameterGrid
    sparsity: int = 3
    solver: str = "omp"
    residual_tol: float = 0.0
    row_offsets: tuple[int, ...] = (0, 1, -1, 2, -2)
    col_offsets: tuple[int, ...] = (0, 1, -1, 2, -2)
    pairing: str = "greedy"
    sbl_max_iter: int = 50
    sbl_prune_threshold: float = 1e6
    sbl_tol: float = 1e-4
    debias: bool = False
    record_history: bool = False

    def stopping_rule(self) -> StoppingRule:
        if self.residual_tol > 0:
            return StoppingRule.combined(self.sparsity, self.residual_tol)
        return StoppingRule.fixed(self.sparsity)

    def sbl_options(self) -> dict:
        return {"max_iter": self.sbl_max_iter,
                "prune_threshold": self.sbl_prune_threshold,
                "tol": self.sbl_tol}


@dataclass
class PipelineDiagnostics:
    """Per-stage outputs of one estimator run.

    ``canonical()`` returns the deterministic part (everything except
    wall-clock timings) as a JSON-ready dictionary; two runs on identical
    inputs produce identical canonical forms.
    """

    azimuth_atoms: list[AtomEstimate]
    elevation_atoms: list[AtomEstimate]
    pairs: list[tuple[float, float, float]]
    dropped_atoms: list
    distance_indices: list[int]
    distance_values: list[float]
    supports: dict
    traces: dict
    iterations: int
    columns_total: int
    stage_ms: dict
    nmse_linear: float
    nmse_db: float
    histories: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        def _num(x):
            if isinstance(x, float) and math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        return {
            "azimuth_atoms": [[a.value, a.power, a.index] for a in self.azimuth_atoms],
            "elevation_atoms": [[a.value, a.power, a.index] for a in self.elevation_atoms],
            "pairs": [[p[0], p[1], p[2]] for p in self.pairs],
            "dropped_atoms": [list(d) for d in self.dropped_atoms],
            "distance_indices": list(self.distance_indices),
            "distance_values": [_num(v) for v in self.distance_values],
            "supports": {k: list(v) for k, v in self.supports.items()},
            "traces": {k: list(v) for k, v in self.traces.items()},
            "iterations": self.iterations,
            "columns_total": self.columns_total,
            "nmse_linear": self.nmse_linear,
            "nmse_db": _num(self.nmse_db),
        }


def estimate_channel(ens: SnapshotEnsemble, config: PipelineConfig,
                     ) -> tuple[ChannelEstimate, PipelineDiagnostics]:
    """Full decomposition/recovery/reconstruction channel estimator.

    Stages: symmetric covariance -> azimuth/elevation sparse functions ->
    per-axis sparse recovery -> power pairing -> origin covariance ->
    per-direction distance pursuit -> least-squares gains -> rebuild ->
    error against the noiseless truth. Any stage failure is re-raised as
    :class:`StageError` naming the stage.
    """
    geom = ens.geometry
    stop = config.stopping_rule()
    dol = geom.d_over_lambda
    stage_ms: dict[str, float] = {}
    traces: dict[str, list[float]] = {}

    def _timed(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        stage_ms[name] = (time.perf_counter() - t0) * 1e3
        return out

    c = _timed("covariance", lambda: covariance_symmetric(ens, debias=config.debias))
    w_theta = _timed("sparse-azimuth", lambda: sparse_function_azimuth(c))
    w_phi = _timed("sparse-elevation", lambda: sparse_function_elevation(c))

    dict_az = angle_dictionary(geom.n_y, config.azimuth_grid, doubled=True,
                               d_over_lambda=dol)
    dict_el = angle_dictionary(geom.n_z, config.elevation_grid, doubled=True,
                               d_over_lambda=dol)

    az_atoms, az_res = _timed("recover-azimuth", lambda: recover_azimuth(
        w_theta, dict_az, stop, solver=config.solver,
        row_offsets=config.row_offsets, sbl_options=config.sbl_options(),
        record_history=config.record_history))
    el_atoms, el_res = _timed("recover-elevation", lambda: recover_elevation(
        w_phi, dict_el, stop, solver=config.solver,
        col_offsets=config.col_offsets, sbl_options=config.sbl_options(),
        record_history=config.record_history))
    traces["azimuth"] = az_res.trace
    traces["elevation"] = el_res.trace

    az_top = az_atoms[:config.sparsity]
    el_top = el_atoms[:config.sparsity]

    pairs, dropped = _timed("pairing", lambda: match_angle_pairs(
        az_top, el_top, method=config.pairing))
    pairs = sorted(pairs, key=lambda p: -p[2])
    for oy, oz, _ in pairs:
        direction_from_cosines(oy, oz)  # spurious pairs fail fast here

    w_r = _timed("covariance-origin", lambda: covariance_origin(ens, debias=config.debias))
    dist = _timed("recover-distance", lambda: recover_distance(
        w_r, [(p[0], p[1]) for p in pairs], geom, config.distance_grid))
    traces["distance"] = dist.residual_trace

    paths = [PathEstimate(omega_y=p[0], omega_z=p[1], distance_r=dist.distances[i],
                          power=p[2])
             for i, p in enumerate(pairs)]

    gains = _timed("gains", lambda: estimate_gains(ens, paths))
    rebuilt = _timed("rebuild", lambda: reconstruct_channel(paths, gains, geom))
    linear, db = _timed("nmse", lambda: nmse(rebuilt, ens.clean_snapshots()))

    paths = [PathEstimate(p.omega_y, p.omega_z, p.distance_r, p.power,
                          gain_per_snapshot=gains[:, i])
             for i, p in enumerate(paths)]

    estimate = ChannelEstimate(paths=paths, rebuilt_snapshots=rebuilt,
                               nmse_linear=linear)
    diagnostics = PipelineDiagnostics(
        azimuth_atoms=az_atoms,
        elevation_atoms=el_atoms,
        pairs=pairs,
        dropped_atoms=dropped,
        distance_indices=dist.indices,
        distance_values=dist.distances,
        supports={
            "azimuth": [a.index for a in az_top],
            "elevation": [a.index for a in el_top],
            "distance": dist.indices,
        },
        traces=traces,
        iterations=az_res.iterations + el_res.iterations + len(pairs),
        columns_total=(config.azimuth_grid.count + config.elevation_grid.count
                       + len(pairs) * config.distance_grid.count),
        stage_ms=stage_ms,
        nmse_linear=linear,
        nmse_db=db,
        histories=({"azimuth": az_res.history, "elevation": el_res.history}
                   if config.record_history else {}),
    )
    return estimate, diagnostics


@dataclass
class JointPursuitResult:
    """Output of the exhaustive joint-grid baseline."""

    triples: list[tuple[float, float, float]]
    indices: list[tuple[int, int, int]]
    columns_total: int
    residual_norm: float


def joint_grid_pursuit(ens: SnapshotEnsemble,
                       omega_y_grid: ParameterGrid,
                       omega_z_grid: ParameterGrid,
                       r_grid: ParameterGrid,
                       sparsity: int,
                       column_cap: int = 65536,
                       refine_passes: int = 2) -> JointPursuitResult:
    """Greedy pursuit over the full (azimuth x elevation x distance) grid.

    Builds every Fresnel steering column on the 3D product grid and runs
    greedy pursuit (with joint least-squares refits) of the vectorized
    origin-referenced statistic, followed by the same cyclic leave-one-out
    refinement the decomposed distance stage uses. The column count is the
    product of the grid sizes, versus the sum searched by the decomposed
    estimator.
    """
    geom = ens.geometry
    n_total = omega_y_grid.count * omega_z_grid.count * r_grid.count
    if n_total > column_cap:
        raise ValueError(
            f"joint grid has {n_total} columns, above the cap {column_cap}; "
            f"use smaller grids")

    cols = np.empty((geom.n_elements, n_total), dtype=complex)
    index_map: list[tuple[int, int, int]] = []
    pos = 0
    for iy, oy in enumerate(omega_y_grid.values):
        for iz, oz in enumerate(omega_z_grid.values):
            for ir, r in enumerate(r_grid.values):
                if math.isinf(r):
                    mat = steering_planar_cosines(geom, oy, oz)
                else:
                    mat = steering_fresnel_cosines(geom, oy, oz, r)
                v = mat.reshape(-1)
                cols[:, pos] = v / np.linalg.norm(v)
                index_map.append((iy, iz, ir))
                pos += 1

    v = covariance_origin(ens).reshape(-1)
    support: list[int] = []
    residual = v
    for _ in range(sparsity):
        scores = np.abs(cols.conj().T @ residual)
        if support:
            scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        a = cols[:, support]
        coef, *_ = np.linalg.lstsq(a, v, rcond=None)
        residual = v - a @ coef

    for _ in range(refine_passes if sparsity > 1 else 0):
        changed = False
        for pos in range(len(support)):
            others = [s for i, s in enumerate(support) if i != pos]
            a_others = cols[:, others]
            coef, *_ = np.linalg.lstsq(a_others, v, rcond=None)
            loo = v - a_others @ coef
            scores = np.abs(cols.conj().T @ loo)
            scores[others] = -1.0
            j = int(np.argmax(scores))
            if j != support[pos]:
                support[pos] = j
                changed = True
        a = cols[:, support]
        coef, *_ = np.linalg.lstsq(a, v, rcond=None)
        residual = v - a @ coef
        if not changed:
            break

    triples = []
    indices = []
    for s in support:
        iy, iz, ir = index_map[s]
        indices.append((iy, iz, ir))
        triples.append((float(omega_y_grid.values[iy]),
                        float(omega_z_grid.values[iz]),
                        float(r_grid.values[ir])))
    return JointPursuitResult(
        triples=triples,
        indices=indices,
        columns_total=n_total,
        residual_norm=float(np.linalg.norm(residual)),
    )
