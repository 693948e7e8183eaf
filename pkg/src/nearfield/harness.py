"""Experiment configuration, sweeps, convergence traces and persistence.

Configuration is flat ``key = value`` text with dotted section prefixes
(``geometry.n_y = 33``). Unknown keys are rejected and every value is
validated against the module preconditions at load time, with the
offending field path in the error message.

Sweeps derive one child seed per (SNR index, trial index) from the master
seed, so results are independent of execution order and worker count.
Emitted CSV/JSON artifacts are byte-reproducible; measured wall-clock
times are zeroed in the artifacts unless explicitly requested, because
they are the one non-deterministic field.
"""

from __future__ import annotations

import json
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import ArrayGeometry
from .channel import (PathParam, SceneSpec, SnapshotEnsemble,
                      generate_paths, generate_snapshots)
from .dictionaries import ParameterGrid, angle_grid, distance_grid
from .recovery import sbl_vbi
from .reconstruction import (PathEstimate, PipelineConfig, estimate_channel,
                             joint_grid_pursuit, match_angle_pairs, nmse,
                             reconstruct_channel, estimate_gains)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricRecord",
    "ConvergenceRecord",
    "load_config",
    "preset_text",
    "child_seed",
    "run_sweep",
    "run_convergence",
    "run_oracle_check",
    "emit",
    "emit_convergence",
    "emit_oracle",
    "sweep_summary",
    "save_ensemble",
    "load_ensemble",
    "ensemble_to_dict",
    "ensemble_from_dict",
]

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Configuration parse or validation failure."""


# --------------------------------------------------------------------------
# configuration schema


@dataclass(frozen=True)
class GeometryConfig:
    n_y: int = 33
    n_z: int = 17
    d_over_lambda: float = 0.5
    carrier_hz: float = 30e9


@dataclass(frozen=True)
class SceneConfig:
    paths: int = 3
    omega_max: float = 0.49
    r_min: float = 5.0
    r_max: float = 100.0
    power_profile: str = "uniform"
    on_grid: bool = True
    min_separation_bins: int = 2
    wavefront: str = "fresnel"
    gain_model: str = "gaussian"


@dataclass(frozen=True)
class EstimationConfig:
    snapshots: int = 200
    solver: str = "omp"
    azimuth_grid_points: int = 0        # 0 -> n_y
    elevation_grid_points: int = 0      # 0 -> n_z
    distance_grid_points: int = 32
    include_far_field: bool = False
    sparsity: int = 0                   # 0 -> scene.paths
    residual_tol: float = 0.0
    row_offsets: tuple[int, ...] = (0, 1, -1, 2, -2)
    col_offsets: tuple[int, ...] = (0, 1, -1, 2, -2)
    pairing: str = "greedy"
    sbl_max_iter: int = 50
    sbl_prune_threshold: float = 1e6
    sbl_tol: float = 1e-4
    debias: bool = False


@dataclass(frozen=True)
class SweepConfig:
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 10
    max_failure_rate: float = 0.0
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    # ---- derived objects ------------------------------------------------

    def make_geometry(self) -> ArrayGeometry:
        wavelength = SPEED_OF_LIGHT / self.geometry.carrier_hz
        return ArrayGeometry(n_y=self.geometry.n_y, n_z=self.geometry.n_z,
                             spacing_d=self.geometry.d_over_lambda * wavelength,
                             wavelength=wavelength)

    def make_scene(self) -> SceneSpec:
        s = self.scene
        return SceneSpec(n_paths=s.paths, omega_max=s.omega_max, r_min=s.r_min,
                         r_max=s.r_max, power_profile=s.power_profile,
                         grid_aligned=s.on_grid,
                         min_separation_bins=s.min_separation_bins)

    def make_grids(self) -> tuple[ParameterGrid, ParameterGrid, ParameterGrid]:
        e = self.estimation
        dol = self.geometry.d_over_lambda
        az = angle_grid(e.azimuth_grid_points or self.geometry.n_y,
                        self.scene.omega_max, kind="azimuth", d_over_lambda=dol)
        el = angle_grid(e.elevation_grid_points or self.geometry.n_z,
                        self.scene.omega_max, kind="elevation", d_over_lambda=dol)
        r = distance_grid(self.scene.r_min, self.scene.r_max,
                          e.distance_grid_points,
                          include_far_field=e.include_far_field)
        return az, el, r

    def sparsity(self) -> int:
        return self.estimation.sparsity or self.scene.paths

    def make_pipeline_config(self) -> PipelineConfig:
        az, el, r = self.make_grids()
        e = self.estimation
        return PipelineConfig(
            azimuth_grid=az, elevation_grid=el, distance_grid=r,
            sparsity=self.sparsity(), solver=e.solver,
            residual_tol=e.residual_tol, row_offsets=e.row_offsets,
            col_offsets=e.col_offsets, pairing=e.pairing,
            sbl_max_iter=e.sbl_max_iter,
            sbl_prune_threshold=e.sbl_prune_threshold, sbl_tol=e.sbl_tol,
            debias=e.debias,
        )


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_float(raw: str) -> float:
    lowered = raw.strip().lower()
    if lowered in ("inf", "+inf", "infinity"):
        return math.inf
    return float(raw)


def _parse_float_list(raw: str) -> tuple[float, ...]:
    items = [x for x in (part.strip() for part in raw.split(",")) if x]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_parse_float(x) for x in items)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    items = [x for x in (part.strip() for part in raw.split(",")) if x]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(x) for x in items)


_SCHEMA: dict[str, tuple[str, str, object]] = {
    "seed": ("seed", "", int),
    "geometry.n_y": ("n_y", "geometry", int),
    "geometry.n_z": ("n_z", "geometry", int),
    "geometry.d_over_lambda": ("d_over_lambda", "geometry", _parse_float),
    "geometry.carrier_hz": ("carrier_hz", "geometry", _parse_float),
    "scene.paths": ("paths", "scene", int),
    "scene.omega_max": ("omega_max", "scene", _parse_float),
    "scene.r_min": ("r_min", "scene", _parse_float),
    "scene.r_max": ("r_max", "scene", _parse_float),
    "scene.power_profile": ("power_profile", "scene", str),
    "scene.on_grid": ("on_grid", "scene", _parse_bool),
    "scene.min_separation_bins": ("min_separation_bins", "scene", int),
    "scene.wavefront": ("wavefront", "scene", str),
    "scene.gain_model": ("gain_model", "scene", str),
    "estimation.snapshots": ("snapshots", "estimation", int),
    "estimation.solver": ("solver", "estimation", str),
    "estimation.azimuth_grid_points": ("azimuth_grid_points", "estimation", int),
    "estimation.elevation_grid_points": ("elevation_grid_points", "estimation", int),
    "estimation.distance_grid_points": ("distance_grid_points", "estimation", int),
    "estimation.include_far_field": ("include_far_field", "estimation", _parse_bool),
    "estimation.sparsity": ("sparsity", "estimation", int),
    "estimation.residual_tol": ("residual_tol", "estimation", _parse_float),
    "estimation.row_offsets": ("row_offsets", "estimation", _parse_int_list),
    "estimation.col_offsets": ("col_offsets", "estimation", _parse_int_list),
    "estimation.pairing": ("pairing", "estimation", str),
    "estimation.sbl_max_iter": ("sbl_max_iter", "estimation", int),
    "estimation.sbl_prune_threshold": ("sbl_prune_threshold", "estimation", _parse_float),
    "estimation.sbl_tol": ("sbl_tol", "estimation", _parse_float),
    "estimation.debias": ("debias", "estimation", _parse_bool),
    "sweep.snr_db": ("snr_db", "sweep", _parse_float_list),
    "sweep.trials": ("trials", "sweep", int),
    "sweep.max_failure_rate": ("max_failure_rate", "sweep", _parse_float),
    "sweep.workers": ("workers", "sweep", int),
}


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines into typed values keyed by dotted name."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith(";"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        _, _, caster = _SCHEMA[key]
        try:
            values[key] = caster(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return values


def _build_config(values: dict[str, object]) -> ExperimentConfig:
    sections = {"geometry": {}, "scene": {}, "estimation": {}, "sweep": {}}
    seed = 7
    for key, value in values.items():
        fieldname, section, _ = _SCHEMA[key]
        if section == "":
            seed = value
        else:
            sections[section][fieldname] = value
    return ExperimentConfig(
        seed=seed,
        geometry=GeometryConfig(**sections["geometry"]),
        scene=SceneConfig(**sections["scene"]),
        estimation=EstimationConfig(**sections["estimation"]),
        sweep=SweepConfig(**sections["sweep"]),
    )


def _validate(config: ExperimentConfig) -> ExperimentConfig:
    def fail(path: str, message: str):
        raise ConfigError(f"{path}: {message}")

    g = config.geometry
    if g.n_y < 1 or g.n_y % 2 == 0:
        fail("geometry.n_y", f"must be odd and >= 1, got {g.n_y}")
    if g.n_z < 1 or g.n_z % 2 == 0:
        fail("geometry.n_z", f"must be odd and >= 1, got {g.n_z}")
    if not g.d_over_lambda > 0:
        fail("geometry.d_over_lambda", f"must be > 0, got {g.d_over_lambda}")
    if not g.carrier_hz > 0:
        fail("geometry.carrier_hz", f"must be > 0, got {g.carrier_hz}")

    s = config.scene
    if s.paths < 1:
        fail("scene.paths", f"must be >= 1, got {s.paths}")
    bound = 1.0 / (4.0 * g.d_over_lambda)
    if not 0 < s.omega_max < min(1.0, bound):
        fail("scene.omega_max",
             f"must lie in (0, {min(1.0, bound):g}); beyond lambda/(4d) the "
             f"doubled covariance phases alias")
    if s.omega_max > 0.49 + 1e-12:
        import warnings
        warnings.warn(
            f"scene.omega_max={s.omega_max} exceeds the default 0.49 domain; "
            f"cosines close to lambda/(4d)={bound:g} risk aliasing",
            stacklevel=2)
    if not 0 < s.r_min < s.r_max:
        fail("scene.r_min", f"need 0 < r_min < r_max, got ({s.r_min}, {s.r_max})")
    if s.power_profile not in ("uniform", "equal", "exponential"):
        fail("scene.power_profile", f"unknown profile {s.power_profile!r}")
    if s.min_separation_bins < 0:
        fail("scene.min_separation_bins", "must be >= 0")
    if s.wavefront not in ("fresnel", "exact"):
        fail("scene.wavefront", f"must be fresnel or exact, got {s.wavefront!r}")
    if s.gain_model not in ("gaussian", "fixed", "orthogonal"):
        fail("scene.gain_model", f"unknown gain model {s.gain_model!r}")

    e = config.estimation
    if e.snapshots < 1:
        fail("estimation.snapshots", f"must be >= 1, got {e.snapshots}")
    if s.gain_model == "orthogonal" and e.snapshots < s.paths:
        fail("estimation.snapshots",
             f"orthogonal gains need snapshots >= paths ({s.paths})")
    if e.solver not in ("omp", "vbi"):
        fail("estimation.solver", f"must be omp or vbi, got {e.solver!r}")
    for name, pts, axis in (("azimuth_grid_points", e.azimuth_grid_points, g.n_y),
                            ("elevation_grid_points", e.elevation_grid_points, g.n_z)):
        effective = pts or axis
        if effective < 2:
            fail(f"estimation.{name}", f"must be >= 2, got {effective}")
    if e.distance_grid_points < 2:
        fail("estimation.distance_grid_points",
             f"must be >= 2, got {e.distance_grid_points}")
    if (e.sparsity or s.paths) < 1:
        fail("estimation.sparsity", "must be >= 1")
    if e.residual_tol < 0:
        fail("estimation.residual_tol", "must be >= 0")
    if e.pairing not in ("greedy", "assignment"):
        fail("estimation.pairing", f"must be greedy or assignment, got {e.pairing!r}")
    if e.sbl_max_iter < 1:
        fail("estimation.sbl_max_iter", "must be >= 1")
    if not e.sbl_tol > 0:
        fail("estimation.sbl_tol", "must be > 0")

    w = config.sweep
    if not w.snr_db:
        fail("sweep.snr_db", "must list at least one SNR point")
    if w.trials < 1:
        fail("sweep.trials", f"must be >= 1, got {w.trials}")
    if not 0 <= w.max_failure_rate <= 1:
        fail("sweep.max_failure_rate", "must lie in [0, 1]")
    if w.workers < 1:
        fail("sweep.workers", "must be >= 1")

    # Grid construction is part of the precondition surface; surface its
    # errors with a field path now rather than mid-sweep.
    try:
        config.make_grids()
    except Exception as exc:
        fail("estimation", str(exc))
    return config


def load_config(source: str | Path = "") -> ExperimentConfig:
    """Load and validate a configuration from a file path or inline text.

    An empty source yields the all-defaults configuration. ``Path``
    arguments and single-line strings naming an existing file are read
    from disk; anything else is parsed as inline text.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str) and source and "\n" not in source and Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    return _validate(_build_config(parse_config_text(text)))


def merge_config_sources(*texts: str) -> ExperimentConfig:
    """Parse several config texts; later keys override earlier ones."""
    merged: dict[str, object] = {}
    for text in texts:
        merged.update(parse_config_text(text))
    return _validate(_build_config(merged))


def preset_text(name: str) -> str:
    """Text of a committed preset configuration ('desk' or 'paper')."""
    from importlib.resources import files
    resource = files("nearfield.presets").joinpath(f"{name}.cfg")
    if not resource.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: desk, paper")
    return resource.read_text(encoding="utf-8")


# --------------------------------------------------------------------------
# records


@dataclass
class MetricRecord:
    """One sweep trial. ``nmse_db`` is NaN when the trial failed."""

    trial: int
    snr_db: float
    solver: str
    nmse_db: float
    az_exact: bool
    el_exact: bool
    r_exact: bool
    iterations: int
    runtime_ms: float
    seed: int

    @property
    def failed(self) -> bool:
        return math.isnan(self.nmse_db)


@dataclass
class ConvergenceRecord:
    trial: int
    iteration: int
    parameter: str
    nmse_db: float
    seed: int


@dataclass
class OracleRecord:
    trial: int
    match: bool
    dere_columns: int
    oracle_columns: int
    seed: int


def child_seed(master_seed: int, snr_index: int, trial_index: int) -> int:
    """Deterministic per-trial seed, independent of execution order."""
    ss = np.random.SeedSequence([int(master_seed), int(snr_index), int(trial_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --------------------------------------------------------------------------
# sweep execution


def _scene_grid_values(grids) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    az, el, r = grids
    finite_r = r.values[np.isfinite(r.values)]
    return az.values, el.values, finite_r


def _nearest_indices(values: np.ndarray, targets) -> list[int]:
    values = np.asarray(values, dtype=float)
    out = []
    for t in targets:
        if math.isinf(t):
            matches = np.where(np.isinf(values))[0]
            out.append(int(matches[0]) if len(matches) else len(values) - 1)
        else:
            finite = np.where(np.isfinite(values), values, np.inf)
            out.append(int(np.argmin(np.abs(finite - t))))
    return out


def _support_flags(ens: SnapshotEnsemble, diag, grids) -> tuple[bool, bool, bool]:
    az, el, r = grids
    true_oy = [p.cosines()[0] for p in ens.paths]
    true_oz = [p.cosines()[1] for p in ens.paths]
    true_r = [p.distance_r for p in ens.paths]
    az_exact = sorted(diag.supports["azimuth"]) == sorted(_nearest_indices(az.values, true_oy))
    el_exact = sorted(diag.supports["elevation"]) == sorted(_nearest_indices(el.values, true_oz))
    r_exact = sorted(diag.supports["distance"]) == sorted(_nearest_indices(r.values, true_r))
    return az_exact, el_exact, r_exact


def _run_trial(config: ExperimentConfig, geom: ArrayGeometry, grids,
               pcfg: PipelineConfig, snr_db: float, snr_index: int,
               trial_index: int) -> MetricRecord:
    seed = child_seed(config.seed, snr_index, trial_index)
    start = time.perf_counter()
    try:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        oy, oz, rr = _scene_grid_values(grids)
        paths = generate_paths(rng, config.make_scene(), omega_y_values=oy,
                               omega_z_values=oz, r_values=rr)
        ens = generate_snapshots(geom, paths, config.estimation.snapshots,
                                 snr_db, wavefront=config.scene.wavefront,
                                 seed=seed, gain_model=config.scene.gain_model)
        estimate, diag = estimate_channel(ens, pcfg)
        az_ok, el_ok, r_ok = _support_flags(ens, diag, grids)
        runtime_ms = (time.perf_counter() - start) * 1e3
        return MetricRecord(trial=trial_index, snr_db=snr_db,
                            solver=config.estimation.solver,
                            nmse_db=estimate.nmse_db, az_exact=az_ok,
                            el_exact=el_ok, r_exact=r_ok,
                            iterations=diag.iterations,
                            runtime_ms=runtime_ms, seed=seed)
    except Exception:
        runtime_ms = (time.perf_counter() - start) * 1e3
        return MetricRecord(trial=trial_index, snr_db=snr_db,
                            solver=config.estimation.solver,
                            nmse_db=math.nan, az_exact=False, el_exact=False,
                            r_exact=False, iterations=0,
                            runtime_ms=runtime_ms, seed=seed)


def run_sweep(config: ExperimentConfig) -> list[MetricRecord]:
    """Run the NMSE-versus-SNR sweep defined by the configuration.

    Individual trial failures never abort the sweep; they appear as
    NaN-marked records. Records are sorted by (snr_db, trial) and the
    result is identical for any worker count.
    """
    geom = config.make_geometry()
    grids = config.make_grids()
    pcfg = config.make_pipeline_config()
    tasks = [(snr, si, ti)
             for si, snr in enumerate(config.sweep.snr_db)
             for ti in range(config.sweep.trials)]

    def _task(args):
        snr, si, ti = args
        return _run_trial(config, geom, grids, pcfg, snr, si, ti)

    if config.sweep.workers > 1:
        with ThreadPoolExecutor(max_workers=config.sweep.workers) as pool:
            records = list(pool.map(_task, tasks))
    else:
        records = [_task(t) for t in tasks]
    records.sort(key=lambda r: (r.snr_db, r.trial))
    return records


def failure_rate(records: list[MetricRecord]) -> float:
    if not records:
        return 0.0
    return sum(1 for r in records if r.failed) / len(records)


def sweep_summary(records: list[MetricRecord], config: ExperimentConfig,
                  wall_s: float | None = None) -> str:
    """Human-readable sweep summary, including the sampling-cost contrast."""
    az, el, r = config.make_grids()
    L = config.sparsity()
    decomposed = az.count + el.count + L * r.count
    joint = az.count * el.count * r.count
    lines = [
        f"records: {len(records)}  failures: {failure_rate(records):.1%}",
        f"sampling columns: decomposed sum = {decomposed} "
        f"(N_az + N_el + L*N_r), joint product = {joint} (N_az*N_el*N_r)",
    ]
    if wall_s is not None:
        lines.append(f"wall time: {wall_s:.2f} s")
    for snr in sorted({r.snr_db for r in records}):
        vals = [x.nmse_db for x in records if x.snr_db == snr and not x.failed]
        if vals:
            lines.append(f"snr {snr:g} dB: median NMSE {statistics.median(vals):.2f} dB "
                         f"({len(vals)} trials)")
        else:
            lines.append(f"snr {snr:g} dB: no successful trials")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# convergence traces


def _permute_to_truth(estimates: list[float], truths: list[float]) -> list[float]:
    """Reorder estimates to best match the truths (min total |difference|)."""
    import itertools
    if not estimates:
        return []
    n = min(len(estimates), len(truths))
    est = estimates[:n]
    best, best_cost = est, math.inf
    for perm in itertools.permutations(est):
        cost = sum(abs(p - t) for p, t in zip(perm, truths[:n]))
        if cost < best_cost - 1e-15:
            best, best_cost = list(perm), cost
    return best


def _param_nmse(estimates: list[float], truths: list[float]) -> float:
    est = _permute_to_truth(estimates, truths)
    if not est:
        return 1.0
    n = len(est)
    denom = sum(t * t for t in truths[:n])
    if denom == 0.0:
        return 0.0 if all(e == 0 for e in est) else 1.0
    return sum((e - t) ** 2 for e, t in zip(est, truths[:n])) / denom


def _db(linear: float, floor: float = 1e-15) -> float:
    return 10.0 * math.log10(max(linear, floor))


def _history_atoms(history, grid_values, center_col, axis_length, top):
    """Top atoms (value, power) from one recorded solver iteration."""
    support, coef = history
    if coef.ndim == 1:
        coef = coef[:, None]
    powers = np.abs(coef[:, center_col]) ** 2 / axis_length
    order = np.argsort(-powers, kind="stable")[:top]
    return [(float(grid_values[support[i]]), float(powers[i])) for i in order]


def run_convergence(config: ExperimentConfig) -> list[ConvergenceRecord]:
    """Per-iteration NMSE traces of the Bayesian solver.

    Uses the first SNR point of the sweep block. For every trial the
    azimuth and elevation recoveries are instrumented per iteration; the
    distance recovery is re-run per direction as a single-measurement
    Bayesian recovery on its leave-one-out residual so it also yields a
    trace. The channel trace rebuilds the channel from the iteration-i
    estimates of all parameters (each stage clamps at its final value
    once converged).
    """
    if config.estimation.solver != "vbi":
        raise ConfigError("estimation.solver: convergence traces require 'vbi'")
    geom = config.make_geometry()
    grids = config.make_grids()
    az_grid, el_grid, r_grid = grids
    pcfg = replace(config.make_pipeline_config(), record_history=True)
    snr_db = config.sweep.snr_db[0]
    records: list[ConvergenceRecord] = []

    from .dictionaries import distance_dictionary
    from .recovery import _offset_indices

    for trial in range(config.sweep.trials):
        seed = child_seed(config.seed, 0, trial)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        oy_vals, oz_vals, rr_vals = _scene_grid_values(grids)
        paths = generate_paths(rng, config.make_scene(), omega_y_values=oy_vals,
                               omega_z_values=oz_vals, r_values=rr_vals)
        ens = generate_snapshots(geom, paths, config.estimation.snapshots,
                                 snr_db, wavefront=config.scene.wavefront,
                                 seed=seed, gain_model=config.scene.gain_model)
        try:
            estimate, diag = estimate_channel(ens, pcfg)
        except Exception:
            continue

        L = config.sparsity()
        truth_oy = [p.cosines()[0] for p in ens.paths]
        truth_oz = [p.cosines()[1] for p in ens.paths]
        truth_r = [p.distance_r for p in ens.paths]
        clean = ens.clean_snapshots()

        az_hist = diag.histories["azimuth"]
        el_hist = diag.histories["elevation"]
        row_offsets = _offset_indices(pcfg.row_offsets, (geom.n_z - 1) // 2)
        col_offsets = _offset_indices(pcfg.col_offsets, (geom.n_y - 1) // 2)
        az_center, el_center = row_offsets.index(0), col_offsets.index(0)

        # Leave-one-out Bayesian distance recovery per final direction.
        from .decomposition import covariance_origin
        w_r = covariance_origin(ens, debias=pcfg.debias).reshape(-1)
        directions = [(p[0], p[1]) for p in diag.pairs]
        dist_dicts = [distance_dictionary(geom, d, r_grid) for d in directions]
        final_cols = np.column_stack(
            [dist_dicts[i].columns[:, diag.distance_indices[i]]
             for i in range(len(directions))]) if directions else None
        final_coef = (np.linalg.lstsq(final_cols, w_r, rcond=None)[0]
                      if directions else None)
        dist_hists = []
        for i, dic in enumerate(dist_dicts):
            others = [j for j in range(len(directions)) if j != i]
            y = w_r - (final_cols[:, others] @ final_coef[others] if others else 0.0)
            res = sbl_vbi(y, dic, max_iter=pcfg.sbl_max_iter,
                          prune_threshold=pcfg.sbl_prune_threshold,
                          tol=pcfg.sbl_tol, record_history=True)
            dist_hists.append(res.history)

        n_iters = max([len(az_hist), len(el_hist)]
                      + [len(h) for h in dist_hists if h] or [1])

        def _clamped(hist, i):
            return hist[min(i, len(hist) - 1)] if hist else None

        for it in range(n_iters):
            az_atoms = _history_atoms(_clamped(az_hist, it), az_grid.values,
                                      az_center, geom.n_y, L) if az_hist else []
            el_atoms = _history_atoms(_clamped(el_hist, it), el_grid.values,
                                      el_center, geom.n_z, L) if el_hist else []
            r_now = []
            for h in dist_hists:
                step = _clamped(h, it)
                if step is None or not step[0]:
                    continue
                support, coef = step
                if coef.ndim == 1:
                    coef = coef[:, None]
                best = int(np.argmax(np.abs(coef[:, 0])))
                r_now.append(float(r_grid.values[support[best]]))

            records.append(ConvergenceRecord(
                trial=trial, iteration=it + 1, parameter="azimuth",
                nmse_db=_db(_param_nmse([a[0] for a in az_atoms], truth_oy)),
                seed=seed))
            records.append(ConvergenceRecord(
                trial=trial, iteration=it + 1, parameter="elevation",
                nmse_db=_db(_param_nmse([a[0] for a in el_atoms], truth_oz)),
                seed=seed))
            records.append(ConvergenceRecord(
                trial=trial, iteration=it + 1, parameter="distance",
                nmse_db=_db(_param_nmse(r_now, truth_r)), seed=seed))

            try:
                pairs, _ = match_angle_pairs(az_atoms, el_atoms,
                                             method=pcfg.pairing)
                pairs = sorted(pairs, key=lambda p: -p[2])
                est_paths = []
                for i, (poy, poz, ppow) in enumerate(pairs):
                    rr = r_now[i] if i < len(r_now) else r_grid.values[0]
                    est_paths.append(PathEstimate(poy, poz, float(rr),
                                                  max(ppow, 0.0)))
                gains = estimate_gains(ens, est_paths)
                rebuilt = reconstruct_channel(est_paths, gains, geom)
                chan_nmse, _ = nmse(rebuilt, clean)
            except Exception:
                chan_nmse = 1.0
            records.append(ConvergenceRecord(
                trial=trial, iteration=it + 1, parameter="channel",
                nmse_db=_db(chan_nmse), seed=seed))

    return records


# --------------------------------------------------------------------------
# oracle equivalence


def run_oracle_check(config: ExperimentConfig,
                     column_cap: int = 65536) -> list[OracleRecord]:
    """Compare decomposed supports with the joint-grid pursuit per trial."""
    geom = config.make_geometry()
    grids = config.make_grids()
    az_grid, el_grid, r_grid = grids
    joint_columns = az_grid.count * el_grid.count * r_grid.count
    if joint_columns > column_cap:
        raise ConfigError(
            f"estimation: joint grid has {joint_columns} columns, above the "
            f"cap {column_cap}; use smaller grids")
    pcfg = config.make_pipeline_config()
    snr_db = config.sweep.snr_db[0]
    records = []
    for trial in range(config.sweep.trials):
        seed = child_seed(config.seed, 0, trial)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        oy_vals, oz_vals, rr_vals = _scene_grid_values(grids)
        paths = generate_paths(rng, config.make_scene(), omega_y_values=oy_vals,
                               omega_z_values=oz_vals, r_values=rr_vals)
        ens = generate_snapshots(geom, paths, config.estimation.snapshots,
                                 snr_db, wavefront=config.scene.wavefront,
                                 seed=seed, gain_model=config.scene.gain_model)
        dere_cols = az_grid.count + el_grid.count + config.sparsity() * r_grid.count
        try:
            estimate, diag = estimate_channel(ens, pcfg)
            oracle = joint_grid_pursuit(ens, az_grid, el_grid, r_grid,
                                        config.sparsity(), column_cap=column_cap)
            dere_triples = set()
            for i, (poy, poz, _) in enumerate(diag.pairs):
                iy = _nearest_indices(az_grid.values, [poy])[0]
                iz = _nearest_indices(el_grid.values, [poz])[0]
                dere_triples.add((iy, iz, diag.distance_indices[i]))
            match = dere_triples == set(oracle.indices)
        except Exception:
            match = False
        records.append(OracleRecord(trial=trial, match=match,
                                    dere_columns=dere_cols,
                                    oracle_columns=joint_columns, seed=seed))
    return records


# --------------------------------------------------------------------------
# emission


def _fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _json_safe(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


SWEEP_CSV_HEADER = "trial,snr_db,solver,nmse_db,az_exact,el_exact,r_exact," \
                   "iterations,runtime_ms,seed"


def _write(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit(records: list[MetricRecord], fmt: str, path: str | Path,
         timing: bool = False) -> None:
    """Write sweep records as CSV or JSON.

    The CSV schema is fixed: header ``trial,snr_db,solver,nmse_db,
    az_exact,el_exact,r_exact,iterations,runtime_ms,seed``, LF line
    endings, '.' decimal separator, floats with 6 significant digits,
    booleans as 1/0, NaN as the failure marker. ``runtime_ms`` is written
    as 0 unless ``timing`` is set, keeping artifacts byte-reproducible.
    """
    if not records:
        raise ValueError("no records to emit")
    rows = sorted(records, key=lambda r: (r.snr_db, r.trial))
    if fmt == "csv":
        lines = [SWEEP_CSV_HEADER]
        for r in rows:
            rt = r.runtime_ms if timing else 0.0
            lines.append(",".join([
                str(r.trial), _fmt_float(r.snr_db), r.solver,
                _fmt_float(r.nmse_db), str(int(r.az_exact)),
                str(int(r.el_exact)), str(int(r.r_exact)),
                str(r.iterations), _fmt_float(rt), str(r.seed),
            ]))
        _write(path, "\n".join(lines) + "\n")
    elif fmt == "json":
        payload = [{
            "trial": r.trial,
            "snr_db": _json_safe(r.snr_db),
            "solver": r.solver,
            "nmse_db": _json_safe(r.nmse_db),
            "az_exact": r.az_exact,
            "el_exact": r.el_exact,
            "r_exact": r.r_exact,
            "iterations": r.iterations,
            "runtime_ms": r.runtime_ms if timing else 0.0,
            "seed": r.seed,
        } for r in rows]
        _write(path, json.dumps(payload, indent=2) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def records_from_json(path: str | Path) -> list[MetricRecord]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)

    def _num(x):
        if x is None:
            return math.nan
        if x == "inf":
            return math.inf
        if x == "-inf":
            return -math.inf
        return float(x)

    return [MetricRecord(trial=p["trial"], snr_db=_num(p["snr_db"]),
                         solver=p["solver"], nmse_db=_num(p["nmse_db"]),
                         az_exact=bool(p["az_exact"]), el_exact=bool(p["el_exact"]),
                         r_exact=bool(p["r_exact"]), iterations=p["iterations"],
                         runtime_ms=float(p["runtime_ms"]), seed=p["seed"])
            for p in payload]


CONVERGE_CSV_HEADER = "trial,iteration,parameter,nmse_db,seed"


def emit_convergence(records: list[ConvergenceRecord], fmt: str,
                     path: str | Path) -> None:
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        lines = [CONVERGE_CSV_HEADER]
        for r in records:
            lines.append(",".join([str(r.trial), str(r.iteration), r.parameter,
                                   _fmt_float(r.nmse_db), str(r.seed)]))
        _write(path, "\n".join(lines) + "\n")
    elif fmt == "json":
        payload = [{"trial": r.trial, "iteration": r.iteration,
                    "parameter": r.parameter, "nmse_db": _json_safe(r.nmse_db),
                    "seed": r.seed} for r in records]
        _write(path, json.dumps(payload, indent=2) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


ORACLE_CSV_HEADER = "trial,match,dere_columns,oracle_columns,seed"


def emit_oracle(records: list[OracleRecord], fmt: str, path: str | Path) -> None:
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        lines = [ORACLE_CSV_HEADER]
        for r in records:
            lines.append(",".join([str(r.trial), str(int(r.match)),
                                   str(r.dere_columns), str(r.oracle_columns),
                                   str(r.seed)]))
        _write(path, "\n".join(lines) + "\n")
    elif fmt == "json":
        payload = [{"trial": r.trial, "match": r.match,
                    "dere_columns": r.dere_columns,
                    "oracle_columns": r.oracle_columns, "seed": r.seed}
                   for r in records]
        _write(path, json.dumps(payload, indent=2) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


# --------------------------------------------------------------------------
# ensemble serialization (binary-free interchange)


def _complex_to_pairs(arr: np.ndarray) -> list:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _pairs_to_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def ensemble_to_dict(ens: SnapshotEnsemble) -> dict:
    """JSON-ready ensemble: complex values appear as [re, im] pairs."""
    return {
        "geometry": {"n_y": ens.geometry.n_y, "n_z": ens.geometry.n_z,
                     "spacing_d": ens.geometry.spacing_d,
                     "wavelength": ens.geometry.wavelength},
        "paths": [{"theta": p.direction.theta, "phi": p.direction.phi,
                   "distance_r": "inf" if math.isinf(p.distance_r) else p.distance_r,
                   "power": p.power} for p in ens.paths],
        "snapshots": _complex_to_pairs(ens.snapshots),
        "gains": _complex_to_pairs(ens.gains),
        "snr_db": "inf" if math.isinf(ens.snr_db) else ens.snr_db,
        "seed": ens.seed,
        "wavefront": ens.wavefront,
        "gain_model": ens.gain_model,
    }


def ensemble_from_dict(payload: dict) -> SnapshotEnsemble:
    from .geometry import Direction
    g = payload["geometry"]
    geom = ArrayGeometry(n_y=g["n_y"], n_z=g["n_z"], spacing_d=g["spacing_d"],
                         wavelength=g["wavelength"])
    paths = tuple(
        PathParam(direction=Direction(theta=p["theta"], phi=p["phi"]),
                  distance_r=math.inf if p["distance_r"] == "inf" else p["distance_r"],
                  power=p["power"])
        for p in payload["paths"])
    snr = math.inf if payload["snr_db"] == "inf" else float(payload["snr_db"])
    return SnapshotEnsemble(
        geometry=geom, paths=paths,
        snapshots=_pairs_to_complex(payload["snapshots"]),
        gains=_pairs_to_complex(payload["gains"]),
        snr_db=snr, seed=payload["seed"],
        wavefront=payload.get("wavefront", "fresnel"),
        gain_model=payload.get("gain_model", "gaussian"))


def save_ensemble(ens: SnapshotEnsemble, path: str | Path) -> None:
    _write(path, json.dumps(ensemble_to_dict(ens)) + "\n")


def load_ensemble(path: str | Path) -> SnapshotEnsemble:
    with open(path, encoding="utf-8") as fh:
        return ensemble_from_dict(json.load(fh))
