"""Generic sparse solvers and the per-parameter recovery front-ends.

Two solver families operate on any unit-norm dictionary:

* ``omp`` is (simultaneous) orthogonal matching pursuit: greedy atom
  selection by summed |correlation| across measurement vectors, with a
  joint least-squares re-solve over the accumulated support at every
  step. Ties break toward the lowest grid index, so results are
  bit-for-bit deterministic.
* ``sbl_vbi`` is sparse Bayesian learning by evidence maximization: one
  variance hyperparameter per column, alternating posterior and
  hyperparameter updates, optional pruning of columns whose precision
  exceeds a threshold, and a per-iteration reconstruction-error trace.

The ``recover_*`` functions map the decomposition statistics onto these
solvers: azimuth uses rows of W_theta as joint measurements, elevation
uses columns of W_phi, and distance runs a sequential single-atom pursuit
of W_r along the already-paired directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry
from .dictionaries import Dictionary, ParameterGrid, distance_dictionary

__all__ = [
    "StoppingRule",
    "RecoveryResult",
    "AtomEstimate",
    "omp",
    "sbl_vbi",
    "recover_azimuth",
    "recover_elevation",
    "recover_distance",
]


@dataclass(frozen=True)
class StoppingRule:
    """Stopping condition for greedy recovery.

    ``mode`` is one of 'fixed-sparsity', 'residual-threshold' or
    'combined'. Fixed sparsity stops after ``sparsity`` atoms; the
    residual mode stops once the residual norm drops to ``residual_tol``;
    combined stops at whichever comes first. ``max_iterations`` caps the
    iteration count in all modes (0 means derive it from the mode).
    """

    mode: str = "fixed-sparsity"
    sparsity: int = 1
    residual_tol: float = 0.0
    max_iterations: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("fixed-sparsity", "residual-threshold", "combined"):
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if self.mode != "residual-threshold" and self.sparsity < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.sparsity}")
        if self.residual_tol < 0:
            raise ValueError(f"residual_tol must be >= 0, got {self.residual_tol}")

    @classmethod
    def fixed(cls, sparsity: int) -> "StoppingRule":
        return cls(mode="fixed-sparsity", sparsity=sparsity)

    @classmethod
    def residual(cls, tol: float, max_iterations: int = 0) -> "StoppingRule":
        return cls(mode="residual-threshold", residual_tol=tol,
                   max_iterations=max_iterations)

    @classmethod
    def combined(cls, sparsity: int, tol: float) -> "StoppingRule":
        return cls(mode="combined", sparsity=sparsity, residual_tol=tol)

    def atom_budget(self, n_columns: int) -> int:
        if self.mode == "residual-threshold":
            budget = self.max_iterations or n_columns
        else:
            budget = self.sparsity
            if self.max_iterations:
                budget = min(budget, self.max_iterations)
        return budget


@dataclass
class RecoveryResult:
    """Support, coefficients and convergence trace of one solver run.

    ``coefficients`` has one row per support index; for a single
    measurement vector it is 1D. ``trace`` holds per-iteration residual
    norms (OMP) or reconstruction errors (SBL). ``history``, when
    recorded, stores per-iteration (support, coefficients) snapshots.
    """

    support: list[int]
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    trace: list[float]
    converged: bool = True
    history: list[tuple[list[int], np.ndarray]] | None = None


def _as_measurement_matrix(measurements: np.ndarray) -> tuple[np.ndarray, bool]:
    y = np.asarray(measurements)
    if y.ndim == 1:
        return y[:, None].astype(complex), True
    if y.ndim == 2:
        return y.astype(complex), False
    raise ValueError("measurements must be a vector or a matrix of column vectors")


def omp(measurements: np.ndarray, dictionary: Dictionary,
        stop: StoppingRule, record_history: bool = False) -> RecoveryResult:
    """(Simultaneous) orthogonal matching pursuit.

    Each iteration selects the column maximizing the summed |correlation|
    with the current residuals across all measurement vectors (ties break
    to the lowest index), then re-solves least squares jointly over the
    accumulated support. The residual norm is non-increasing.
    """
    y, squeeze = _as_measurement_matrix(measurements)
    phi = dictionary.columns
    if y.shape[0] != phi.shape[0]:
        raise ValueError(
            f"measurement length {y.shape[0]} != dictionary axis {phi.shape[0]}")
    budget = stop.atom_budget(phi.shape[1])
    if budget > phi.shape[1]:
        raise ValueError(
            f"stopping rule demands {budget} atoms but the dictionary has "
            f"only {phi.shape[1]} columns")

    support: list[int] = []
    coef = np.zeros((0, y.shape[1]), dtype=complex)
    residual = y
    trace: list[float] = []
    history: list[tuple[list[int], np.ndarray]] | None = [] if record_history else None

    while len(support) < budget:
        scores = np.abs(phi.conj().T @ residual).sum(axis=1)
        if support:
            scores[support] = -1.0
        support.append(int(np.argmax(scores)))
        a = phi[:, support]
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        residual = y - a @ coef
        res_norm = float(np.linalg.norm(residual))
        trace.append(res_norm)
        if history is not None:
            history.append((list(support), coef.copy()))
        if stop.mode in ("residual-threshold", "combined") and res_norm <= stop.residual_tol:
            break

    return RecoveryResult(
        support=support,
        coefficients=coef[:, 0] if squeeze else coef,
        residual_norm=trace[-1] if trace else float(np.linalg.norm(y)),
        iterations=len(support),
        trace=trace,
        history=history,
    )


def sbl_vbi(measurements: np.ndarray, dictionary: Dictionary,
            max_iter: int = 50, prune_threshold: float = 1e6,
            tol: float = 1e-4, record_history: bool = False) -> RecoveryResult:
    """Sparse Bayesian learning with per-column variance hyperparameters.

    Measurements are internally scaled to unit average power so the
    pruning threshold (on the precision 1/gamma) is scale-free. The noise
    precision is re-estimated every iteration. Iteration stops once the
    hyperparameters of the well-determined columns change by less than
    ``tol`` on a log scale and no column was pruned in the step; columns
    on their way out keep diverging right up to pruning and are excluded
    from the check. Non-convergence within ``max_iter`` is reported
    through ``converged``, not raised. The trace holds the per-iteration
    reconstruction error ||Y - Phi mu||^2 / ||Y||^2 against the
    measurement.
    """
    y, squeeze = _as_measurement_matrix(measurements)
    phi = dictionary.columns
    if y.shape[0] != phi.shape[0]:
        raise ValueError(
            f"measurement length {y.shape[0]} != dictionary axis {phi.shape[0]}")
    m_dim, k_dim = y.shape
    n_atoms = phi.shape[1]

    scale = float(np.linalg.norm(y)) / math.sqrt(m_dim * k_dim)
    if scale == 0.0:
        return RecoveryResult(support=[], coefficients=np.zeros((0, k_dim), dtype=complex),
                              residual_norm=0.0, iterations=0, trace=[], converged=True,
                              history=[] if record_history else None)
    yn = y / scale
    y_energy = float(np.linalg.norm(yn) ** 2)

    eps = 1e-12
    active = np.arange(n_atoms)
    alpha = np.ones(n_atoms)           # per-column precision hyperparameters
    beta = 10.0
    trace: list[float] = []
    history: list[tuple[list[int], np.ndarray]] | None = [] if record_history else None
    converged = False
    mu = np.zeros((n_atoms, k_dim), dtype=complex)
    iterations = 0

    for iterations in range(1, max_iter + 1):
        phi_a = phi[:, active]
        gram = phi_a.conj().T @ phi_a
        h = beta * gram + np.diag(alpha)
        sigma = np.linalg.inv(h)
        mu = beta * (sigma @ (phi_a.conj().T @ yn))

        resid = yn - phi_a @ mu
        err = float(np.linalg.norm(resid) ** 2)
        trace.append(err / y_energy)
        if history is not None:
            history.append((list(map(int, active)), mu * scale))

        sigma_diag = np.real(np.diag(sigma))
        # Well-determinedness factors and the classic fixed-point updates:
        # irrelevant columns see their precision diverge within a few steps.
        well = np.clip(1.0 - alpha * sigma_diag, eps, None)
        mu_power = np.maximum((np.abs(mu) ** 2).mean(axis=1), 1e-300)
        alpha_new = well / mu_power
        beta = max(m_dim - float(well.sum()), eps) * k_dim / (err + 1e-30)
        beta = min(beta, 1e12)

        # Convergence is judged on the columns the posterior actually
        # determines; the rest diverge toward the pruning threshold.
        determined = well > 0.5
        if np.any(determined):
            delta = float(np.max(np.abs(
                np.log(alpha_new[determined] + eps)
                - np.log(alpha[determined] + eps))))
        else:
            delta = math.inf
        alpha = alpha_new

        pruned = False
        if math.isfinite(prune_threshold):
            keep = alpha < prune_threshold
            if not np.any(keep):
                keep[int(np.argmin(alpha))] = True
            if not np.all(keep):
                active = active[keep]
                alpha = alpha[keep]
                mu = mu[keep]
                pruned = True

        if not pruned and delta < tol and iterations > 2:
            converged = True
            break

    order = np.argsort(-(np.abs(mu) ** 2).mean(axis=1), kind="stable")
    support = [int(active[i]) for i in order]
    coefficients = (mu[order] * scale)
    residual_norm = float(np.linalg.norm(y - phi[:, support] @ coefficients)) \
        if support else float(np.linalg.norm(y))

    return RecoveryResult(
        support=support,
        coefficients=coefficients[:, 0] if squeeze else coefficients,
        residual_norm=residual_norm,
        iterations=iterations,
        trace=trace,
        converged=converged,
        history=history,
    )


@dataclass(frozen=True)
class AtomEstimate:
    """One recovered grid atom.

    ``power`` is derived from the center-row (or center-column)
    coefficient normalized by the axis length, which in the population
    limit equals the squared path power on both the azimuth and the
    elevation side and is therefore comparable across the two.
    ``aggregate_power`` sums squared coefficient magnitudes across all
    measurement vectors and is kept for diagnostics.
    """

    value: float
    power: float
    index: int
    coefficients: np.ndarray = field(repr=False, default=None)
    aggregate_power: float = 0.0


def _run_solver(measurements, dictionary, stop, solver, sbl_options, record_history):
    if solver == "omp":
        return omp(measurements, dictionary, stop, record_history=record_history)
    if solver == "vbi":
        options = dict(sbl_options or {})
        return sbl_vbi(measurements, dictionary, record_history=record_history, **options)
    raise ValueError(f"unknown solver {solver!r}")


def _atoms_from_result(result: RecoveryResult, grid: ParameterGrid,
                       center_column: int, axis_length: int) -> list[AtomEstimate]:
    coef = result.coefficients
    if coef.ndim == 1:
        coef = coef[:, None]
    atoms = []
    for row, j in enumerate(result.support):
        c = coef[row]
        atoms.append(AtomEstimate(
            value=float(grid.values[j]),
            power=float(np.abs(c[center_column]) ** 2) / axis_length,
            index=int(j),
            coefficients=c.copy(),
            aggregate_power=float(np.sum(np.abs(c) ** 2)),
        ))
    atoms.sort(key=lambda a: (-a.power, a.index))
    return atoms


def _offset_indices(offsets, half: int) -> list[int]:
    seen = []
    for off in offsets:
        if abs(off) <= half and off not in seen:
            seen.append(off)
    if 0 not in seen:
        seen.insert(0, 0)
    return seen


def recover_azimuth(w_theta: np.ndarray, dictionary: Dictionary, stop: StoppingRule,
                    solver: str = "omp", row_offsets=(0, 1, -1, 2, -2),
                    sbl_options: dict | None = None, record_history: bool = False,
                    ) -> tuple[list[AtomEstimate], RecoveryResult]:
    """Recover azimuth cosines from rows of the azimuth sparse function.

    The rows at offsets ``row_offsets`` (n = 0 is always included) form a
    joint multiple-measurement-vector problem over the frequency-doubled
    azimuth dictionary. The center row alone is analytically clean but a
    path whose elevation weight cos(2*k*d*n*Omega_z) vanishes on some row
    would be invisible there, so several rows are used by default.
    Returns atoms sorted by power descending, plus the raw solver result.
    """
    n_z, n_y = w_theta.shape
    if dictionary.axis_length != n_y:
        raise ValueError(
            f"dictionary axis {dictionary.axis_length} != row length {n_y}")
    offsets = _offset_indices(row_offsets, (n_z - 1) // 2)
    rows = [(n_z - 1) // 2 + off for off in offsets]
    measurements = w_theta[rows, :].T          # (n_y, n_rows)
    result = _run_solver(measurements, dictionary, stop, solver, sbl_options,
                         record_history)
    atoms = _atoms_from_result(result, dictionary.grid, offsets.index(0), n_y)
    return atoms, result


def recover_elevation(w_phi: np.ndarray, dictionary: Dictionary, stop: StoppingRule,
                      solver: str = "omp", col_offsets=(0, 1, -1, 2, -2),
                      sbl_options: dict | None = None, record_history: bool = False,
                      ) -> tuple[list[AtomEstimate], RecoveryResult]:
    """Mirror of :func:`recover_azimuth` using columns of W_phi."""
    n_z, n_y = w_phi.shape
    if dictionary.axis_length != n_z:
        raise ValueError(
            f"dictionary axis {dictionary.axis_length} != column length {n_z}")
    offsets = _offset_indices(col_offsets, (n_y - 1) // 2)
    cols = [(n_y - 1) // 2 + off for off in offsets]
    measurements = w_phi[:, cols]              # (n_z, n_cols)
    result = _run_solver(measurements, dictionary, stop, solver, sbl_options,
                         record_history)
    atoms = _atoms_from_result(result, dictionary.grid, offsets.index(0), n_z)
    return atoms, result


@dataclass
class DistanceRecovery:
    """Distances chosen per direction plus the pursuit bookkeeping."""

    distances: list[float]
    indices: list[int]
    residual_trace: list[float]
    columns_used: int


def recover_distance(w_r: np.ndarray,
                     matched_directions: list[tuple[float, float]],
                     geom: ArrayGeometry,
                     r_grid: ParameterGrid,
                     refine_passes: int = 2) -> DistanceRecovery:
    """Sequential per-direction distance pursuit on the origin statistic.

    Directions must already be paired and ordered (strongest first). For
    each direction a fresh distance dictionary is built along it, the
    single best-correlating column against the current residual is taken,
    and a joint least-squares refit over all columns selected so far
    updates the residual before the next direction.

    The initial pass picks weaker paths against residuals still containing
    the paths not yet estimated, which can bias their choice by one bin on
    correlated grids. Up to ``refine_passes`` cyclic sweeps therefore
    re-select each direction's distance against its leave-one-out residual
    (all other directions' fitted contributions removed); each sweep only
    reuses the already-built dictionaries and stops early once no index
    changes.
    """
    v = w_r.reshape(-1).astype(complex)
    residual = v
    dictionaries: list[np.ndarray] = []
    chosen_cols: list[np.ndarray] = []
    indices: list[int] = []
    trace: list[float] = []
    for cosines in matched_directions:
        dic = distance_dictionary(geom, cosines, r_grid)
        dictionaries.append(dic.columns)
        scores = np.abs(dic.columns.conj().T @ residual)
        j = int(np.argmax(scores))
        indices.append(j)
        chosen_cols.append(dic.columns[:, j])
        a = np.column_stack(chosen_cols)
        coef, *_ = np.linalg.lstsq(a, v, rcond=None)
        residual = v - a @ coef
        trace.append(float(np.linalg.norm(residual)))

    n_dir = len(matched_directions)
    for _ in range(refine_passes if n_dir > 1 else 0):
        changed = False
        for d in range(n_dir):
            others = [k for k in range(n_dir) if k != d]
            a_others = np.column_stack([chosen_cols[k] for k in others])
            coef, *_ = np.linalg.lstsq(a_others, v, rcond=None)
            loo_residual = v - a_others @ coef
            scores = np.abs(dictionaries[d].conj().T @ loo_residual)
            j = int(np.argmax(scores))
            if j != indices[d]:
                indices[d] = j
                chosen_cols[d] = dictionaries[d][:, j]
                changed = True
        a = np.column_stack(chosen_cols)
        coef, *_ = np.linalg.lstsq(a, v, rcond=None)
        trace.append(float(np.linalg.norm(v - a @ coef)))
        if not changed:
            break

    return DistanceRecovery(
        distances=[float(r_grid.values[j]) for j in indices],
        indices=indices,
        residual_trace=trace,
        columns_used=r_grid.count * len(matched_directions),
    )
