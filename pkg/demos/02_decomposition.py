#!/usr/bin/env python3
"""Why joint angle/distance sampling smears power, and how the covariance
decomposition undoes it.

A three-scatterer near-field scene is sampled two ways:

1. naively, by correlating the origin-referenced statistic against joint
   steering columns (the power spreads and its peaks wander off the true
   parameters);
2. through the three decomposed statistics, whose one-dimensional spectra
   spike exactly at the true azimuth cosines, elevation cosines and
   reciprocal distances.
"""

import math

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from pathlib import Path

from nearfield import (ArrayGeometry, SceneSpec, generate_paths,
                       generate_snapshots, power_spectrum_diagnostics)
from nearfield.decomposition import (covariance_symmetric, covariance_origin,
                                     sparse_function_azimuth,
                                     sparse_function_elevation)
from nearfield.dictionaries import (angle_grid, angle_dictionary,
                                    distance_grid, distance_dictionary)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

geom = ArrayGeometry(33, 17, 0.005, 0.01)
az_grid = angle_grid(33, 0.49)
el_grid = angle_grid(17, 0.49, kind="elevation")
r_grid = distance_grid(0.32, 6.4, 16)

scene = SceneSpec(n_paths=3, r_min=0.32, r_max=6.4, power_profile="exponential")
paths = generate_paths(np.random.default_rng(6), scene, az_grid.values,
                       el_grid.values, r_grid.values)
# Orthogonal gain codes make the covariance statistics population-exact,
# so any peak mislocation below is structural, not estimation noise.
import math as _math
ens = generate_snapshots(geom, paths, 3, _math.inf, seed=6,
                         gain_model="orthogonal")
for i, p in enumerate(paths):
    oy, oz = p.cosines()
    print(f"path {i}: omega_y={oy:+.3f} omega_z={oz:+.3f} "
          f"r={p.distance_r:.2f} m power={p.power:.3f}")

weakest = min(paths, key=lambda p: p.power)
spectra = power_spectrum_diagnostics(ens, az_grid.values, el_grid.values,
                                     r_grid.values, at_r=weakest.distance_r,
                                     along=weakest.cosines())

# Decomposed spectra: project each sparse function on its own dictionary.
c = covariance_symmetric(ens)
w_theta = sparse_function_azimuth(c)
w_phi = sparse_function_elevation(c)
w_r = covariance_origin(ens)

dic_az = angle_dictionary(33, az_grid, doubled=True)
dic_el = angle_dictionary(17, el_grid, doubled=True)
az_spec = np.abs(dic_az.columns.conj().T @ w_theta[8, :])
el_spec = np.abs(dic_el.columns.conj().T @ w_phi[:, 16])

# The distance stage never correlates the weak path against the raw
# statistic: the stronger paths' fitted contributions are subtracted
# first. Show the weak path's spectrum on exactly that residual.
dic_r = distance_dictionary(geom, weakest.cosines(), r_grid)
stronger = sorted(paths, key=lambda p: -p.power)[:-1]
cols = np.column_stack([
    distance_dictionary(geom, p.cosines(), r_grid).columns[
        :, int(np.argmin(np.abs(r_grid.values - p.distance_r)))]
    for p in stronger])
coef, *_ = np.linalg.lstsq(cols, w_r.reshape(-1), rcond=None)
residual = w_r.reshape(-1) - cols @ coef
r_spec = np.abs(dic_r.columns.conj().T @ residual)

fig, axes = plt.subplots(2, 2, figsize=(11, 7), constrained_layout=True)
im = axes[0, 0].imshow(spectra.angular, origin="lower", aspect="auto",
                       extent=[az_grid.values[0], az_grid.values[-1],
                               el_grid.values[0], el_grid.values[-1]])
axes[0, 0].scatter(*zip(*[p.cosines() for p in paths]), marker="x", c="r")
axes[0, 0].set_title("naive joint angular spectrum (x = truth)")
fig.colorbar(im, ax=axes[0, 0])

axes[0, 1].plot(spectra.r_values, spectra.distance, "o-")
axes[0, 1].axvline(weakest.distance_r, color="r", ls="--", label="true r")
axes[0, 1].set_title("naive distance spectrum along weakest path")
axes[0, 1].set_xlabel("r (m)")
axes[0, 1].legend()

axes[1, 0].stem(az_grid.values, az_spec)
for p in paths:
    axes[1, 0].axvline(p.cosines()[0], color="r", ls="--", alpha=0.5)
axes[1, 0].set_title("decomposed azimuth spectrum")
axes[1, 0].set_xlabel("omega_y")

axes[1, 1].plot(r_grid.values, r_spec, "o-")
axes[1, 1].axvline(weakest.distance_r, color="r", ls="--")
axes[1, 1].set_title("distance spectrum after stronger-path removal")
axes[1, 1].set_xlabel("r (m)")

fig.savefig(OUT / "decomposition_spectra.png", dpi=120)
print(f"wrote {OUT / 'decomposition_spectra.png'}")

true_bin = int(np.argmin(np.abs(r_grid.values - weakest.distance_r)))
print(f"naive distance argmax bin: {int(np.argmax(spectra.distance))}, "
      f"true bin: {true_bin}")
print(f"residual-based distance argmax bin: {int(np.argmax(r_spec))}")

# The covariance's distance invariance in one line: the statistic is the
# same whether the scatterers sit at 2 m or at 50 m.
from nearfield import PathParam
from nearfield.geometry import Direction
d = Direction(0.3, -0.2)
e1 = generate_snapshots(geom, [PathParam(d, 2.0, 1.0)], 1, math.inf, seed=0,
                        gain_model="fixed")
e2 = generate_snapshots(geom, [PathParam(d, 50.0, 1.0)], 1, math.inf, seed=0,
                        gain_model="fixed")
gap = np.max(np.abs(covariance_symmetric(e1) - covariance_symmetric(e2)))
print(f"covariance distance-invariance gap between r=2 and r=50: {gap:.2e}")
