"""Near-field planar-array channel simulation and sparse estimation.

The package splits the coupled azimuth/elevation/distance parameters of
spherical-wavefront channels into three one-dimensional covariance
statistics, recovers each by compressive sensing, re-associates the
angles by power similarity and rebuilds the channel. A benchmark harness
measures NMSE against SNR and solver convergence.
"""

from .geometry import (ArrayGeometry, Direction, InvalidDirectionError,
                       direction_cosines, direction_from_cosines,
                       element_positions, rayleigh_distance)
from .channel import (FAR_FIELD, PathParam, SceneSpec, SnapshotEnsemble,
                      SceneError, generate_paths, generate_snapshots,
                      steering_exact, steering_fresnel)
from .decomposition import (SparseFunctionSet, covariance_origin,
                            covariance_symmetric, decompose,
                            power_spectrum_diagnostics,
                            sparse_function_azimuth, sparse_function_elevation)
from .dictionaries import (Dictionary, GridError, ParameterGrid, angle_grid,
                           angle_dictionary, coherence, distance_grid,
                           distance_dictionary)
from .recovery import (AtomEstimate, RecoveryResult, StoppingRule, omp,
                       recover_azimuth, recover_distance, recover_elevation,
                       sbl_vbi)
from .reconstruction import (ChannelEstimate, PathEstimate, PipelineConfig,
                             PipelineDiagnostics, StageError, estimate_channel,
                             estimate_gains, joint_grid_pursuit,
                             match_angle_pairs, nmse, reconstruct_channel)
from .harness import (ConfigError, ExperimentConfig, MetricRecord, emit,
                      load_config, run_convergence, run_oracle_check,
                      run_sweep, save_ensemble, load_ensemble)

__version__ = "0.1.0"
