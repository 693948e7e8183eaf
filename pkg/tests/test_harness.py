import json
import math
from pathlib import Path

import numpy as np
import pytest

from nearfield import harness
from nearfield.harness import (ConfigError, child_seed, ensemble_from_dict,
                               ensemble_to_dict, load_config,
                               merge_config_sources, preset_text,
                               records_from_json, run_oracle_check, run_sweep)


def test_defaults_config():
    cfg = load_config("")
    assert (cfg.geometry.n_y, cfg.geometry.n_z) == (33, 17)
    assert cfg.geometry.carrier_hz == 30e9
    assert cfg.scene.paths == 3
    assert cfg.sweep.snr_db == (0.0, 5.0, 10.0, 15.0, 20.0)


def test_even_dimension_rejected_with_field_path():
    with pytest.raises(ConfigError, match="geometry.n_y"):
        load_config("geometry.n_y = 128")


def test_full_scale_config_valid():
    cfg = load_config("geometry.n_y = 129\ngeometry.n_z = 65")
    assert cfg.make_geometry().n_elements == 8385


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        load_config("geometry.n_x = 3")


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        load_config("geometry.n_y = 33\ngeometry.n_z thirty")


def test_bad_value_reports_key():
    with pytest.raises(ConfigError, match="sweep.trials"):
        load_config("sweep.trials = many")


def test_config_file_loading(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("geometry.n_y = 9\ngeometry.n_z = 9\n", encoding="utf-8")
    assert load_config(path).geometry.n_y == 9
    assert load_config(str(path)).geometry.n_y == 9


def test_comments_and_blank_lines():
    cfg = load_config("# comment\n\n; other comment\nscene.paths = 2\n")
    assert cfg.scene.paths == 2


def test_presets_load():
    desk = merge_config_sources(preset_text("desk"))
    paper = merge_config_sources(preset_text("paper"))
    assert (desk.geometry.n_y, desk.geometry.n_z) == (33, 17)
    assert (paper.geometry.n_y, paper.geometry.n_z) == (129, 65)
    with pytest.raises(ConfigError):
        preset_text("galaxy")


def test_omega_max_alias_guard():
    with pytest.raises(ConfigError, match="scene.omega_max"):
        load_config("scene.omega_max = 0.6")


def test_omega_max_warning_above_default_domain():
    with pytest.warns(UserWarning):
        load_config("geometry.d_over_lambda = 0.25\nscene.omega_max = 0.8")


def test_child_seed_deterministic_and_distinct():
    a = child_seed(7, 0, 0)
    assert a == child_seed(7, 0, 0)
    assert a != child_seed(7, 0, 1)
    assert a != child_seed(7, 1, 0)
    assert a != child_seed(8, 0, 0)


def fast_sweep_text(**overrides):
    base = {
        "geometry.n_y": 33, "geometry.n_z": 17,
        "scene.r_min": 0.32, "scene.r_max": 6.4,
        "scene.power_profile": "exponential",
        "scene.gain_model": "orthogonal",
        "estimation.snapshots": 8,
        "estimation.distance_grid_points": 8,
        "sweep.snr_db": "inf", "sweep.trials": 2,
    }
    base.update(overrides)
    return "\n".join(f"{k} = {v}" for k, v in base.items())


def test_run_sweep_single_record():
    cfg = load_config(fast_sweep_text(**{"sweep.trials": 1}))
    records = run_sweep(cfg)
    assert len(records) == 1
    assert records[0].trial == 0
    assert math.isinf(records[0].snr_db)


def test_run_sweep_noiseless_on_grid_supports_exact():
    cfg = load_config(fast_sweep_text(**{"sweep.trials": 6}))
    records = run_sweep(cfg)
    assert all(r.az_exact and r.el_exact and r.r_exact for r in records)
    assert all(r.nmse_db < -100 for r in records)


def test_run_sweep_failures_marked_not_raised():
    # sparsity above the grid sizes breaks every trial inside the solver
    cfg = load_config(fast_sweep_text(**{"estimation.sparsity": 64}))
    records = run_sweep(cfg)
    assert len(records) == 2
    assert all(r.failed for r in records)
    assert harness.failure_rate(records) == 1.0


def test_run_sweep_worker_count_invariance():
    text = fast_sweep_text(**{"sweep.trials": 4})
    seq = run_sweep(load_config(text))
    par = run_sweep(load_config(text + "\nsweep.workers = 3"))
    assert [(r.trial, r.seed, r.nmse_db) for r in seq] == \
        [(r.trial, r.seed, r.nmse_db) for r in par]


def test_emit_csv_schema_and_determinism(tmp_path):
    cfg = load_config(fast_sweep_text())
    records = run_sweep(cfg)
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.emit(records, "csv", out_a)
    harness.emit(run_sweep(cfg), "csv", out_b)
    text = out_a.read_text(encoding="utf-8")
    assert text.splitlines()[0] == ("trial,snr_db,solver,nmse_db,az_exact,"
                                    "el_exact,r_exact,iterations,runtime_ms,seed")
    assert out_a.read_bytes() == out_b.read_bytes()
    assert "\r" not in text
    # measured runtimes are zeroed unless requested
    assert all(line.split(",")[8] == "0" for line in text.splitlines()[1:])


def test_emit_single_record_two_lines(tmp_path):
    cfg = load_config(fast_sweep_text(**{"sweep.trials": 1}))
    records = run_sweep(cfg)
    path = tmp_path / "one.csv"
    harness.emit(records, "csv", path)
    assert len(path.read_text(encoding="utf-8").splitlines()) == 2


def test_emit_json_round_trip(tmp_path):
    cfg = load_config(fast_sweep_text())
    records = run_sweep(cfg)
    path = tmp_path / "records.json"
    harness.emit(records, "json", path)
    loaded = records_from_json(path)
    assert len(loaded) == len(records)
    for a, b in zip(loaded, sorted(records, key=lambda r: (r.snr_db, r.trial))):
        assert a.trial == b.trial
        assert a.seed == b.seed
        assert a.solver == b.solver
        assert (math.isnan(a.nmse_db) and math.isnan(b.nmse_db)) or \
            a.nmse_db == pytest.approx(b.nmse_db)
        assert (a.az_exact, a.el_exact, a.r_exact) == \
            (b.az_exact, b.el_exact, b.r_exact)


def test_emit_failure_marker_nan(tmp_path):
    cfg = load_config(fast_sweep_text(**{"estimation.sparsity": 64,
                                         "sweep.trials": 1}))
    records = run_sweep(cfg)
    path = tmp_path / "fail.csv"
    harness.emit(records, "csv", path)
    row = path.read_text(encoding="utf-8").splitlines()[1]
    assert row.split(",")[3] == "nan"
    harness.emit(records, "json", tmp_path / "fail.json")
    payload = json.loads((tmp_path / "fail.json").read_text(encoding="utf-8"))
    assert payload[0]["nmse_db"] is None


def test_sweep_summary_mentions_costs():
    cfg = load_config(fast_sweep_text())
    records = run_sweep(cfg)
    summary = harness.sweep_summary(records, cfg)
    assert "decomposed sum" in summary and "joint product" in summary


def test_oracle_check_small_instances():
    cfg = load_config(fast_sweep_text(**{
        "geometry.n_y": 9, "geometry.n_z": 9,
        "estimation.azimuth_grid_points": 8,
        "estimation.elevation_grid_points": 8,
        "estimation.distance_grid_points": 6,
        "scene.omega_max": 0.45,
        "sweep.trials": 4,
    }))
    records = run_oracle_check(cfg)
    assert all(r.match for r in records)
    assert records[0].dere_columns == 8 + 8 + 3 * 6
    assert records[0].oracle_columns == 8 * 8 * 6


def test_oracle_check_cap():
    cfg = load_config(fast_sweep_text())
    with pytest.raises(ConfigError, match="cap"):
        run_oracle_check(cfg, column_cap=10)


def test_convergence_requires_vbi():
    cfg = load_config(fast_sweep_text())
    with pytest.raises(ConfigError, match="vbi"):
        harness.run_convergence(cfg)


def test_convergence_records_structure():
    cfg = load_config(fast_sweep_text(**{
        "estimation.solver": "vbi", "sweep.snr_db": 10,
        "sweep.trials": 2, "estimation.snapshots": 64,
    }))
    records = harness.run_convergence(cfg)
    params = {r.parameter for r in records}
    assert params == {"azimuth", "elevation", "distance", "channel"}
    trials = {r.trial for r in records}
    assert trials == {0, 1}
    for trial in trials:
        iters = sorted({r.iteration for r in records if r.trial == trial})
        assert iters == list(range(1, len(iters) + 1))


def test_convergence_noiseless_plateaus_at_floor():
    cfg = load_config(fast_sweep_text(**{
        "estimation.solver": "vbi", "sweep.trials": 1,
    }))
    records = harness.run_convergence(cfg)
    chan = [r.nmse_db for r in records if r.parameter == "channel"]
    assert chan[-1] < -100.0


def test_emit_convergence_csv(tmp_path):
    cfg = load_config(fast_sweep_text(**{
        "estimation.solver": "vbi", "sweep.trials": 1,
    }))
    records = harness.run_convergence(cfg)
    path = tmp_path / "conv.csv"
    harness.emit_convergence(records, "csv", path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "trial,iteration,parameter,nmse_db,seed"
    assert len(lines) == len(records) + 1


def test_ensemble_serialization_round_trip(tmp_path):
    from nearfield.geometry import ArrayGeometry, Direction
    from nearfield.channel import FAR_FIELD, PathParam, generate_snapshots
    geom = ArrayGeometry(9, 9, 0.005, 0.01)
    paths = [PathParam(Direction(0.2, -0.1), 3.0, 0.6),
             PathParam(Direction(-0.3, 0.2), FAR_FIELD, 0.4)]
    ens = generate_snapshots(geom, paths, 4, 10.0, seed=3)
    path = tmp_path / "ens.json"
    harness.save_ensemble(ens, path)
    loaded = harness.load_ensemble(path)
    assert loaded.geometry == ens.geometry
    assert np.array_equal(loaded.snapshots, ens.snapshots)
    assert np.array_equal(loaded.gains, ens.gains)
    assert loaded.paths[1].is_far_field
    assert loaded.snr_db == 10.0
    assert np.allclose(loaded.clean_snapshots(), ens.clean_snapshots())


def test_ensemble_noiseless_snr_marker():
    from nearfield.geometry import ArrayGeometry, Direction
    from nearfield.channel import PathParam, generate_snapshots
    geom = ArrayGeometry(3, 3, 0.005, 0.01)
    ens = generate_snapshots(geom, [PathParam(Direction(0.1, 0.1), 2.0, 1.0)],
                             2, math.inf, seed=0)
    payload = ensemble_to_dict(ens)
    assert payload["snr_db"] == "inf"
    assert math.isinf(ensemble_from_dict(payload).snr_db)
    text = json.dumps(payload)
    assert "Infinity" not in text
