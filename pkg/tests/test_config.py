"""Experiment config: YAML round trips, validation, solver dispatch, and the
identity hash that treats bookkeeping fields as transient."""

import pytest

from burglab.config import P_DEFAULT, ExperimentConfig
from burglab.spectral import default_n_grid, default_truncation


def test_defaults_resolve_spectral():
    cfg = ExperimentConfig(nu=2e-3)
    assert cfg.solver == "spectral"
    assert cfg.K == default_truncation(2e-3)
    assert cfg.n_grid == default_n_grid(cfg.K)
    assert cfg.p_list == P_DEFAULT
    assert cfg.stats_grid_size == cfg.n_grid
    assert cfg.spectrum_size == cfg.K


def test_auto_solver_goes_godunov_at_zero_viscosity():
    cfg = ExperimentConfig(nu=0.0)
    assert cfg.solver == "godunov"
    assert cfg.K is None
    assert cfg.stats_grid_size == cfg.n_cells
    assert cfg.spectrum_size == cfg.n_cells // 3
    gcfg = cfg.godunov_config()
    assert gcfg.n == cfg.n_cells
    with pytest.raises(ValueError, match="spectral"):
        cfg.solver_config()


def test_solver_viscosity_mismatch_rejected():
    with pytest.raises(ValueError, match="needs nu > 0"):
        ExperimentConfig(nu=0.0, solver="spectral")
    with pytest.raises(ValueError, match="inviscid"):
        ExperimentConfig(nu=1e-3, solver="godunov")
    with pytest.raises(ValueError, match="unknown solver"):
        ExperimentConfig(nu=1e-3, solver="euler")
    with pytest.raises(ValueError, match="nu must lie"):
        ExperimentConfig(nu=-1e-3)
    with pytest.raises(ValueError, match="nu must lie"):
        ExperimentConfig(nu=1.5)


def test_window_grid_validation():
    with pytest.raises(ValueError, match="multiple of sample_every"):
        ExperimentConfig(nu=1e-2, burn_in=1.0, window=1.03, sample_every=0.05)
    with pytest.raises(ValueError, match="multiple of sample_every"):
        ExperimentConfig(nu=1e-2, burn_in=0.27, window=1.0, sample_every=0.05)
    with pytest.raises(ValueError):
        ExperimentConfig(nu=1e-2, window=-1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(nu=1e-2, sample_every=0.0)
    with pytest.raises(ValueError, match="ensemble"):
        ExperimentConfig(nu=1e-2, ensemble=0)
    with pytest.raises(ValueError, match="survival_threshold"):
        ExperimentConfig(nu=1e-2, survival_threshold=0.0)


def test_p_list_must_include_three():
    with pytest.raises(ValueError, match="p_list"):
        ExperimentConfig(nu=1e-2, p_list=(2.0, 4.0))
    cfg = ExperimentConfig(nu=1e-2, p_list=(2, 3, 4))
    assert cfg.p_list == (2.0, 3.0, 4.0)


def test_forcing_families():
    cfg = ExperimentConfig(nu=1e-2)
    spec = cfg.forcing_spec()
    assert spec.s_max == 8
    pair = ExperimentConfig(
        nu=1e-2, forcing={"family": "explicit", "coefficients": {"1": 2**-0.5, "-1": 2**-0.5}}
    )
    assert pair.forcing_spec().b0 == pytest.approx(1.0)
    with pytest.raises(ValueError, match="forcing family"):
        ExperimentConfig(nu=1e-2, forcing={"family": "white"})
    with pytest.raises(KeyError):
        ExperimentConfig(nu=1e-2, forcing={"family": "explicit"})


def test_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig(
        nu=5e-3, seed=11, ensemble=3, K=256, burn_in=2.0, window=4.0,
        sample_every=0.25, p_list=(1, 2, 3), store_snapshots=True,
        tolerances={"four_fifths": 0.25}, output_dir=str(tmp_path),
    )
    path = tmp_path / "config.yaml"
    cfg.to_yaml(path)
    back = ExperimentConfig.from_yaml(path)
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()


def test_hash_ignores_bookkeeping():
    base = ExperimentConfig(nu=2e-3, seed=3, ensemble=4)
    same = [
        ExperimentConfig(nu=2e-3, seed=3, ensemble=64),
        ExperimentConfig(nu=2e-3, seed=3, ensemble=4, output_dir="/elsewhere"),
        ExperimentConfig(nu=2e-3, seed=3, ensemble=4, store_snapshots=True),
        ExperimentConfig(nu=2e-3, seed=3, ensemble=4, store_series=True),
    ]
    for other in same:
        assert other.config_hash() == base.config_hash()


def test_hash_tracks_physics_and_numerics():
    base = ExperimentConfig(nu=2e-3, seed=3)
    different = [
        ExperimentConfig(nu=4e-3, seed=3),
        ExperimentConfig(nu=2e-3, seed=4),
        ExperimentConfig(nu=2e-3, seed=3, K=512),
        ExperimentConfig(nu=2e-3, seed=3, sample_every=0.1, burn_in=10.0, window=10.0),
        ExperimentConfig(nu=2e-3, seed=3, forcing={"family": "power_law", "decay": 3.0, "s_max": 8, "intensity": 1.0}),
        ExperimentConfig(nu=2e-3, seed=3, nonlinearity=False),
    ]
    hashes = {cfg.config_hash() for cfg in different}
    assert base.config_hash() not in hashes
    assert len(hashes) == len(different)


def test_hash_stable_across_dict_round_trip():
    cfg = ExperimentConfig(nu=2e-3, seed=3, ensemble=2)
    clone = ExperimentConfig.from_dict(cfg.to_dict())
    assert clone.config_hash() == cfg.config_hash()


def test_schema_version_guard():
    with pytest.raises(ValueError, match="schema_version"):
        ExperimentConfig(nu=1e-2, schema_version=99)


def test_bracket_matches_burn_in_and_window():
    cfg = ExperimentConfig(nu=1e-2, burn_in=3.0, window=6.0, sample_every=0.5)
    br = cfg.bracket()
    assert br.burn_in == 3.0
    assert br.window == 6.0


def test_n_stats_override():
    cfg = ExperimentConfig(nu=1e-2, n_stats=8192)
    assert cfg.stats_grid_size == 8192
