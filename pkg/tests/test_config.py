import pytest

from simcomm.config import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    from_dict,
    load_config,
    loads,
)


def test_defaults_fill_omitted_fields():
    cfg = from_dict({"version": 1})
    assert cfg == ExperimentConfig()
    assert cfg.scenario.num_users == 3 and cfg.run.threads == 1


def test_round_trip_through_yaml():
    cfg = from_dict({"version": 1, "experiment": "fairness", "scenario": {"p_max_dbm": [0, 10]}, "run": {"seed": 9}})
    assert loads(cfg.dumps()) == cfg
    assert loads(cfg.dumps()).digest() == cfg.digest()


def test_digest_tracks_content():
    a = from_dict({"version": 1})
    assert a.digest() != a.with_seed(1).digest()
    assert len(a.digest()) == 16
    threaded = from_dict({"version": 1, "run": {"threads": 4, "out": "x.csv"}})
    assert threaded.digest() == a.digest()


def test_profiles_merge_under_file_values():
    cfg = from_dict({"version": 1, "geometry": {"n1": 4}}, profile="small")
    assert (cfg.geometry.layers, cfg.geometry.n1, cfg.geometry.n2) == (2, 4, 8)
    with pytest.raises(ConfigError, match="profile"):
        from_dict({"version": 1}, profile="huge")


@pytest.mark.parametrize(
    "data, where",
    [
        ({"version": 1, "geometry": {"n1": -4}}, "geometry.n1"),
        ({"version": 1, "geometry": {"layers": 1.5}}, "geometry.layers"),
        ({"version": 1, "geometry": {"frequency_hz": 0}}, "geometry.frequency_hz"),
        ({"version": 1, "scenario": {"rate_threshold": -0.1}}, "scenario.rate_threshold"),
        ({"version": 1, "scenario": {"distance_m": [10, 5]}}, "scenario.distance_m"),
        ({"version": 1, "scenario": {"users": [[2.0, 0.0]]}}, "scenario.users"),
        ({"version": 1, "scenario": {"snr_db": []}}, "scenario.snr_db"),
        ({"version": 1, "run": {"seed": -1}}, "run.seed"),
        ({"version": 1, "run": {"threads": 0}}, "run.threads"),
        ({"version": 1, "geometry": {"colour": 1}}, "geometry"),
        ({"version": 1, "extra": {}}, "extra"),
        ({"version": 1, "solver": {"pdmm": {"epsilon": 0.5}}}, "solver.pdmm"),
        ({"version": 1, "solver": {"ipdd": {"rho_shrink": 2}}}, "solver.ipdd"),
        ({"version": 1, "experiment": "nope"}, "experiment"),
        ({"version": 2}, "version"),
        ({}, "version"),
    ],
)
def test_invalid_values_name_their_path(data, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        from_dict(data)


def test_nested_solver_params():
    cfg = from_dict({"version": 1, "solver": {"ipdd": {"max_outer": 7, "pdmm": {"max_inner": 9}}}})
    assert cfg.solver.ipdd.max_outer == 7 and cfg.solver.ipdd.pdmm.max_inner == 9


def test_file_loading(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("version: 1\nexperiment: multipath\n")
    assert load_config(path).experiment == "multipath"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    path.write_text("version: [1\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(path)


def test_every_experiment_kind_validates():
    for kind in EXPERIMENTS:
        assert from_dict({"version": 1, "experiment": kind}).experiment == kind
