import json

import pytest

from simcomm import __version__
from simcomm.cli import main
from simcomm.experiments import METRIC_COLUMNS

TINY = """\
version: 1
experiment: {experiment}
geometry: {{layers: 1, n1: 4, n2: 4}}
scenario: {{num_users: 2, rate_threshold: 0.001, layers: [1, 2]}}
solver: {{ipdd: {{max_outer: 15}}}}
run: {{seed: 1, trials: 2, codebook_dir: {cache}}}
"""


@pytest.fixture
def config(tmp_path):
    def make(experiment):
        path = tmp_path / f"{experiment}.yaml"
        path.write_text(TINY.format(experiment=experiment, cache=tmp_path / "books"))
        return str(path)

    return make


def test_version(capsys):
    assert main(["version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_tables(capsys, tmp_path):
    assert main(["codebook", "tables"]) == 0
    assert "1 0 0 0 1 1 1" in capsys.readouterr().out
    out = tmp_path / "tables.txt"
    assert main(["codebook", "tables", "--out", str(out)]) == 0
    assert "1 0 0 0 1 1 1" in out.read_text()


def test_srm_solve_writes_json(config, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["srm", "solve", "--config", config("srm-convergence"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    for key in ("instance_hash", "config_hash", "seed", "solver_params", "trace", "rates", "sum_rate",
                "jain_index", "power", "converged", "infeasible", "feasibility", "wall_time_s"):
        assert key in doc
    assert doc["seed"] == 1 and len(doc["rates"]) == 2


def test_seed_override_changes_instance(config, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["srm", "solve", "--config", config("srm-convergence"), "--out", str(a)])
    main(["srm", "solve", "--config", config("srm-convergence"), "--out", str(b), "--seed", "2"])
    assert json.loads(a.read_text())["instance_hash"] != json.loads(b.read_text())["instance_hash"]


def test_bench_is_identical_across_threads(config, tmp_path):
    one, two = tmp_path / "one.csv", tmp_path / "two.csv"
    assert main(["bench", "run", "--config", config("sumrate-vs-layers"), "--out", str(one), "--threads", "1"]) == 0
    assert main(["bench", "run", "--config", config("sumrate-vs-layers"), "--out", str(two), "--threads", "2"]) == 0
    assert one.read_bytes() == two.read_bytes()
    assert one.read_text().splitlines()[0].split(",") == list(METRIC_COLUMNS)


def test_train_run_and_codebook_build(config, tmp_path):
    cfg = tmp_path / "train.yaml"
    cfg.write_text(TINY.format(experiment="training-accuracy", cache=tmp_path / "books").replace("trials: 2", "trials: 3")
                   .replace("scenario: {", "scenario: {snr_db: [5.0], "))
    out = tmp_path / "train.csv"
    assert main(["train", "run", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("protocol,snr_db,trial,success")
    assert len(lines) == 1 + 2 * 4 * 3
    book = tmp_path / "book.npz"
    assert main(["codebook", "build", "--config", str(cfg), "--out", str(book)]) == 0
    assert book.exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["srm", "solve", "--config", str(tmp_path / "none.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("version: 1\ngeometry: {n1: -1}\n")
    assert main(["bench", "run", "--config", str(bad)]) == 2
    assert "geometry.n1" in capsys.readouterr().err
    assert main(["srm", "solve", "--threads", "0"]) == 2
