import math
from pathlib import Path

import numpy as np
import pytest

from simcomm import beamcode
from simcomm import experiments as ex
from simcomm import training as tr
from simcomm.config import from_dict
from simcomm.geometry import ChannelSet, SimGeometry

CACHE = Path(__file__).resolve().parents[1] / "build" / "codebooks"
CENTERS = [float(c) for c in beamcode.region_center(np.arange(1, 17))]
# every region on both axes, in a shuffled pairing
USERS = tuple((CENTERS[i], CENTERS[(5 * i + 3) % 16]) for i in range(16))


@pytest.fixture(scope="module")
def bank8():
    cfg = from_dict({"version": 1, "geometry": {"layers": 2, "n1": 8, "n2": 8}, "run": {"codebook_dir": str(CACHE)}})
    return ex._training_setup(cfg, ex.TRAINING_PROTOCOLS)[2]


@pytest.fixture(scope="module")
def bank16():
    cfg = from_dict({"version": 1, "geometry": {"layers": 4, "n1": 16, "n2": 16}, "run": {"codebook_dir": str(CACHE)}})
    g = cfg.geometry.build()
    return ex.training_bank(cfg, ChannelSet.build(g), tr.protocol_labels(g, "cbt"))


def centered(bank, snr=math.inf, trials=16, seed=0):
    return tr.TrainingScenario(bank.channels, snr, trials, seed, USERS)


def test_pilot_counts():
    assert tr.ebt_pilots(16, 16) == 64
    assert tr.ebt_pilots(16, 16, "2d") == 1024
    assert tr.hbt_pilots() == 16
    assert tr.cbt_pilots() == 28
    assert tr.tscsbt_pilots() == 72
    with pytest.raises(ValueError):
        tr.ebt_pilots(4, 4, "cube")


def test_feedback_bit_ties_to_zero():
    assert tr.feedback_bit(1.0, 1.0) == 0
    assert tr.feedback_bit(2.0, 1.0) == 0
    assert tr.feedback_bit(1.0, 2.0) == 1


def test_noise_free_readings_are_exact(bank8):
    rng = np.random.default_rng(0)
    p = np.array([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(tr._noisy(p, math.inf, rng, 3.0), p)


def test_noise_std_matches_snr():
    rng = np.random.default_rng(1)
    x = tr._noisy(np.zeros(20000), 10.0, rng, 1.0)
    assert np.std(x) == pytest.approx(1 / np.sqrt(10), rel=0.03)


def test_scenario_validation(bank8):
    with pytest.raises(ValueError):
        tr.TrainingScenario(bank8.channels, trials=0)
    with pytest.raises(ValueError):
        tr.TrainingScenario(bank8.channels, users=((1.5, 0.0),))


def test_user_stream_shared_across_protocols(bank8):
    sc = tr.TrainingScenario(bank8.channels, 10.0, 5, seed=7)
    a = tr.run_trials(sc, bank8, "cbt")
    b = tr.run_trials(sc, bank8, "ebt-line")
    assert [o.truth for o in a] == [o.truth for o in b]


@pytest.mark.parametrize("protocol", ["cbt", "tscsbt", "ebt-line"])
def test_noiseless_region_centers_all_succeed(bank8, protocol):
    outcomes = tr.run_trials(centered(bank8), bank8, protocol)
    assert all(o.success for o in outcomes)


def test_raw_bits_clean_at_region_centers(bank16):
    for o in tr.run_trials(centered(bank16), bank16, "cbt"):
        assert o.error_pos == {"vartheta": None, "nu": None}


def test_cbt_corrects_injected_flip(bank16):
    sc = centered(bank16)
    for layer in range(1, 8):
        o = tr.run_cbt(sc, bank16, trial=layer, flip={"vartheta": layer, "nu": 8 - layer})
        assert o.success
        assert o.error_pos == {"vartheta": layer, "nu": 8 - layer}


def test_hbt_fails_on_injected_flip(bank8):
    sc = centered(bank8)
    o = tr.run_hbt_line(sc, bank8, trial=0, flip={"vartheta": 1})
    assert not o.success


def test_tscsbt_refines_within_quarter_cell(bank8):
    outcomes = tr.run_trials(centered(bank8), bank8, "tscsbt")
    for o in outcomes:
        assert max(abs(e) for e in o.angle_err) <= 0.25 / 8 + 1e-12


def test_sliding_estimate_positions():
    # two left wins land 0.75/n left of the coarse center
    assert tr.sliding_offsets(8)["left"] == (-3, 1)


def test_threads_do_not_change_results(bank8):
    sc = tr.TrainingScenario(bank8.channels, 5.0, 12, seed=2)
    a = tr.run_trials(sc, bank8, "tscsbt", threads=1)
    b = tr.run_trials(sc, bank8, "tscsbt", threads=3)
    assert a == b


def test_metrics_and_csv(tmp_path, bank8):
    sc = tr.TrainingScenario(bank8.channels, 10.0, 4, seed=1)
    out = tr.run_trials(sc, bank8, "hbt")
    m = tr.metrics(out)
    assert m["mean_pilots"] == 16 and 0 <= m["success_rate"] <= 1
    path = tmp_path / "t.csv"
    tr.write_csv(path, [(10.0, out)])
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(tr.CSV_COLUMNS)
    assert len(lines) == 5
    with pytest.raises(ValueError):
        tr.metrics([])


def test_grid_quantization_mse():
    g = SimGeometry(1, 8, 8)
    assert tr.grid_quantization_mse(g, 2) == pytest.approx(2 * (1 / 8) ** 2 / 12)


def test_multipath_noiseless_recovers_constructed_paths(bank8):
    g = bank8.channels.geometry
    for name, paths in ex.multipath_scenarios(g).items():
        res = tr.run_mp_tsbt(bank8.channels, bank8, paths, 3)
        assert ex._recovered(paths, res.paths) == len(paths)
        assert res.short == (len(paths) < 3)
