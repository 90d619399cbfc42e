"""Monte-Carlo beam-training protocols on a SIM codebook.

A pilot scan is modelled as a received-power reading ``|h^H G w1|^2`` plus a
real Gaussian perturbation.  Per stage, readings are normalized by the
largest noiseless power among the stage's beams and the perturbation has
variance ``1 / SNR`` in those units, so SNR is "peak gain over noise".

Protocols (pilot counts for both axes):

* ``ebt`` line: ``2 (N1 + N2)`` narrow beams on the double-sampled grid;
  2-D: ``4 N1 N2`` pencil beams.
* ``hbt``: 4 binary layers x 2 scans per axis, 16 pilots.
* ``cbt``: 7 Hamming-coded layers x 2 scans per axis, 28 pilots.
* ``tscsbt``: coded stage then two sliding rounds per axis, every beam
  transmitted twice and the readings averaged, 72 pilots.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import beamcode
from .codebook import (
    AXES,
    Codebook,
    CodebookBuilder,
    axis_length,
    coded_label,
    grid_ks,
    half_step_index,
    narrow_label,
    planar_label,
)
from .geometry import ChannelSet, propagate, steering_vector

PROTOCOLS = ("ebt-line", "ebt-2d", "hbt", "cbt", "tscsbt")
TSCSBT_REPEATS = 2
CSV_COLUMNS = ("protocol", "snr_db", "trial", "success", "angle_err_theta", "angle_err_nu", "pilots", "rate_bps_hz")


# ---------------------------------------------------------------------------
# overhead formulas


def ebt_pilots(n1: int, n2: int, mode: str = "line") -> int:
    if mode == "line":
        return 2 * (n1 + n2)
    if mode == "2d":
        return 4 * n1 * n2
    raise ValueError(f"unknown EBT mode {mode!r}")


def hbt_pilots() -> int:
    return 2 * 4 * 2


def cbt_pilots() -> int:
    return 2 * 7 * 2


def sliding_pilots(repeats: int = TSCSBT_REPEATS) -> int:
    """Per axis: two rounds of two scans."""
    return 2 * 2 * repeats


def tscsbt_pilots(repeats: int = TSCSBT_REPEATS) -> int:
    return repeats * cbt_pilots() + 2 * sliding_pilots(repeats)


# ---------------------------------------------------------------------------
# scenario and outcomes


@dataclass(frozen=True)
class TrainingScenario:
    """What to simulate.

    ``users`` lists fixed ``(vartheta, nu)`` positions cycled over trials; when
    empty, each trial draws a uniform position in ``[-1, 1]^2``.  ``snr_db``
    of ``inf`` means noiseless readings.
    """

    channels: ChannelSet
    snr_db: float = math.inf
    trials: int = 1
    seed: int = 0
    users: tuple = ()
    antenna: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for u in self.users:
            if len(u) != 2 or not all(-1 <= x <= 1 for x in u):
                raise ValueError(f"user angles {u} outside [-1, 1]")

    @property
    def geometry(self):
        return self.channels.geometry

    def trial_streams(self, trial: int):
        """``(user_rng, noise_rng)``; the user stream is shared by all protocols."""
        ss = np.random.SeedSequence([self.seed, trial])
        u, n = ss.spawn(2)
        return np.random.default_rng(u), np.random.default_rng(n)

    def user_angles(self, trial: int) -> tuple:
        if self.users:
            vt, nu = self.users[trial % len(self.users)]
            return float(vt), float(nu)
        rng, _ = self.trial_streams(trial)
        vt, nu = rng.uniform(-1.0, 1.0, 2)
        return float(vt), float(nu)


@dataclass(frozen=True)
class TrainingOutcome:
    protocol: str
    trial: int
    truth: tuple
    estimate: tuple
    pilots: int
    success: bool
    rate: float
    raw_bits: dict = field(default_factory=dict)
    corrected_bits: dict = field(default_factory=dict)
    error_pos: dict = field(default_factory=dict)

    @property
    def angle_err(self) -> tuple:
        return tuple(e - t for e, t in zip(self.estimate, self.truth))

    @property
    def angle_sq_error(self) -> float:
        return float(sum(e * e for e in self.angle_err))


@dataclass(frozen=True)
class MultiPathResult:
    paths: tuple
    candidates: tuple
    threshold: float
    pilots: int
    short: bool
    """True when fewer than ``P`` paths cleared the threshold."""


# ---------------------------------------------------------------------------
# measurement primitives


def snr_linear(snr_db: float) -> float:
    return math.inf if snr_db == math.inf else 10.0 ** (snr_db / 10.0)


def measure(channels: ChannelSet, stack, h, snr_db: float, rng, ref_power=None, antenna: int = 0) -> float:
    """One power reading of codeword ``stack`` by a user with channel ``h``.

    ``ref_power`` is the noiseless peak the SNR refers to; it defaults to this
    codeword's own noiseless power.
    """
    y = propagate(channels.interlayer, np.asarray(stack), channels.feeds[antenna])
    p = float(abs(np.vdot(h, y)) ** 2)
    return float(_noisy(np.array([p]), snr_db, rng, p if ref_power is None else ref_power)[0])


def _noisy(powers: np.ndarray, snr_db: float, rng, ref: float, repeats: int = 1) -> np.ndarray:
    """Noisy readings (averaged over ``repeats``) of noiseless ``powers``."""
    snr = snr_linear(snr_db)
    if snr == math.inf:
        return powers.copy()
    noise = rng.standard_normal((repeats, powers.size)).mean(axis=0)
    return powers + noise * (ref / math.sqrt(snr))


def feedback_bit(power_a: float, power_b: float) -> int:
    """0 when scan ``a`` is stronger; ties go to 0."""
    return 0 if power_a >= power_b else 1


class BeamBank:
    """Codebook outputs ``G w1`` per label, with optional on-demand fitting."""

    def __init__(self, channels: ChannelSet, book: Codebook, builder: CodebookBuilder | None = None):
        self.channels = channels
        self.book = book
        self.builder = builder
        self._out = {}

    def output(self, label: str) -> np.ndarray:
        if label not in self._out:
            if label not in self.book:
                self._fit_missing([label])
            e = self.book[label]
            self._out[label] = propagate(self.channels.interlayer, e.stack, self.channels.feeds[self.book.antenna])
        return self._out[label]

    def _fit_missing(self, labels):
        if self.builder is None:
            raise KeyError(f"codebook lacks {labels[0]!r} and no builder was given")
        for lab in labels:
            kind = lab.split("/")[0]
            if kind == "2d":
                _, k1, k2 = lab.split("/")
                entries = self.builder.planar_entries([(int(k1), int(k2))])
            elif lab.split("/")[1] == "coded":
                if lab in self.book:
                    continue  # fitted together with its other half
                axis, _, tag = lab.split("/")
                entries = self.builder.coded_entries(axis, [int(tag[:-1])])
            else:
                axis, _, k = lab.split("/")
                entries = self.builder.narrow_entries(axis, [int(k)])
            for e in entries:
                self.book.add(e)

    def prefetch(self, labels):
        missing = [lab for lab in dict.fromkeys(labels) if lab not in self.book]
        if missing:
            self._fit_missing(missing)
        for lab in labels:
            self.output(lab)

    def powers(self, labels, h) -> np.ndarray:
        out = np.array([self.output(lab) for lab in labels])
        return np.abs(out @ h.conj()) ** 2


def _user_channel(geom, vt, nu):
    # only angles matter for training: unit-gain LoS channel
    return steering_vector(geom, vt, nu)


def _scan(bank, labels, h, snr_db, rng, ref_labels=None, repeats=1):
    ref_labels = labels if ref_labels is None else ref_labels
    ref = float(bank.powers(ref_labels, h).max())
    return _noisy(bank.powers(labels, h), snr_db, rng, ref, repeats)


def _beam_rate(geom, truth, estimate, snr_db):
    """Rate of a pencil beam steered at ``estimate`` for a user at ``truth``."""
    snr = snr_linear(snr_db)
    if snr == math.inf:
        return math.inf
    gain = abs(np.vdot(steering_vector(geom, *truth), steering_vector(geom, *estimate))) ** 2
    return float(np.log2(1.0 + snr * gain))


def _region_success(truth, estimate) -> bool:
    return all(
        beamcode.region_of_angle(t) == beamcode.region_of_angle(e) for t, e in zip(truth, estimate)
    )


def _finish(protocol, scenario, trial, truth, estimate, pilots, **bits):
    return TrainingOutcome(
        protocol=protocol,
        trial=trial,
        truth=truth,
        estimate=tuple(float(e) for e in estimate),
        pilots=pilots,
        success=_region_success(truth, estimate),
        rate=_beam_rate(scenario.geometry, truth, estimate, scenario.snr_db),
        **bits,
    )


# ---------------------------------------------------------------------------
# single-path protocols


def _layer_bits(bank, axis, layers, h, snr_db, rng, repeats=1, flip=None):
    labels = [coded_label(axis, l, half) for l in layers for half in "ab"]
    p = _scan(bank, labels, h, snr_db, rng, repeats=repeats)
    bits = [feedback_bit(p[2 * i], p[2 * i + 1]) for i in range(len(layers))]
    if flip is not None:
        bits[flip - 1] ^= 1
    return np.array(bits, dtype=np.uint8)


def run_hbt_line(scenario: TrainingScenario, bank: BeamBank, trial: int = 0, flip: dict | None = None) -> TrainingOutcome:
    """Binary line search: 4 layers of two scans per axis.

    ``flip`` maps an axis to a 1-based layer whose feedback bit is forced
    wrong, for fault-injection studies.
    """
    flip = flip or {}
    truth = scenario.user_angles(trial)
    h = _user_channel(scenario.geometry, *truth)
    _, rng = scenario.trial_streams(trial)
    est, raw = [], {}
    for axis in AXES:
        bits = _layer_bits(bank, axis, range(1, 5), h, scenario.snr_db, rng, flip=flip.get(axis))
        raw[axis] = tuple(int(b) for b in bits)
        est.append(float(beamcode.region_center(beamcode.region_index(bits))))
    return _finish("hbt", scenario, trial, truth, est, hbt_pilots(), raw_bits=raw, corrected_bits=raw)


def _coded_stage(bank, axis, h, snr_db, rng, repeats, flip):
    raw = _layer_bits(bank, axis, range(1, 8), h, snr_db, rng, repeats, flip)
    fixed, pos = beamcode.decode(raw)
    return raw, fixed, pos


def run_cbt(scenario: TrainingScenario, bank: BeamBank, trial: int = 0, flip: dict | None = None, repeats: int = 1) -> TrainingOutcome:
    """Hamming-coded hierarchical search: 7 layers, one correctable error per axis."""
    flip = flip or {}
    truth = scenario.user_angles(trial)
    h = _user_channel(scenario.geometry, *truth)
    _, rng = scenario.trial_streams(trial)
    est, raw, fixed, pos = [], {}, {}, {}
    for axis in AXES:
        r, f, p = _coded_stage(bank, axis, h, scenario.snr_db, rng, repeats, flip.get(axis))
        raw[axis], fixed[axis], pos[axis] = tuple(int(b) for b in r), tuple(int(b) for b in f), p
        est.append(float(beamcode.region_center(beamcode.region_index(f[:4]))))
    return _finish(
        "cbt", scenario, trial, truth, est, repeats * cbt_pilots(),
        raw_bits=raw, corrected_bits=fixed, error_pos=pos,
    )


def sliding_offsets(n: int) -> dict:
    """Beam offsets (half-step units of ``1/(2n)``) visited by the sliding stage."""
    return {"round1": (-2, 2), "left": (-3, 1), "right": (-1, 3)}


def sliding_labels(axis: str, center_k: int, n: int) -> list:
    offs = sliding_offsets(n)
    ks = sorted({center_k + o for pair in offs.values() for o in pair})
    return [narrow_label(axis, half_step_index(k / (2 * n), n)) for k in ks]


def run_sliding(bank: BeamBank, axis: str, coarse: float, h, snr_db: float, rng, repeats: int = TSCSBT_REPEATS) -> float:
    """Refine a coarse angle by two slide-and-compare rounds.

    Round one compares beams at ``coarse -/+ 1/n``; round two slides the
    winning side's pair by a further ``0.5/n`` and compares again.  The
    result is the center of the surviving quarter of ``[coarse - 1/n,
    coarse + 1/n]``; for two left wins that is ``coarse - 0.75/n``.
    """
    n = axis_length(bank.channels.geometry, axis)
    ck = int(round(coarse * 2 * n))

    def lab(off):
        return narrow_label(axis, half_step_index((ck + off) / (2 * n), n))

    ref_labels = sliding_labels(axis, ck, n)
    offs = sliding_offsets(n)
    a, b = offs["round1"]
    p = _scan(bank, [lab(a), lab(b)], h, snr_db, rng, ref_labels, repeats)
    first = feedback_bit(p[0], p[1])
    a, b = offs["left" if first == 0 else "right"]
    p = _scan(bank, [lab(a), lab(b)], h, snr_db, rng, ref_labels, repeats)
    second = feedback_bit(p[0], p[1])
    side = -1 if first == 0 else 1
    inner = 0.25 if (second == 1) == (first == 0) else 0.75
    return coarse + side * inner / n


def run_tscsbt(scenario: TrainingScenario, bank: BeamBank, trial: int = 0, flip: dict | None = None, repeats: int = TSCSBT_REPEATS) -> TrainingOutcome:
    """Coded stage then sliding refinement on each axis."""
    flip = flip or {}
    g = scenario.geometry
    truth = scenario.user_angles(trial)
    h = _user_channel(g, *truth)
    _, rng = scenario.trial_streams(trial)
    est, raw, fixed, pos = [], {}, {}, {}
    for axis in AXES:
        r, f, p = _coded_stage(bank, axis, h, scenario.snr_db, rng, repeats, flip.get(axis))
        raw[axis], fixed[axis], pos[axis] = tuple(int(b) for b in r), tuple(int(b) for b in f), p
        coarse = float(beamcode.region_center(beamcode.region_index(f[:4])))
        est.append(run_sliding(bank, axis, coarse, h, scenario.snr_db, rng, repeats))
    return _finish(
        "tscsbt", scenario, trial, truth, est, tscsbt_pilots(repeats),
        raw_bits=raw, corrected_bits=fixed, error_pos=pos,
    )


def run_ebt(scenario: TrainingScenario, bank: BeamBank, trial: int = 0, mode: str = "line", oversample: int = 2) -> TrainingOutcome:
    """Exhaustive search over the double-sampled grid (argmax of readings)."""
    g = scenario.geometry
    truth = scenario.user_angles(trial)
    h = _user_channel(g, *truth)
    _, rng = scenario.trial_streams(trial)
    k1, k2 = grid_ks(g.n1, oversample), grid_ks(g.n2, oversample)
    if mode == "line":
        est = []
        for axis, ks in zip(AXES, (k1, k2)):
            n = axis_length(g, axis)
            p = _scan(bank, [narrow_label(axis, k) for k in ks], h, scenario.snr_db, rng)
            est.append(ks[int(np.argmax(p))] / (2 * n))
        pilots = len(k1) + len(k2)
    elif mode == "2d":
        pairs = [(a, b) for a in k1 for b in k2]
        p = _scan(bank, [planar_label(a, b) for a, b in pairs], h, scenario.snr_db, rng)
        a, b = pairs[int(np.argmax(p))]
        est = [a / (2 * g.n1), b / (2 * g.n2)]
        pilots = len(pairs)
    else:
        raise ValueError(f"unknown EBT mode {mode!r}")
    return _finish(f"ebt-{mode}", scenario, trial, truth, est, pilots)


def ebt_labels(geom, mode: str = "line", oversample: int = 2) -> list:
    k1, k2 = grid_ks(geom.n1, oversample), grid_ks(geom.n2, oversample)
    if mode == "line":
        return [narrow_label("vartheta", k) for k in k1] + [narrow_label("nu", k) for k in k2]
    return [planar_label(a, b) for a in k1 for b in k2]


def tscsbt_labels(geom) -> list:
    """Every codeword the coded and sliding stages can touch."""
    labels = [coded_label(ax, l, half) for ax in AXES for l in range(1, 8) for half in "ab"]
    for axis in AXES:
        n = axis_length(geom, axis)
        for r in range(1, beamcode.NUM_REGIONS + 1):
            c = float(beamcode.region_center(r))
            labels += sliding_labels(axis, int(round(c * 2 * n)), n)
    return list(dict.fromkeys(labels))


_RUNNERS = {
    "hbt": run_hbt_line,
    "cbt": run_cbt,
    "tscsbt": run_tscsbt,
    "ebt-line": lambda s, b, t: run_ebt(s, b, t, "line"),
    "ebt-2d": lambda s, b, t: run_ebt(s, b, t, "2d"),
}


def protocol_labels(geom, protocol: str) -> list:
    if protocol in ("hbt", "cbt"):
        layers = range(1, 5) if protocol == "hbt" else range(1, 8)
        return [coded_label(ax, l, half) for ax in AXES for l in layers for half in "ab"]
    if protocol == "tscsbt":
        return tscsbt_labels(geom)
    if protocol.startswith("ebt-"):
        return ebt_labels(geom, protocol[4:])
    raise ValueError(f"unknown protocol {protocol!r}")


def run_trials(scenario: TrainingScenario, bank: BeamBank, protocol: str, threads: int = 1) -> list:
    """All trials of one protocol, in trial order regardless of ``threads``."""
    if protocol not in _RUNNERS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    bank.prefetch(protocol_labels(scenario.geometry, protocol))
    runner = _RUNNERS[protocol]
    trials = range(scenario.trials)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda t: runner(scenario, bank, t), trials))
    return [runner(scenario, bank, t) for t in trials]


# ---------------------------------------------------------------------------
# multi-path


def multipath_channel(geom, paths) -> np.ndarray:
    """``sum_p gain_p a(vartheta_p, nu_p)`` for ``paths = [(vt, nu, gain), ...]``."""
    h = np.zeros(geom.num_elements, dtype=complex)
    for vt, nu, gain in paths:
        h += gain * steering_vector(geom, vt, nu)
    return h


def run_mp_tsbt(
    channels: ChannelSet,
    bank: BeamBank,
    paths,
    num_paths: int = 3,
    p_th_fraction: float = 0.5,
    snr_db: float = math.inf,
    rng=None,
) -> MultiPathResult:
    """Two-stage multi-path search.

    Stage one sweeps each axis over the ``N``-point double-sampled grid and
    keeps up to ``num_paths`` readings above ``p_th_fraction`` of that axis'
    peak.  Stage two sweeps pencil beams over the candidate pairs and keeps
    up to ``num_paths`` pairs above the same fraction of its own peak.
    """
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    g = channels.geometry
    rng = rng if rng is not None else np.random.default_rng(0)
    h = multipath_channel(g, paths)

    def strongest(values, keys):
        order = np.argsort(-values, kind="stable")
        keep = [keys[i] for i in order[:num_paths] if values[i] >= p_th_fraction * values.max()]
        return keep

    cands = {}
    pilots = 0
    for axis in AXES:
        ks = grid_ks(axis_length(g, axis), 1)
        p = _scan(bank, [narrow_label(axis, k) for k in ks], h, snr_db, rng)
        pilots += len(ks)
        cands[axis] = strongest(p, ks)
    pairs = [(a, b) for a in cands["vartheta"] for b in cands["nu"]]
    p = _scan(bank, [planar_label(a, b) for a, b in pairs], h, snr_db, rng)
    pilots += len(pairs)
    chosen = strongest(p, pairs)
    found = tuple((a / (2 * g.n1), b / (2 * g.n2)) for a, b in chosen)
    cand_angles = tuple((a / (2 * g.n1), b / (2 * g.n2)) for a, b in pairs)
    return MultiPathResult(found, cand_angles, p_th_fraction, pilots, len(found) < num_paths)


# ---------------------------------------------------------------------------
# summaries


def metrics(outcomes) -> dict:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no outcomes to summarize")
    return {
        "success_rate": float(np.mean([o.success for o in outcomes])),
        "angle_mse": float(np.mean([o.angle_sq_error for o in outcomes])),
        "mean_rate": float(np.mean([o.rate for o in outcomes])),
        "mean_pilots": float(np.mean([o.pilots for o in outcomes])),
    }


def write_csv(path, rows_by_snr):
    """``rows_by_snr``: iterable of ``(snr_db, outcomes)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for snr_db, outcomes in rows_by_snr:
            for o in outcomes:
                e1, e2 = o.angle_err
                w.writerow([o.protocol, snr_db, o.trial, int(o.success), repr(e1), repr(e2), o.pilots, repr(o.rate)])


def grid_quantization_mse(geom, oversample: int = 2) -> float:
    """Angle MSE of an ideal grid search for a uniform user, both axes."""
    return sum((2.0 / (oversample * n)) ** 2 / 12 for n in (geom.n1, geom.n2))

