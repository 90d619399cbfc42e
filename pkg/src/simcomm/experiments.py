"""Seeded experiment runners behind ``simcomm bench run``.

Every runner returns a list of :class:`MetricRow`; :func:`write_rows` turns
them into a CSV whose bytes depend only on the config and seed.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import srm
from . import training as tr
from .codebook import (
    Codebook,
    CodebookBuilder,
    axis_pattern,
    cache_path,
    mask_contrast,
    narrow_label,
)
from .config import ExperimentConfig
from .geometry import ChannelSet, propagate
from .beamcode import NUM_REGIONS, region_of_angle

log = logging.getLogger(__name__)

METRIC_SCHEMA = 1
METRIC_COLUMNS = ("schema", "experiment", "sweep", "metric", "value", "trials", "seed", "config_hash")


@dataclass(frozen=True)
class MetricRow:
    experiment: str
    sweep: object
    metric: str
    value: float
    trials: int
    seed: int
    config_hash: str


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rows_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([METRIC_SCHEMA, r.experiment, _fmt(r.sweep), r.metric, _fmt(r.value), r.trials, r.seed, r.config_hash])
    return buf.getvalue()


def write_rows(path, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(rows_text(rows))


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class _Rows:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.rows = []
        self.hash = cfg.digest()

    def add(self, sweep, metric, value, trials=1):
        self.rows.append(MetricRow(self.cfg.experiment, sweep, metric, value, trials, self.cfg.run.seed, self.hash))


# ---------------------------------------------------------------------------
# codebooks


def training_bank(cfg: ExperimentConfig, channels: ChannelSet, labels=()) -> tr.BeamBank:
    """Bank over the cached training codebook, fitting and saving what is missing."""
    g = channels.geometry
    params, seed, threads = cfg.solver.pdmm, cfg.run.seed, cfg.run.threads
    path = cache_path(cfg.run.codebook_dir, g, params, seed, "training")
    builder = CodebookBuilder(channels, params, seed, threads=threads)
    book = None
    if path.exists():
        try:
            book = Codebook.load(path, g)
        except ValueError as exc:
            log.warning("rebuilding %s: %s", path, exc)
    if book is None:
        book = Codebook(g, [], builder.antenna)
    before = len(book)
    bank = tr.BeamBank(channels, book, builder)
    bank.prefetch(list(labels))
    if len(book) != before or not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        book.save(path)
    return bank


def _fixed_target_fit(cfg: ExperimentConfig, layers: int):
    g = cfg.geometry.build(layers=layers)
    ch = ChannelSet.build(g)
    b = CodebookBuilder(ch, cfg.solver.pdmm, cfg.run.seed)
    return g, ch, b


def codebook_convergence(cfg: ExperimentConfig) -> list:
    """Residual of one fixed narrow-beam fit against the number of layers."""
    out = _Rows(cfg)

    def one(layers):
        g, ch, b = _fixed_target_fit(cfg, layers)
        _, rel, res = b.fit(narrow_label("vartheta", 0), b.narrow_target("vartheta", 0.0))
        return layers, rel, res

    for layers, rel, res in _pmap(one, cfg.scenario.layers, cfg.run.threads):
        r = np.asarray(res.residuals) / res.residuals[0]
        out.add(layers, "final_residual", rel)
        out.add(layers, "sweeps", len(r) - 1)
        out.add(layers, "max_increase", float(np.max(np.diff(r), initial=0.0)))
    return out.rows


def half_space_mask(grid) -> np.ndarray:
    return (np.asarray(grid) < 0).astype(float)


def beam_pattern(cfg: ExperimentConfig) -> list:
    """Half-space mask fits: pass/stop contrast and per-region gain tables."""
    out = _Rows(cfg)

    def one(layers):
        g, ch, b = _fixed_target_fit(cfg, layers)
        gain = half_space_mask(b.grid)
        stack, rel, _ = b.fit("vartheta/mask/half", b.mask_target("vartheta", gain))
        y = propagate(ch.interlayer, stack, b.w1)
        pat = axis_pattern(g, y, "vartheta", b.grid)
        region = region_of_angle(b.grid)
        table = [float(pat[region == r].mean()) for r in range(1, NUM_REGIONS + 1)]
        return layers, rel, mask_contrast(g, y, "vartheta", gain, b.grid), table

    for layers, rel, contrast, table in _pmap(one, cfg.scenario.layers, cfg.run.threads):
        out.add(layers, "residual", rel)
        out.add(layers, "contrast", contrast)
        for r, v in enumerate(table, start=1):
            out.add(layers, f"region_{r:02d}_gain", v)
    return out.rows


# ---------------------------------------------------------------------------
# beam training

TRAINING_PROTOCOLS = ("tscsbt", "cbt", "hbt", "ebt-line")


def _training_setup(cfg: ExperimentConfig, protocols):
    g = cfg.geometry.build()
    ch = ChannelSet.build(g)
    labels = [lab for p in protocols for lab in tr.protocol_labels(g, p)]
    return g, ch, training_bank(cfg, ch, labels)


def training_outcomes(cfg: ExperimentConfig, protocols=TRAINING_PROTOCOLS, bank=None):
    """``[(snr_db, protocol, outcomes)]`` over the SNR sweep plus a noiseless pass."""
    if bank is None:
        _, ch, bank = _training_setup(cfg, protocols)
    ch = bank.channels
    sweep = list(cfg.scenario.snr_db) + [math.inf]
    out = []
    for snr in sweep:
        sc = tr.TrainingScenario(ch, snr, cfg.run.trials, cfg.run.seed, tuple(cfg.scenario.users))
        for p in protocols:
            out.append((snr, p, tr.run_trials(sc, bank, p, cfg.run.threads)))
    return out


def training_accuracy(cfg: ExperimentConfig) -> list:
    out = _Rows(cfg)
    for snr, p, outcomes in training_outcomes(cfg):
        out.add(snr, f"{p}_success", tr.metrics(outcomes)["success_rate"], len(outcomes))
    return out.rows


def training_mse(cfg: ExperimentConfig) -> list:
    out = _Rows(cfg)
    g = cfg.geometry.build()
    for snr, p, outcomes in training_outcomes(cfg, ("tscsbt", "hbt", "ebt-line")):
        out.add(snr, f"{p}_angle_mse", tr.metrics(outcomes)["angle_mse"], len(outcomes))
    out.add("grid", "ebt_quantization_mse", tr.grid_quantization_mse(g, 2))
    return out.rows


def rate_vs_overhead(cfg: ExperimentConfig) -> list:
    out = _Rows(cfg)
    for snr, p, outcomes in training_outcomes(cfg):
        m = tr.metrics(outcomes)
        out.add(snr, f"{p}_pilots", m["mean_pilots"], len(outcomes))
        out.add(snr, f"{p}_rate", m["mean_rate"], len(outcomes))
    return out.rows


def multipath_scenarios(g):
    """A three-path channel (paths three grid cells apart or more) and a one-path one."""
    n1, n2 = g.n1, g.n2
    cell1, cell2 = 2.0 / n1, 2.0 / n2
    base = (-1 + cell1 / 2, -1 + cell2 / 2)
    three = [
        (base[0] + 1 * cell1, base[1] + 1 * cell2, 1.0),
        (base[0] + (n1 // 2) * cell1, base[1] + (n2 // 2 - 1) * cell2, 0.95),
        (base[0] + (n1 - 2) * cell1, base[1] + (n2 - 2) * cell2, 0.9),
    ]
    one = [(base[0] + (n1 // 2) * cell1, base[1] + (n2 // 2) * cell2, 1.0)]
    return {"three": three, "one": one}


def run_multipath(cfg: ExperimentConfig, snr_db: float = math.inf):
    g = cfg.geometry.build()
    ch = ChannelSet.build(g)
    bank = training_bank(cfg, ch)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 3]))
    res = {}
    for name, paths in multipath_scenarios(g).items():
        res[name] = (paths, tr.run_mp_tsbt(ch, bank, paths, cfg.scenario.num_paths, 0.5, snr_db, rng))
    return res


def _recovered(paths, found, tol=1e-9) -> int:
    truth = {(round(vt, 9), round(nu, 9)) for vt, nu, _ in paths}
    return sum((round(a, 9), round(b, 9)) in truth for a, b in found)


def multipath(cfg: ExperimentConfig) -> list:
    out = _Rows(cfg)
    for name, (paths, res) in run_multipath(cfg).items():
        out.add(name, "paths_true", len(paths))
        out.add(name, "paths_found", len(res.paths))
        out.add(name, "paths_exact", _recovered(paths, res.paths))
        out.add(name, "pilots", res.pilots)
    return out.rows


# ---------------------------------------------------------------------------
# sum-rate maximization


def srm_instance(cfg: ExperimentConfig, seed: int, p_max_dbm: float | None = None, rate_threshold=None, layers=None):
    s = cfg.scenario
    g = cfg.geometry.build(num_antennas=s.num_users, layers=layers)
    return srm.make_instance(
        g, s.num_users, seed,
        p_max_dbm=s.p_max_dbm[0] if p_max_dbm is None else p_max_dbm,
        noise_dbm=s.noise_dbm,
        rate_threshold=s.rate_threshold if rate_threshold is None else rate_threshold,
        distance=tuple(s.distance_m),
    )


def instance_seeds(cfg: ExperimentConfig) -> list:
    return [cfg.run.seed + i for i in range(cfg.run.trials)]


def solve(cfg: ExperimentConfig, seed: int, **kw):
    inst = srm_instance(cfg, seed, **kw)
    return inst, srm.vd_bsum(inst, params=cfg.solver.ipdd, seed=seed)


def srm_convergence(cfg: ExperimentConfig) -> list:
    """Per-instance convergence and feasibility checks, plus the first trace."""
    out = _Rows(cfg)
    seeds = instance_seeds(cfg)

    def one(seed):
        inst, sol = solve(cfg, seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
        base = srm.random_phase_baseline(inst, 100, rng)
        return inst, sol, base

    res = _pmap(one, seeds, cfg.run.threads)
    for it, r in enumerate(res[0][1].trace):
        out.add(it, "sum_rate", r)
    for seed, (inst, sol, base) in zip(seeds, res):
        sinr, _, _ = srm.sinr_and_rate(inst, sol.stack, sol.power)
        gamma = inst.gamma_th
        tag = f"seed{seed}"
        out.add(tag, "iterations", len(sol.trace) - 1)
        out.add(tag, "final_delta", abs(sol.trace[-1] - sol.trace[-2]))
        out.add(tag, "converged", sol.converged)
        out.add(tag, "infeasible", sol.infeasible)
        out.add(tag, "budget_ratio", float(np.sum(sol.power**2) / inst.p_max))
        out.add(tag, "modulus_error", sol.feasibility["modulus_error"])
        out.add(tag, "min_sinr_ratio", float(np.min(sinr) / gamma) if gamma > 0 else math.inf)
        out.add(tag, "sum_rate", sol.sum_rate)
        out.add(tag, "random_sum_rate", base.sum_rate)
        for k, r in enumerate(sol.rates):
            out.add(tag, f"rate_user{k}", r)
    return out.rows


def fairness(cfg: ExperimentConfig) -> list:
    """Jain index with and without the QoS floor on paired instances, per power level."""
    out = _Rows(cfg)
    seeds = instance_seeds(cfg)
    for p_dbm in cfg.scenario.p_max_dbm:
        def one(seed):
            _, with_qos = solve(cfg, seed, p_max_dbm=p_dbm)
            _, without = solve(cfg, seed, p_max_dbm=p_dbm, rate_threshold=0.0)
            return srm.jain_index(with_qos.rates), srm.jain_index(without.rates), with_qos.infeasible

        res = _pmap(one, seeds, cfg.run.threads)
        for seed, (jq, jn, bad) in zip(seeds, res):
            out.add(f"{p_dbm}/seed{seed}", "jain_qos", jq)
            out.add(f"{p_dbm}/seed{seed}", "jain_no_qos", jn)
            out.add(f"{p_dbm}/seed{seed}", "infeasible", bad)
        out.add(p_dbm, "jain_qos", float(np.mean([r[0] for r in res])), len(res))
        out.add(p_dbm, "jain_no_qos", float(np.mean([r[1] for r in res])), len(res))
        out.add(p_dbm, "infeasible_runs", sum(r[2] for r in res), len(res))
    return out.rows


def sumrate_vs_layers(cfg: ExperimentConfig) -> list:
    out = _Rows(cfg)
    seeds = instance_seeds(cfg)
    for layers in cfg.scenario.layers:
        def one(seed):
            inst, sol = solve(cfg, seed, layers=layers)
            base = srm.random_phase_baseline(inst, 100, np.random.default_rng(np.random.SeedSequence([seed, 5])))
            return sol.sum_rate, base.sum_rate

        res = _pmap(one, seeds, cfg.run.threads)
        out.add(layers, "sum_rate", float(np.mean([r[0] for r in res])), len(res))
        out.add(layers, "random_sum_rate", float(np.mean([r[1] for r in res])), len(res))
    return out.rows


RUNNERS = {
    "codebook-convergence": codebook_convergence,
    "beam-pattern": beam_pattern,
    "training-accuracy": training_accuracy,
    "training-mse": training_mse,
    "rate-vs-overhead": rate_vs_overhead,
    "multipath": multipath,
    "srm-convergence": srm_convergence,
    "fairness": fairness,
    "sumrate-vs-layers": sumrate_vs_layers,
}


def run_experiment(cfg: ExperimentConfig, out=None) -> list:
    rows = RUNNERS[cfg.experiment](cfg)
    if out is not None:
        write_rows(out, rows)
    return rows
