"""Command-line entry point (``simcomm``)."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, beamcode, experiments, srm
from . import training as tr
from .codebook import Codebook, CodebookBuilder
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .geometry import ChannelSet

log = logging.getLogger("simcomm")


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, args.profile)
    else:
        cfg = from_dict({"version": 1}, args.profile)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = replace(cfg, run=replace(cfg.run, threads=args.threads))
    return cfg


def _out(args, cfg, suffix):
    return Path(args.out or Path(cfg.run.out).with_suffix(suffix))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x


def cmd_codebook_build(args):
    cfg = _config(args)
    ch = ChannelSet.build(cfg.geometry.build())
    g = ch.geometry
    labels = [lab for p in experiments.TRAINING_PROTOCOLS for lab in tr.protocol_labels(g, p)]
    builder = CodebookBuilder(ch, cfg.solver.pdmm, cfg.run.seed, threads=cfg.run.threads)
    book = Codebook(g, [], builder.antenna)
    tr.BeamBank(ch, book, builder).prefetch(labels)
    out = _out(args, cfg, ".npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    book.save(out)
    print(f"wrote {len(book)} codewords to {out}")


def cmd_codebook_tables(args):
    text = beamcode.tables_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_train_run(args):
    cfg = _config(args)
    results = experiments.training_outcomes(cfg)
    by_snr = {}
    for snr, _, outcomes in results:
        by_snr.setdefault(snr, []).extend(outcomes)
    out = _out(args, cfg, ".csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    tr.write_csv(out, by_snr.items())
    print(f"wrote {sum(len(v) for v in by_snr.values())} trials to {out}")


def cmd_srm_solve(args):
    cfg = _config(args)
    inst = experiments.srm_instance(cfg, cfg.run.seed)
    t0 = time.perf_counter()
    sol = srm.vd_bsum(inst, params=cfg.solver.ipdd, seed=cfg.run.seed)
    wall = time.perf_counter() - t0
    doc = {
        "instance_hash": inst.fingerprint(),
        "config_hash": cfg.digest(),
        "seed": cfg.run.seed,
        "solver_params": asdict(cfg.solver.ipdd),
        "trace": sol.trace,
        "rates": sol.rates,
        "sum_rate": sol.sum_rate,
        "jain_index": srm.jain_index(sol.rates) if np.any(sol.rates > 0) else None,
        "power": sol.power,
        "converged": sol.converged,
        "infeasible": sol.infeasible,
        "feasibility": sol.feasibility,
        "wall_time_s": wall,
    }
    out = _out(args, cfg, ".json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    print(f"sum rate {sol.sum_rate:.4f} bit/s/Hz after {len(sol.trace) - 1} iterations; wrote {out}")


def cmd_bench_run(args):
    cfg = _config(args)
    out = _out(args, cfg, ".csv")
    rows = experiments.run_experiment(cfg, out)
    print(f"{cfg.experiment}: wrote {len(rows)} rows to {out}")


def cmd_version(args):
    print(f"simcomm {__version__}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--out", help="output file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--profile", choices=("small", "paper-ish"), help="preset merged under the config")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="simcomm", description="SIM beam training and sum-rate simulator")
    sub = p.add_subparsers(dest="group", required=True)

    cb = sub.add_parser("codebook", help="codebook tools").add_subparsers(dest="action", required=True)
    cb.add_parser("build", parents=[common], help="fit the training codebook").set_defaults(fn=cmd_codebook_build)
    cb.add_parser("tables", parents=[common], help="print the Hamming code tables").set_defaults(fn=cmd_codebook_tables)

    t = sub.add_parser("train", help="beam training").add_subparsers(dest="action", required=True)
    t.add_parser("run", parents=[common], help="Monte-Carlo training trials to CSV").set_defaults(fn=cmd_train_run)

    s = sub.add_parser("srm", help="sum-rate maximization").add_subparsers(dest="action", required=True)
    s.add_parser("solve", parents=[common], help="solve one seeded instance to JSON").set_defaults(fn=cmd_srm_solve)

    b = sub.add_parser("bench", help="experiments").add_subparsers(dest="action", required=True)
    b.add_parser("run", parents=[common], help="run the configured experiment to CSV").set_defaults(fn=cmd_bench_run)

    sub.add_parser("version", help="print the version").set_defaults(fn=cmd_version)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
