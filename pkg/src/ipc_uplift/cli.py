"""Command line entry point: ``ipc-uplift {gen,bench,transform}``.

Exit status: 0 success, 1 usage or config error, 2 data validation error,
3 every benchmarked method failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .boosting import GbmConfig
from .data_model import DataError, load_csv, validate, write_csv
from .estimators import METHODS
from .evaluation import run_benchmark
from .synthetic import (CampaignConfig, generate_campaign, load_truth_csv,
                        write_truth_csv)
from .transforms import crvtw_transform, ipc_transform, rdt_targets

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("ipc_uplift")

TRANSFORMS = {"ipc": ipc_transform, "crvtw": crvtw_transform, "rdt": rdt_targets}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    gbm: GbmConfig = field(default_factory=GbmConfig)
    methods: list = field(default_factory=lambda: ["ipc", "tlearner"])
    folds: int = 5
    holdout: float | None = None
    seed: int = 0
    n_random: int = 1

    def resolved(self) -> dict:
        return {
            "campaign": self.campaign.resolved(),
            "gbm": asdict(self.gbm),
            "methods": list(self.methods),
            "folds": self.folds,
            "holdout": self.holdout,
            "seed": self.seed,
            "n_random": self.n_random,
        }


def _build(cls, section: dict | None, name: str):
    section = section or {}
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def load_run_config(path=None, **overrides) -> RunConfig:
    """Read a YAML run config; missing keys take their defaults."""
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a mapping")
    top = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(
        campaign=_build(CampaignConfig, doc.get("campaign"), "campaign"),
        gbm=_build(GbmConfig, doc.get("gbm"), "gbm"),
        methods=list(doc.get("methods", ["ipc", "tlearner"])),
        folds=int(doc.get("folds", 5)),
        holdout=doc.get("holdout"),
        seed=int(doc.get("seed", 0)),
        n_random=int(doc.get("n_random", 1)),
    )
    allowed = set(METHODS) | {"random", "oracle"}
    bad = [m for m in cfg.methods if m not in allowed]
    if bad:
        raise ConfigError(f"unknown method(s): {', '.join(bad)}; choose from "
                          f"{', '.join(sorted(allowed))}")
    if not cfg.methods:
        raise ConfigError("methods must be non-empty")
    if cfg.holdout is not None and not 0 < float(cfg.holdout) < 1:
        raise ConfigError("holdout must be a fraction in (0, 1)")
    if cfg.holdout is None and cfg.folds < 2:
        raise ConfigError("folds must be >= 2")
    return cfg


def _write_atomic(path: Path, write) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _check_writable(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise OSError(f"cannot write to {p}")


# -- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed)
    campaign = cfg.campaign.replace(seed=cfg.seed)
    _check_writable(args.out, args.truth)
    data, truth = generate_campaign(campaign)
    write_csv(data, args.out)
    if args.truth:
        write_truth_csv(truth, args.truth)
    if len(data) == 0:
        log.warning("n=0: wrote a header-only file")
        return EXIT_OK
    for arm, name in ((0, "control"), (1, "treated")):
        mask = data.treatment == arm
        rate = data.conversion[mask].mean() if mask.any() else float("nan")
        print(f"{name}: n={int(mask.sum())} conversion_rate={rate:.4%}")
    return EXIT_OK


def _parse_methods(raw: str | None):
    if raw is None:
        return None
    return [m.strip() for m in raw.split(",") if m.strip()]


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config, methods=_parse_methods(args.methods),
                          folds=args.folds, holdout=args.holdout, seed=args.seed)
    _check_writable(args.out, args.curves)
    data = load_csv(args.data)
    problems = validate(data)
    if problems:
        for line in problems[:50]:
            print(line, file=sys.stderr)
        if len(problems) > 50:
            print(f"... {len(problems) - 50} more", file=sys.stderr)
        return EXIT_DATA

    truth = None
    wants_oracle = "oracle" in cfg.methods
    if args.truth:
        truth = load_truth_csv(args.truth, data.propensity, cfg.campaign.discount)
        if len(truth) != len(data):
            raise ConfigError("ground-truth file and data file differ in length")
    elif wants_oracle:
        raise ConfigError("method 'oracle' needs --truth")

    fitted = [m for m in cfg.methods if m not in ("random", "oracle")]
    if not fitted:
        raise ConfigError("at least one fitted method is required")
    report = run_benchmark(data, fitted, k=cfg.folds, seed=cfg.seed, config=cfg.gbm,
                           holdout=cfg.holdout, truth=truth, n_random=cfg.n_random)
    doc = report.to_dict()
    doc["config"] = cfg.resolved()
    doc["config"]["data"] = str(args.data)

    if args.out:
        _write_atomic(Path(args.out), lambda fh: json.dump(doc, fh, indent=2))
    if args.curves:
        def write_curves(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "fold", "fraction", "value", "normalized_value"])
            for name, curves in report.curves.items():
                for fold, curve in enumerate(curves):
                    if curve is None:
                        continue
                    norm = curve.normalized
                    for i, (f, v) in enumerate(zip(curve.fraction, curve.value)):
                        w.writerow([name, fold, repr(float(f)), repr(float(v)),
                                    "" if norm is None else repr(float(norm[i]))])
        _write_atomic(Path(args.curves), write_curves)

    print(f"{'method':<11} {'qini mean':>10} {'qini std':>9} {'seconds':>9} {'rel. ipc':>9}")
    for name, mean, std, secs, rel in report.summary_rows():
        print(f"{name:<11} {mean:>10.4f} {std:>9.4f} {secs:>9.3f} {rel:>9.2f}")
    failed = [m for m in fitted if all(q is None for q in report.methods[m].qini)]
    for m in failed:
        print(f"{m}: failed on every fold: {report.methods[m].errors[0]}", file=sys.stderr)
    return EXIT_RUNTIME if len(failed) == len(fitted) else EXIT_OK


def cmd_transform(args) -> int:
    if args.method not in TRANSFORMS:
        raise ConfigError(f"unknown transform {args.method!r}; choose from "
                          f"{', '.join(TRANSFORMS)}")
    _check_writable(args.out)
    data = load_csv(args.data)
    problems = validate(data)
    if problems:
        for line in problems[:50]:
            print(line, file=sys.stderr)
        return EXIT_DATA
    ts = TRANSFORMS[args.method](data)
    if len(ts) == 0:
        log.warning("transform produced no rows")

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"feature_{j}" for j in range(data.feature_count)]
                   + ["z", "source_row_index"])
        for x, z, i in zip(ts.features.tolist(), ts.targets.tolist(),
                           ts.source_row_index.tolist()):
            w.writerow([repr(v) for v in x] + [repr(z), i])
    _write_atomic(Path(args.out), write)
    print(f"wrote {len(ts)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipc-uplift",
        description="Profit uplift modelling with the IPC response transformation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic coupon campaign")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True, help="dataset CSV")
    g.add_argument("--truth", help="optional ground-truth CSV")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="cross-validated profit-Qini benchmark")
    b.add_argument("--data", required=True)
    b.add_argument("--config")
    b.add_argument("--methods", help="comma separated, e.g. ipc,tlearner")
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--folds", type=int)
    grp.add_argument("--holdout", type=float, help="test fraction, e.g. 0.3")
    b.add_argument("--seed", type=int)
    b.add_argument("--truth", help="ground-truth CSV from `gen --truth`")
    b.add_argument("--out", help="JSON report")
    b.add_argument("--curves", help="Qini curve CSV")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("transform", help="write a transformed training set")
    t.add_argument("--data", required=True)
    t.add_argument("--method", required=True, choices=sorted(TRANSFORMS))
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_transform)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
