"""Command-line entry point.

    ufda run CONFIG --out DIR [--seed N] [--pseudo phl|psl] [--gcld/--no-gcld] ...
    ufda ablate CONFIG --out DIR [--seeds 0 1 2]
    ufda sweep CONFIG --param lambda|r --values 0.3 0.4 0.5 --out DIR
    ufda scenario CONFIG --out DIR

Exit status: 0 on success, 2 for a bad config or arguments, 3 for any other
simulator error (invariant violation, divergence, protocol error), 4 when
some sweep or ablation cells failed.
"""
import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import MVD_VIEWS, PSEUDO_MODES, RunConfig, dump_config, load_config
from .errors import ConfigurationError, UfdaError
from .federation import run_experiment, write_report
from .scenario import dump_dataset, make_scenario, parse_umda_matrix

log = logging.getLogger("ufda")

EXIT_CONFIG = 2
EXIT_ERROR = 3
EXIT_PARTIAL = 4

SWEEP_PARAMS = {"lambda": ("federation", "lam"), "r": ("federation", "rounds")}


def _base_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig().validate()
    overrides = {}
    modes = {}
    if getattr(args, "pseudo", None):
        modes["pseudo"] = args.pseudo
    if getattr(args, "gcld", None) is not None:
        modes["gcld"] = args.gcld
    if getattr(args, "mvd", None) is not None:
        modes["mvd"] = args.mvd
    if getattr(args, "mvd_view", None):
        modes["mvd_view"] = args.mvd_view
    if getattr(args, "sfda", None):
        modes["sfda"] = True
    if modes:
        overrides["modes"] = modes
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return config.with_overrides(**overrides) if overrides else config


def _run_cell(config: RunConfig, out_dir: Path) -> dict:
    report = run_experiment(config)
    write_report(report, out_dir)
    return {"metric": report.metric, "unknown": report.per_class.get("unknown"), "status": "ok"}


def cmd_run(args) -> int:
    config = _base_config(args)
    out = Path(args.out)
    report = run_experiment(config)
    write_report(report, out)
    print(f"metric {report.metric:.2f}  ->  {out / 'report.json'}")
    return 0


def _aggregate(rows, fieldnames, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _cells(base: RunConfig, seeds, grid, out: Path):
    """Run every (label, overrides) cell for every seed; failures are recorded, not raised."""
    rows, failed = [], 0
    for label, overrides in grid:
        metrics = []
        for seed in seeds:
            cell_dir = out / label / f"seed{seed}"
            try:
                res = _run_cell(base.with_overrides(seed=seed, **overrides), cell_dir)
                metrics.append(res["metric"])
            except UfdaError as exc:
                failed += 1
                log.error("cell %s seed %d failed: %s", label, seed, exc)
                (cell_dir).mkdir(parents=True, exist_ok=True)
                (cell_dir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        rows.append({"cell": label, "n_ok": len(metrics), "n_failed": len(seeds) - len(metrics),
                     "mean_metric": repr(float(np.mean(metrics))) if metrics else "",
                     "std_metric": repr(float(np.std(metrics))) if metrics else "",
                     "metrics": " ".join(repr(m) for m in metrics)})
    return rows, failed


def cmd_ablate(args) -> int:
    base = _base_config(args)
    out = Path(args.out)
    grid = []
    for pseudo, use_gcld, use_mvd in itertools.product(PSEUDO_MODES[::-1], (False, True), (False, True)):
        label = f"{pseudo}{'+gcld' if use_gcld else ''}{'+mvd' if use_mvd else ''}"
        grid.append((label, {"modes": {"pseudo": pseudo, "gcld": use_gcld, "mvd": use_mvd}}))
    # PSL rows first, like the usual ablation layout
    grid.sort(key=lambda cell: (not cell[0].startswith("psl"), cell[0].count("+")))
    rows, failed = _cells(base, args.seeds, grid, out)
    for row, (label, ov) in zip(rows, grid):
        row.update({"PSL": int(ov["modes"]["pseudo"] == "psl"), "PHL": int(ov["modes"]["pseudo"] == "phl"),
                    "GCLD": int(ov["modes"]["gcld"]), "MVD": int(ov["modes"]["mvd"])})
    fields = ["cell", "PSL", "PHL", "GCLD", "MVD", "mean_metric", "std_metric", "n_ok", "n_failed", "metrics"]
    _aggregate(rows, fields, out / "ablation.csv")
    for row in rows:
        print(f"{row['cell']:<16} {row['mean_metric'][:6]:>6}  ({row['n_ok']} ok)")
    return EXIT_PARTIAL if failed else 0


def cmd_sweep(args) -> int:
    base = _base_config(args)
    out = Path(args.out)
    section, key = SWEEP_PARAMS[args.param]
    grid = [(f"{args.param}={v:g}", {section: {key: v}}) for v in args.values]
    rows, failed = _cells(base, args.seeds, grid, out)
    for row, v in zip(rows, args.values):
        row[args.param] = repr(v)
    _aggregate(rows, [args.param, "cell", "mean_metric", "std_metric", "n_ok", "n_failed", "metrics"],
               out / f"sweep_{args.param}.csv")
    for row in rows:
        print(f"{row['cell']:<14} {row['mean_metric'][:6]:>6}")
    return EXIT_PARTIAL if failed else 0


def cmd_scenario(args) -> int:
    config = _base_config(args)
    sc = config.scenario
    seq = np.random.SeedSequence(config.seed)
    # same stream as run_experiment uses for the scenario
    scenario = make_scenario(parse_umda_matrix(sc.umda_matrix), np.random.default_rng(seq.spawn(3)[0]),
                             dim=sc.dim, n_per_class=sc.n_per_class, shift_strength=sc.shift_strength,
                             noise_std=sc.noise_std, anchor_distance=sc.anchor_distance,
                             overlap_policy=sc.overlap_policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m, ds in enumerate(scenario.sources):
        dump_dataset(ds, out / f"source{m}.txt")
    dump_dataset(scenario.target, out / "target.txt")
    (out / "label_space.json").write_text(json.dumps(scenario.space.to_dict(), indent=2, sort_keys=True) + "\n")
    dump_config(config, out / "config.yaml")
    print(f"wrote {len(scenario.sources) + 1} domains to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ufda", description="Universal federated domain adaptation simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, modes=True):
        p.add_argument("config", nargs="?", help="YAML config; defaults are used when omitted")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        if modes:
            p.add_argument("--pseudo", choices=PSEUDO_MODES)
            p.add_argument("--gcld", action=argparse.BooleanOptionalAction, default=None)
            p.add_argument("--mvd", action=argparse.BooleanOptionalAction, default=None)
            p.add_argument("--mvd-view", choices=MVD_VIEWS)
            p.add_argument("--sfda", action="store_true", help="initial query only, no further rounds")

    p = sub.add_parser("run", help="run one experiment")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="PSL/PHL x GCLD x MVD grid")
    common(p, modes=False)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep lambda or the communication rate")
    common(p)
    p.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="generate and dump the synthetic domains")
    common(p, modes=False)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"ufda: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UfdaError as exc:
        print(f"ufda: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
