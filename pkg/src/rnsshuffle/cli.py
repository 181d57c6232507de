"""Command-line entry point: ``rnsshuffle <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .cost import cost_table
from .errors import ConfigInvalid
from .experiment import setup_data
from .fl.dump import write_dataset
from .harness.config import ExperimentConfig, load_config, validate
from .harness.runner import SWEEP_AXES, run, sweep
from .mixnet import Trust
from .rns import RnsContext, ResidueVector, Strategy, crt_solve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("rnsshuffle")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _value_list(text: str) -> list:
    out = []
    for v in (s.strip() for s in text.split(",")):
        if not v:
            continue
        try:
            out.append(int(v))
        except ValueError:
            out.append(float(v))
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "trust", None):
        cfg = cfg.replace(**{"defense.trust": args.trust})
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run(cfg, args.output)
    s = report.summary
    print(f"config {s['config_hash']}  final accuracy {s['final_accuracy']:.4f}  "
          f"best SIA success {s['best_sia_success']}  (random guess {s['random_guess']:.4f})")
    print(f"reports written to {report.output_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    reports = sweep(cfg, args.axis, _value_list(args.values), args.output)
    for r in reports:
        print(f"{r.output_dir.name}: best SIA success {r.summary['best_sia_success']}  "
              f"accuracy {r.summary['final_accuracy']:.4f}")
    return EXIT_OK


def cmd_cost(args) -> int:
    rows = cost_table(_int_list(args.n), _int_list(args.r), args.strategy)
    cols = ["n", "r", "shuffle_rounds", "alg1_bits", "alg1_rle_bits", "vanilla32_bits", "secure_agg_bits",
            "alg1_expansion", "alg1_rle_expansion", "moduli"]
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([" ".join(map(str, row[c])) if c == "moduli" else row[c] for c in cols])
        return EXIT_OK
    table = [cols] + [[" ".join(map(str, row[c])) if c == "moduli" else str(row[c]) for c in cols] for row in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(cols))]
    for line in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(line, widths)).rstrip())
    return EXIT_OK


def cmd_demo_crt(args) -> int:
    ctx = RnsContext.from_moduli((3, 5, 7))
    res = ResidueVector((1, 0, 6), ctx)
    M = ctx.product_M
    print(f"moduli {ctx.moduli}, M = {M}")
    print(f"residues {res.residues}")
    total = 0
    for a, m in zip(res.residues, ctx.moduli):
        Mi = M // m
        inv = pow(Mi, -1, m)
        total += a * Mi * inv
        print(f"  m={m}: M/m = {Mi}, inverse mod {m} = {inv}, term {a}*{Mi}*{inv} = {a * Mi * inv}")
    print(f"sum {total} mod {M} = {crt_solve(res)}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    diag = validate(cfg)
    print(f"config hash {cfg.config_hash()}")
    for note in diag.notes:
        print(f"note: {note}")
    for e in diag.errors:
        print(f"error: {e}")
    return EXIT_OK if diag.ok else EXIT_CONFIG


def cmd_export_data(args) -> int:
    cfg = _load(args)
    ds, part, _ = setup_data(cfg)
    write_dataset(args.output, ds, part)
    print(f"wrote {len(ds)} records for {part.n_clients} clients to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rnsshuffle", description="Shuffle-model FL simulator with RNS bit shuffling")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, output_required=False):
        sp.add_argument("--config", type=Path, help="YAML or JSON experiment config (defaults if omitted)")
        sp.add_argument("--trust", choices=[t.value for t in Trust], help="override the shuffler trust level")
        sp.add_argument("--seed", type=int, help="override the experiment seed")
        sp.add_argument("--output", type=Path, required=output_required, help="output location")

    sp = sub.add_parser("run", help="run one experiment and write its reports")
    with_config(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="repeat a run over values of one axis")
    with_config(sp)
    sp.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sp.add_argument("--values", required=True, help="comma-separated values, e.g. 0.1,1,10")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("cost", help="communication cost per parameter per client")
    sp.add_argument("--n", default="10", help="client counts, comma-separated")
    sp.add_argument("--r", default="4", help="precisions, comma-separated")
    sp.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.CONSECUTIVE_PRIMES.value)
    sp.add_argument("--format", choices=["text", "csv"], default="text")
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("demo-crt", help="print the CRT reconstruction of (1, 0, 6) under moduli 3, 5, 7")
    sp.set_defaults(func=cmd_demo_crt)

    sp = sub.add_parser("validate", help="check a config without running it")
    with_config(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("export-data", help="dump the synthetic dataset and partition")
    with_config(sp, output_required=True)
    sp.set_defaults(func=cmd_export_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        for line in exc.diagnostics or [str(exc)]:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
