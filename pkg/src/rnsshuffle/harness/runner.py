"""Run persistence: CSV/JSON reports written atomically, and parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .. import __version__
from ..cost import cost_report
from ..experiment import ExperimentResult, simulate
from .config import ExperimentConfig, dump_config

ROUND_COLUMNS = ["round", "model_accuracy", "sia_success", "bits_per_param", "verdict"]
ATTACK_COLUMNS = ["round", "record_id", "true_owner", "guess", "correct"]
SWEEP_COLUMNS = ["axis", "value", "config_hash", "best_sia_success", "best_round", "final_accuracy",
                 "bits_per_param"]
SWEEP_AXES = {"alpha": "alpha", "n_clients": "n_clients", "r": "defense.r"}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def rounds_csv(res: ExperimentResult) -> str:
    return _csv(ROUND_COLUMNS, ([r.round, r.model_accuracy, r.sia_success, r.bits_per_param, r.verdict]
                                for r in res.rounds))


def attack_csv(res: ExperimentResult) -> str:
    def rows():
        for r in res.rounds:
            if r.outcome is None:
                continue
            for rid, owner, guess in zip(r.probe_ids, r.outcome.true_owner, r.outcome.per_record_guess):
                yield [r.round, int(rid), int(owner), int(guess), int(owner == guess)]
    return _csv(ATTACK_COLUMNS, rows())


def summary(res: ExperimentResult) -> dict:
    cfg = res.config
    best = res.best_round()
    out = {
        "code_version": __version__,
        "config_hash": cfg.config_hash(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        "final_accuracy": round(res.final_accuracy, 6),
        "best_sia_success": None,
        "best_round": None,
        "random_guess": round(1 / cfg.n_clients, 6),
        "random_guess_ci99": None,
        "per_round_sia_success": [None if r.sia_success is None else round(r.sia_success, 6) for r in res.rounds],
        "bits_per_param": res.rounds[-1].bits_per_param,
        "shadow_evaluations": res.shadow_evals,
        "verdicts": sorted({r.verdict for r in res.rounds}),
    }
    if best is not None:
        lo, hi = best.outcome.random_guess_ci(0.99)
        out.update(best_sia_success=round(best.sia_success, 6), best_round=best.round,
                   random_guess_ci99=[round(lo, 6), round(hi, 6)], probes_per_round=best.outcome.n_probes)
    if res.context is not None:
        rep = cost_report(res.context)
        out["cost"] = rep.to_record()
    return out


@dataclass
class ExperimentReport:
    output_dir: Path
    summary: dict
    result: ExperimentResult

    @property
    def best_sia_success(self) -> float | None:
        return self.summary["best_sia_success"]


def _write_atomically(target: Path, files: dict[str, str]) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text)
        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def run(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> ExperimentReport:
    """Run one experiment and persist its reports.

    Nothing is left behind when the run fails.  ``timing.json`` holds the wall
    time; every other file depends only on the config.
    """
    target = Path(output_dir if output_dir is not None else cfg.output_dir)
    start = time.perf_counter()
    res = simulate(cfg)
    summ = summary(res)
    files = {
        "config.yaml": dump_config(cfg),
        "rounds.csv": rounds_csv(res),
        "attack.csv": attack_csv(res),
        "summary.json": json.dumps(summ, indent=2, sort_keys=True) + "\n",
        "timing.json": json.dumps({"wall_time_s": round(time.perf_counter() - start, 3)}) + "\n",
    }
    _write_atomically(target, files)
    return ExperimentReport(target, summ, res)


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence, output_dir: str | Path | None = None
          ) -> list[ExperimentReport]:
    """One run per value of ``axis``, all sharing the base seed; writes ``sweep.csv``."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    root = Path(output_dir if output_dir is not None else cfg.output_dir)
    reports = []
    for v in values:
        point = cfg.replace(**{SWEEP_AXES[axis]: v})
        reports.append(run(point, root / f"{axis}={v}"))
    if reports:
        rows = ([axis, v, r.summary["config_hash"], r.summary["best_sia_success"], r.summary["best_round"],
                 r.summary["final_accuracy"], r.summary["bits_per_param"]] for v, r in zip(values, reports))
        (root / "sweep.csv").write_text(_csv(SWEEP_COLUMNS, rows))
    return reports
