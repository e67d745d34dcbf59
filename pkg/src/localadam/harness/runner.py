"""Seed sweeps over hyper-parameter grids, trajectory files and summaries."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diagnostics import TrajectoryRecord, TrajectoryRecorder, nearest_rank
from ..noise import GradientOracle, NoiseBank
from ..optim import Family, NonFiniteStateError, run
from .config import ConfigError, ExperimentConfig, serialize_config

TRAJECTORY_HEADER = ("seed", "family", "r", "k", "f_gap", "consensus_err",
                     "moreau_grad_nsq", "grad_nsq")
SUMMARY_HEADER = ("family", "grid", "M", "K", "R", "eta", "rho", "beta1", "beta2", "lambda",
                  "seeds", "diverged", "median", "quantile", "best_tuned", "selected",
                  "grad_calls", "rounds")
# local family -> minibatch baseline with the same update rule
BASELINE = {Family.LOCAL_ADAM: Family.MINIBATCH_ADAM, Family.LOCAL_SGDM: Family.MINIBATCH_SGDM}


class BudgetError(RuntimeError):
    """Local and minibatch rows in a comparison do not spend the same budget."""


def final_metric(rec: TrajectoryRecord, name: str, eta: float, objective) -> float:
    """Scalar summary of one run.

    ``f_gap`` is measured at the final averaged iterate, ``xhat_gap`` at the
    exponentially weighted average of ``zbar``, ``best_gap`` and
    ``peak_consensus`` over the whole run; other metrics take the last row.
    """
    if name == "f_gap":
        return float(objective.gap(rec.final_x))
    if name == "xhat_gap":
        return float(objective.gap(rec.xhat(eta, objective.mu)))
    if name == "best_gap":
        return rec.best_gap()
    if name == "peak_consensus":
        return float(rec.consensus_err.max())
    return float(rec.metric(name)[-1])


@dataclass(frozen=True)
class RunResult:
    family: str
    grid: int
    seed: int
    final: float
    diverged: bool
    record: TrajectoryRecord | None = field(default=None, repr=False)


@dataclass(frozen=True)
class SummaryRow:
    family: str
    grid: int
    point: dict
    seeds: int
    diverged: int
    median: float
    quantile: float
    best_tuned: float
    selected: bool
    grad_calls: int
    rounds: int

    @property
    def topology(self) -> tuple[int, int, int]:
        return self.point["M"], self.point["K"], self.point["R"]

    def csv_fields(self) -> list:
        p = self.point
        return [self.family, self.grid, p["M"], p["K"], p["R"], p["eta"], p["rho"], p["beta1"],
                p["beta2"], p["lam"], self.seeds, self.diverged, self.median, self.quantile,
                self.best_tuned, int(self.selected), self.grad_calls, self.rounds]


@dataclass
class SummaryReport:
    """Per (family, grid point) statistics of the final metric across seeds."""

    config: ExperimentConfig
    rows: list[SummaryRow]
    results: list[RunResult]
    out_dir: Path | None = None

    def finals(self, family: str, grid: int) -> dict[int, float]:
        return {r.seed: r.final for r in self.results if r.family == family and r.grid == grid}

    def selected(self, family: str, topology: tuple[int, int, int]) -> SummaryRow:
        rows = [r for r in self.rows if r.family == family and r.topology == topology and r.selected]
        if not rows:
            raise KeyError(f"no tuned row for {family} at {topology}")
        return rows[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in self.rows:
            w.writerow(row.csv_fields())
        return buf.getvalue()

    def table(self) -> str:
        q = self.config.quantile
        head = ["family", "grid", "M", "K", "R", "eta", "rho", "median", f"q{q:g}", "best", "sel",
                "div", "grad_calls"]
        body = [[r.family, str(r.grid), str(r.point["M"]), str(r.point["K"]), str(r.point["R"]),
                 f"{r.point['eta']:.4g}", f"{r.point['rho']:.4g}", f"{r.median:.4e}",
                 f"{r.quantile:.4e}", f"{r.best_tuned:.4e}", "*" if r.selected else "",
                 str(r.diverged), str(r.grad_calls)] for r in self.rows]
        return _format_table(head, body, title=f"{self.config.name}: metric={self.config.metric}")


def _format_table(head, body, title=""):
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(head)]
    line = "  ".join(h.rjust(w) for h, w in zip(head, widths))
    out = [title, line, "-" * len(line)] if title else [line, "-" * len(line)]
    out += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(out)


def trajectory_csv(rec: TrajectoryRecord | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    if rec is not None:
        w.writerows(rec.rows())
    return buf.getvalue()


def trajectory_name(family: str, grid: int, seed: int) -> str:
    return f"{family}_g{grid:03d}_s{seed}.csv"


def _execute(cfg, oracle, banks, points, task):
    family, gi, seed = task
    opt = cfg.grid.optimizer(points[gi], family)
    recorder = TrajectoryRecorder(oracle.objective)
    try:
        rec = run(opt, oracle, np.array(cfg.x0), seed, recorder=recorder,
                  parallel=cfg.threads or None, bank=banks[seed])
    except NonFiniteStateError:
        return RunResult(family, gi, seed, math.inf, True)
    value = final_metric(rec, cfg.metric, opt.eta, oracle.objective)
    if not math.isfinite(value):
        return RunResult(family, gi, seed, math.inf, True, rec)
    return RunResult(family, gi, seed, value, False, rec)


def _summarize(cfg: ExperimentConfig, points, results) -> list[SummaryRow]:
    by_key: dict[tuple[str, int], list[RunResult]] = {}
    for res in results:
        by_key.setdefault((res.family, res.grid), []).append(res)
    rows = []
    for fam in cfg.families:
        for gi, p in enumerate(points):
            runs = by_key[(fam, gi)]
            finals = np.array([r.final for r in runs])
            rows.append(dict(
                family=fam, grid=gi, point=p, seeds=len(runs),
                diverged=sum(r.diverged for r in runs),
                median=float(nearest_rank(finals, 0.5)),
                quantile=float(nearest_rank(finals, cfg.quantile)),
                grad_calls=p["K"] * p["M"] * p["R"], rounds=p["R"],
            ))
    stat = "quantile" if cfg.tuning == "quantile" else "median"
    out = []
    for row in rows:
        if cfg.tuning == "none":
            out.append(SummaryRow(best_tuned=math.nan, selected=False, **row))
            continue
        group = [r for r in rows if r["family"] == row["family"]
                 and (r["point"]["M"], r["point"]["K"], r["point"]["R"])
                 == (row["point"]["M"], row["point"]["K"], row["point"]["R"])]
        # ties go to the earliest grid point
        best = min(group, key=lambda r: (r[stat], r["grid"]))
        out.append(SummaryRow(best_tuned=best[stat], selected=best is row, **row))
    return out


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None,
                   write: bool = True, keep_records: bool = False) -> SummaryReport:
    """Run every (family, grid point, seed) and write one CSV per run plus ``summary.csv``.

    Runs sharing a seed reuse the same noise draws, so a learning-rate grid
    and a local-versus-minibatch pair see identical gradients. Runs that hit
    a non-finite state are marked diverged and contribute ``inf``.

    Parameters
    ----------
    output_dir
        Overrides ``cfg.output_dir``. Files go to ``<output_dir>/<name>/``.
    write
        Set False to skip all file output.
    keep_records
        Keep the full :class:`TrajectoryRecord` of each run in the report.
    """
    objective = cfg.objective.build()
    oracle = GradientOracle(objective, cfg.noise.build(), batch=cfg.noise.batch)
    points = cfg.grid.points()
    banks = {s: NoiseBank(oracle, s) for s in cfg.seeds}
    tasks = [(fam, gi, seed) for seed in cfg.seeds for gi in range(len(points)) for fam in cfg.families]

    out = None
    if write:
        out = Path(output_dir if output_dir is not None else cfg.output_dir) / cfg.name
        (out / "trajectories").mkdir(parents=True, exist_ok=True)

    def work(task):
        res = _execute(cfg, oracle, banks, points, task)
        if out is not None:
            path = out / "trajectories" / trajectory_name(res.family, res.grid, res.seed)
            path.write_text(trajectory_csv(res.record))
        if not keep_records and res.record is not None:
            res = RunResult(res.family, res.grid, res.seed, res.final, res.diverged)
        return res

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    report = SummaryReport(cfg, _summarize(cfg, points, results), results, out)
    if out is not None:
        (out / "summary.csv").write_text(report.to_csv())
        (out / "config.ini").write_text(serialize_config(cfg))
    return report


@dataclass(frozen=True)
class ComparisonRow:
    M: int
    K: int
    R: int
    local: str
    minibatch: str
    local_best: float
    minibatch_best: float
    wins: int
    seeds: int
    grad_calls: int
    rounds: int

    @property
    def ratio(self) -> float:
        return self.local_best / self.minibatch_best if self.minibatch_best > 0 else math.nan


@dataclass
class ComparisonReport:
    summary: SummaryReport
    rows: list[ComparisonRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "K", "R", "local", "minibatch", "local_best", "minibatch_best",
                    "ratio", "wins", "seeds", "grad_calls", "rounds"])
        for r in self.rows:
            w.writerow([r.M, r.K, r.R, r.local, r.minibatch, r.local_best, r.minibatch_best,
                        r.ratio, r.wins, r.seeds, r.grad_calls, r.rounds])
        return buf.getvalue()

    def table(self) -> str:
        head = ["M", "K", "R", "local", "minibatch", "local_best", "mb_best", "ratio", "wins",
                "grad_calls"]
        body = [[str(r.M), str(r.K), str(r.R), r.local, r.minibatch, f"{r.local_best:.4e}",
                 f"{r.minibatch_best:.4e}", f"{r.ratio:.4g}", f"{r.wins}/{r.seeds}",
                 str(r.grad_calls)] for r in self.rows]
        return _format_table(head, body, title=f"{self.summary.config.name}: local vs minibatch")


def compare(cfg: ExperimentConfig, output_dir: str | Path | None = None,
            write: bool = True) -> ComparisonReport:
    """Tune each family, then pit every local family against its minibatch baseline.

    ``wins`` counts seeds where the tuned local run's final metric is
    strictly below the tuned minibatch run's.
    """
    fams = [Family(f) for f in cfg.families]
    pairs = [(f, BASELINE[f]) for f in fams if f in BASELINE and BASELINE[f] in fams]
    if not pairs:
        raise ConfigError("experiment.families",
                          "compare needs a local family together with its minibatch baseline")
    if cfg.tuning == "none":
        raise ConfigError("experiment.tuning", "compare needs a tuning rule")
    summary = run_experiment(cfg, output_dir=output_dir, write=write)
    topologies = sorted({r.topology for r in summary.rows})
    rows = []
    for topo in topologies:
        for loc, mb in pairs:
            a = summary.selected(loc.value, topo)
            b = summary.selected(mb.value, topo)
            if (a.grad_calls, a.rounds) != (b.grad_calls, b.rounds):
                raise BudgetError(f"{loc.value} and {mb.value} budgets differ at {topo}")
            fa, fb = summary.finals(loc.value, a.grid), summary.finals(mb.value, b.grid)
            wins = sum(fa[s] < fb[s] for s in cfg.seeds)
            rows.append(ComparisonRow(*topo, loc.value, mb.value, a.best_tuned, b.best_tuned,
                                      wins, len(cfg.seeds), a.grad_calls, a.rounds))
    report = ComparisonReport(summary, rows)
    if summary.out_dir is not None:
        (summary.out_dir / "comparison.csv").write_text(report.to_csv())
    return report
