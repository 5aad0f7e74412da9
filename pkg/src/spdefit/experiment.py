"""Monte Carlo experiment harness.

Runs M independent replications of: simulate modes 1..N_max, accumulate their
functionals, evaluate the estimator at checkpoint prefixes, and normalize with
the centering sequences.  Aggregates per-checkpoint error statistics and
normality diagnostics, and writes CSV/JSON/SVG outputs.

Replications are independent work units.  Every (replication, mode) pair owns
a private counter-based random stream derived from the master seed, so the
results are a pure function of the configuration: reruns are byte-identical
and the worker count never affects the output.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ._version import __version__
from .estimator import DegenerateDenominatorError, tfe
from .model import check_divergence, model_from_config, mu as mode_mu, DIVERGES
from .seeding import derive_seed, mode_stream
from .simulate import functionals, simulate_mode, step_policy
from .stats import normality_summary


def default_checkpoints(n_max: int) -> tuple[int, ...]:
    """Geometric checkpoint ladder 25, 50, 100, ... capped at n_max."""
    if n_max < 25:
        return (n_max,)
    pts = []
    n = 25
    while n < n_max:
        pts.append(n)
        n *= 2
    pts.append(n_max)
    return tuple(pts)


@dataclass
class ExperimentConfig:
    """Reproducible description of one Monte Carlo study."""

    model: dict
    n_max: int
    replications: int
    T: float = 1.0
    checkpoints: tuple[int, ...] | None = None
    master_seed: int = 0
    kappa: float = 20.0
    min_steps: int = 256
    max_steps: int = 2**20
    bias_mode: str = "exact"
    clamp_theta: bool = False
    threads: int = 1
    ks_alpha: float = 0.01
    out_dir: str | None = None
    emit_figures: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.n_max)
        self.checkpoints = tuple(int(n) for n in self.checkpoints)
        if any(n < 1 or n > self.n_max for n in self.checkpoints):
            raise ValueError("checkpoints must lie in [1, n_max]")
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise ValueError("checkpoints must be strictly increasing")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoints"] = list(self.checkpoints)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "checkpoints" in d and d["checkpoints"] is not None:
            d["checkpoints"] = tuple(d["checkpoints"])
        return cls(**d)


@dataclass
class ReplicationRecord:
    rep: int
    theta_hat: dict[int, float]
    a_n: dict[int, float]
    b_n: dict[int, float]
    normalized_stat: dict[int, float]
    denominator: dict[int, float]
    degenerate: bool
    wall_time: float
    seed_trace: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[ReplicationRecord]
    aggregates: dict[int, dict]
    condition: dict
    warnings: list[str] = field(default_factory=list)
    written: list[str] = field(default_factory=list)


def run_replication(model, config: ExperimentConfig, rep: int) -> ReplicationRecord:
    """One replication: simulate all modes, estimate at the checkpoints."""
    start = time.perf_counter()
    theta = model.theta_true
    funcs = []
    for k in range(1, config.n_max + 1):
        mu_k = mode_mu(model, k, theta)
        steps = step_policy(mu_k, config.T, kappa=config.kappa,
                            min_steps=config.min_steps,
                            max_steps=config.max_steps)
        rng = mode_stream(config.master_seed, rep, k)
        path = simulate_mode(model, k, theta, config.T, steps, rng)
        funcs.append(functionals(path))
    trace = format(derive_seed(config.master_seed, rep, 0), "016x")
    try:
        res = tfe(funcs, model, config.T, config.checkpoints,
                  bias_mode=config.bias_mode,
                  clamp_to_domain=config.clamp_theta)
    except DegenerateDenominatorError:
        return ReplicationRecord(rep=rep, theta_hat={}, a_n={}, b_n={},
                                 normalized_stat={}, denominator={},
                                 degenerate=True,
                                 wall_time=time.perf_counter() - start,
                                 seed_trace=trace)
    return ReplicationRecord(
        rep=rep, theta_hat=res.theta_hat, a_n=res.a_n, b_n=res.b_n,
        normalized_stat=res.normalized_stat, denominator=res.denominator,
        degenerate=False, wall_time=time.perf_counter() - start,
        seed_trace=trace)


def _worker(args) -> list[ReplicationRecord]:
    cfg_dict, reps = args
    config = ExperimentConfig.from_dict(cfg_dict)
    model = model_from_config(config.model)
    return [run_replication(model, config, r) for r in reps]


def _aggregate(config: ExperimentConfig,
               records: list[ReplicationRecord]) -> dict[int, dict]:
    theta = float(config.model.get("theta", 1.0))
    out: dict[int, dict] = {}
    good = [r for r in records if not r.degenerate]
    for n in config.checkpoints:
        errs = np.array([r.theta_hat[n] - theta for r in good])
        stats = (np.array([r.normalized_stat[n] for r in good])
                 if good and all(n in r.normalized_stat for r in good)
                 else np.array([]))
        entry = {
            "n": n,
            "replications_used": len(good),
            "mean_error": float(np.mean(errs)) if errs.size else float("nan"),
            "median_abs_error": float(np.median(np.abs(errs))) if errs.size else float("nan"),
            "mad_error": float(np.median(np.abs(errs - np.median(errs)))) if errs.size else float("nan"),
        }
        if stats.size:
            summary = normality_summary(stats, alpha=config.ks_alpha)
            entry.update({
                "stat_mean": summary.sample_mean,
                "stat_variance": summary.sample_variance,
                "ks_distance": summary.ks,
                "ks_critical": summary.ks_critical,
                "ks_pass": summary.ks_pass,
            })
        out[n] = entry
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_replications_csv(path: Path, config: ExperimentConfig,
                           records: list[ReplicationRecord]) -> None:
    """One row per (replication, checkpoint); stable shortest-roundtrip floats."""
    with open(path, "w", newline="\n") as fh:
        fh.write("rep,n,theta_hat,a_n,b_n,normalized_stat,denominator\n")
        nan = float("nan")
        for r in records:
            if r.degenerate:
                continue
            for n in config.checkpoints:
                fh.write("%d,%d,%s,%s,%s,%s,%s\n" % (
                    r.rep, n, _fmt(r.theta_hat[n]), _fmt(r.a_n.get(n, nan)),
                    _fmt(r.b_n.get(n, nan)), _fmt(r.normalized_stat.get(n, nan)),
                    _fmt(r.denominator[n])))


def write_checkpoints_csv(path: Path, aggregates: dict[int, dict]) -> None:
    cols = ["n", "replications_used", "mean_error", "median_abs_error",
            "mad_error", "stat_mean", "stat_variance", "ks_distance",
            "ks_critical", "ks_pass"]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for n in sorted(aggregates):
            row = aggregates[n]
            vals = []
            for c in cols:
                v = row.get(c, "")
                if isinstance(v, bool):
                    vals.append(str(int(v)))
                elif isinstance(v, float):
                    vals.append(_fmt(v))
                else:
                    vals.append(str(v))
            fh.write(",".join(vals) + "\n")


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute the study described by ``config``; see the module docstring.

    Per-replication failures (degenerate denominator) are recorded and
    excluded from aggregates rather than aborting the run.
    """
    model = model_from_config(config.model)
    warnings: list[str] = []
    condition = check_divergence(model, model.theta_true,
                                 K=max(1000, config.n_max))
    if condition.consistency_diverges != DIVERGES:
        warnings.append("consistency condition is not known to diverge; "
                        "estimates need not converge")
    if condition.normality_diverges != DIVERGES:
        warnings.append("normality condition is not known to diverge; "
                        "normalized statistics carry no pass guarantee")

    reps = list(range(config.replications))
    if config.threads > 1 and config.replications > 1:
        chunks = [reps[i::config.threads] for i in range(config.threads)]
        chunks = [c for c in chunks if c]
        cfg_dict = config.to_dict()
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(_worker, [(cfg_dict, c) for c in chunks]))
        records = [r for part in parts for r in part]
    else:
        records = [run_replication(model, config, r) for r in reps]
    records.sort(key=lambda r: r.rep)

    aggregates = _aggregate(config, records)
    n_degen = sum(1 for r in records if r.degenerate)
    if n_degen:
        warnings.append("%d replication(s) had a degenerate denominator and "
                        "were excluded from aggregates" % n_degen)

    result = ExperimentResult(config=config, records=records,
                              aggregates=aggregates,
                              condition={
                                  "consistency": condition.consistency_diverges,
                                  "normality": condition.normality_diverges,
                              },
                              warnings=warnings)

    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rep_csv = out / "replications.csv"
        write_replications_csv(rep_csv, config, records)
        cp_csv = out / "checkpoints.csv"
        write_checkpoints_csv(cp_csv, aggregates)
        summary = {
            "package_version": __version__,
            "config": config.to_dict(),
            "condition": result.condition,
            "warnings": warnings,
            "degenerate_replications": n_degen,
            "checkpoints": {str(n): aggregates[n] for n in sorted(aggregates)},
            "total_wall_time": sum(r.wall_time for r in records),
        }
        sum_json = out / "summary.json"
        with open(sum_json, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        result.written = [str(rep_csv), str(cp_csv), str(sum_json)]
        if config.emit_figures and config.checkpoints:
            from .figures import emit_figures
            figs = emit_figures(result, out / "figures")
            result.written.extend(str(p) for p in figs)
    return result
