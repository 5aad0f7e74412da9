"""Command line interface.

Subcommands:

* ``simulate``      dump mode paths and/or functionals for one replication
* ``estimate``      run the estimator on a functionals CSV
* ``experiment``    full Monte Carlo study (CSV/JSON/SVG outputs)
* ``oracle-check``  closed-form vs ODE moment cross-validation
* ``conditions``    divergence-condition report for a model config

Configs are JSON.  Model fields (family, d, beta, gamma, sigma, theta, c1,
exact_1d, theta_domain, u0) and experiment fields (T, n_max, checkpoints,
replications, master_seed, ...) may live in one flat object or the model may
be nested under a "model" key.  Command line flags override config values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

_MODEL_KEYS = ("family", "d", "beta", "gamma", "sigma", "theta", "c1",
               "exact_1d", "theta_domain", "u0")
_ALIASES = {"N_max": "n_max", "reps": "replications", "seed": "master_seed",
            "M": "replications"}


def load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def split_config(raw: dict) -> tuple[dict, dict]:
    """Separate a config JSON into (model config, experiment fields)."""
    raw = dict(raw)
    if "model" in raw and isinstance(raw["model"], dict):
        model_cfg = dict(raw.pop("model"))
    else:
        model_cfg = {k: raw.pop(k) for k in _MODEL_KEYS if k in raw}
    rest = {_ALIASES.get(k, k): v for k, v in raw.items()}
    return model_cfg, rest


def _parse_checkpoints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


def _fmt(v: float) -> str:
    return repr(float(v))


def _cmd_simulate(args) -> int:
    from .model import model_from_config, mu as mode_mu
    from .seeding import mode_stream
    from .simulate import functionals, simulate_mode, step_policy

    model_cfg, rest = split_config(load_config(args.config))
    model = model_from_config(model_cfg)
    T = args.T if args.T is not None else float(rest.get("T", 1.0))
    n = args.modes if args.modes is not None else int(rest.get("n_max", 16))
    seed = args.seed if args.seed is not None else int(rest.get("master_seed", 0))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    func_path = out / "functionals.csv"
    paths_path = out / "paths.csv"
    paths_fh = open(paths_path, "w", newline="\n") if args.dump_paths else None
    if paths_fh:
        paths_fh.write("k,t,u,xi\n")
    with open(func_path, "w", newline="\n") as fh:
        fh.write("k,u0sq,xi_T,X_T,Y_T,Z_T,steps\n")
        for k in range(1, n + 1):
            mu_k = mode_mu(model, k, model.theta_true)
            steps = args.steps or step_policy(mu_k, T)
            rng = mode_stream(seed, args.rep, k)
            path = simulate_mode(model, k, model.theta_true, T, steps, rng)
            f = functionals(path)
            fh.write("%d,%s,%s,%s,%s,%s,%d\n" % (
                k, _fmt(f.u0_sq), _fmt(f.xi_T), _fmt(f.X_T), _fmt(f.Y_T),
                _fmt(f.Z_T), f.steps_used))
            if paths_fh:
                for t, u, xi in zip(path.grid, path.u, path.xi):
                    paths_fh.write("%d,%s,%s,%s\n" % (k, _fmt(t), _fmt(u), _fmt(xi)))
    if paths_fh:
        paths_fh.close()
        print("wrote %s" % paths_path)
    print("wrote %s" % func_path)
    return 0


def _cmd_estimate(args) -> int:
    from .estimator import tfe
    from .model import model_from_config
    from .simulate import ModeFunctionals

    model_cfg, rest = split_config(load_config(args.config))
    model = model_from_config(model_cfg)
    T = args.T if args.T is not None else float(rest.get("T", 1.0))

    funcs = []
    with open(args.functionals) as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            row = line.strip().split(",")
            funcs.append(ModeFunctionals(
                k=int(row[idx["k"]]), u0_sq=float(row[idx["u0sq"]]),
                xi_T=float(row[idx["xi_T"]]), X_T=float(row[idx["X_T"]]),
                Y_T=float(row[idx["Y_T"]]), Z_T=float(row[idx["Z_T"]]),
                steps_used=int(row[idx["steps"]])))
    funcs.sort(key=lambda f: f.k)
    checkpoints = (_parse_checkpoints(args.checkpoints)
                   if args.checkpoints else (len(funcs),))
    res = tfe(funcs, model, T, checkpoints, bias_mode=args.bias_mode,
              clamp_to_domain=args.clamp_theta)
    dest = open(args.out, "w", newline="\n") if args.out else sys.stdout
    dest.write("rep,n,theta_hat,a_n,b_n,normalized_stat,denominator\n")
    for n in res.checkpoints:
        dest.write("0,%d,%s,%s,%s,%s,%s\n" % (
            n, _fmt(res.theta_hat[n]), _fmt(res.a_n.get(n, float("nan"))),
            _fmt(res.b_n.get(n, float("nan"))),
            _fmt(res.normalized_stat.get(n, float("nan"))),
            _fmt(res.denominator[n])))
    if dest is not sys.stdout:
        dest.close()
        print("wrote %s" % args.out)
    return 0


def _cmd_experiment(args) -> int:
    from .experiment import ExperimentConfig, run_experiment

    model_cfg, rest = split_config(load_config(args.config))
    rest["model"] = model_cfg
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    rest = {k: v for k, v in rest.items() if k in known}
    if args.modes is not None:
        rest["n_max"] = args.modes
    if args.reps is not None:
        rest["replications"] = args.reps
    if args.seed is not None:
        rest["master_seed"] = args.seed
    if args.checkpoints:
        rest["checkpoints"] = _parse_checkpoints(args.checkpoints)
    if args.threads is not None:
        rest["threads"] = args.threads
    if args.bias_mode is not None:
        rest["bias_mode"] = args.bias_mode
    if args.clamp_theta:
        rest["clamp_theta"] = True
    if args.out_dir is not None:
        rest["out_dir"] = args.out_dir
    if args.no_figures:
        rest["emit_figures"] = False
    rest.setdefault("n_max", 100)
    rest.setdefault("replications", 10)
    config = ExperimentConfig(**rest)
    result = run_experiment(config)
    for w in result.warnings:
        print("warning: %s" % w, file=sys.stderr)
    for n in sorted(result.aggregates):
        row = result.aggregates[n]
        line = "n=%-6d median|err|=%.6g" % (n, row["median_abs_error"])
        if "ks_distance" in row:
            line += "  stat mean=%+.3f var=%.3f KS=%.4f%s" % (
                row["stat_mean"], row["stat_variance"], row["ks_distance"],
                " (pass)" if row["ks_pass"] else "")
        print(line)
    for p in result.written:
        print("wrote %s" % p)
    return 0


def _cmd_oracle_check(args) -> int:
    from .oracle import oracle_check_rows

    mus = [float(tok) for tok in args.mu.replace(" ", "").split(",") if tok]
    rows = oracle_check_rows(mus, T=args.T, num_steps=args.steps)
    dest = open(args.out, "w", newline="\n") if args.out else sys.stdout
    dest.write("mu,T,E_Z_closed,E_Z_ode,Var_Z_closed,Var_Z_ode,rel_err\n")
    for r in rows:
        dest.write("%s,%s,%s,%s,%s,%s,%s\n" % (
            _fmt(r["mu"]), _fmt(r["T"]), _fmt(r["E_Z_closed"]),
            _fmt(r["E_Z_ode"]), _fmt(r["Var_Z_closed"]), _fmt(r["Var_Z_ode"]),
            _fmt(r["rel_err"])))
    if dest is not sys.stdout:
        dest.close()
        print("wrote %s" % args.out)
    return 0


def _cmd_conditions(args) -> int:
    from .model import check_divergence, model_from_config

    model_cfg, rest = split_config(load_config(args.config))
    model = model_from_config(model_cfg)
    theta = args.theta if args.theta is not None else model.theta_true
    report = check_divergence(model, theta, K=args.modes)
    payload = {
        "consistency_diverges": report.consistency_diverges,
        "normality_diverges": report.normality_diverges,
        "partial_sums": [
            {"K": k, "S1": s1, "S2": s2} for k, s1, s2 in report.partial_sums],
    }
    if report.exponent_verdict is not None:
        payload["exponent_verdict"] = {
            "consistency_diverges": report.exponent_verdict.consistency_diverges,
            "normality_diverges": report.exponent_verdict.normality_diverges,
            "note": report.exponent_verdict.note,
        }
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdefit",
        description="Spectral simulation and trajectory-fitting estimation "
                    "for linear parabolic SPDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dump paths/functionals for one replication")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--modes", type=int)
    p.add_argument("--steps", type=int, help="override the step policy")
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("-T", type=float, dest="T")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--dump-paths", action="store_true")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate theta from a functionals CSV")
    p.add_argument("--functionals", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoints")
    p.add_argument("--bias-mode", default="exact",
                   choices=["exact", "leading", "expansion", "plugin", "none"])
    p.add_argument("--clamp-theta", action="store_true")
    p.add_argument("-T", type=float, dest="T")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("experiment", help="full Monte Carlo study")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--modes", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--checkpoints")
    p.add_argument("--bias-mode",
                   choices=["exact", "leading", "expansion", "plugin"])
    p.add_argument("--clamp-theta", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("oracle-check", help="closed-form vs ODE moment check")
    p.add_argument("--mu", default="0.5,2,10")
    p.add_argument("-T", type=float, dest="T", default=1.0)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_oracle_check)

    p = sub.add_parser("conditions", help="divergence condition report")
    p.add_argument("--config", required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--modes", type=int, default=10000)
    p.set_defaults(fn=_cmd_conditions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
