"""Command-line entry point: ``cdscore {fit,test,ci,moments,simulate,power}``.

Every flag can also come from an environment variable named
``CDSCORE_<FLAG>`` (upper case, dashes as underscores); a flag on the
command line wins over the environment.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import simulation as sim
from .decorrelation import METHODS
from .errors import CDScoreError, MissingColumn, SolverError, ValidationError
from .ingest import ColumnSpec, ingest_csv, read_table
from .model_data import ReplicateMatrix, estimate_error_moments, surrogate_from_replicates
from .pipeline import TuningSettings, run_pipeline

SCHEMA_VERSION = 1
ENV_PREFIX = "CDSCORE_"

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--input", required=True, help="CSV file with a header row")
    g.add_argument("--response", default="y")
    g.add_argument("--surrogate", help="error-prone covariate column")
    g.add_argument("--replicates", type=_names,
                   help="comma-separated replicate columns of the error-prone covariate")
    g.add_argument("--covariates", type=_names,
                   help="comma-separated clean covariates (default: all other columns)")
    g.add_argument("--sigma-u2", type=float, help="error variance of one measurement")
    g.add_argument("--eu4", type=float, help="fourth moment of one error (default Gaussian)")


def _tuning_flags(p):
    g = p.add_argument_group("tuning")
    g.add_argument("--lambda", dest="lam", type=float, help="fixed lasso penalty (skips CV)")
    g.add_argument("--lambda-prime", type=float, help="fixed omega penalty (skips CV)")
    g.add_argument("--folds", type=int, default=5, help="CV folds for lambda")
    g.add_argument("--folds-prime", type=int, default=4, help="CV folds for lambda'")
    g.add_argument("--omega-method", choices=METHODS, default="dantzig")
    g.add_argument("--no-refit", dest="refit", action="store_false",
                   help="keep the penalized estimate instead of refitting on its support")
    g.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdscore", description="Score tests and confidence intervals for "
                     "a linear model with one mismeasured covariate.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in (("fit", "CoCoLasso fit"),
                           ("test", "score test of H0: beta = beta*"),
                           ("ci", "one-step estimate and confidence interval")):
        p = sub.add_parser(name, help=helptext)
        _data_flags(p)
        _tuning_flags(p)
        if name == "test":
            p.add_argument("--beta-star", type=float, default=0.0,
                           help="hypothesized value on the original scale")
        if name != "fit":
            p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--out", help="JSON report path (default: JSON on stdout)")

    p = sub.add_parser("moments", help="error moments from replicate columns")
    p.add_argument("--input", required=True)
    p.add_argument("--replicates", type=_names, required=True)
    p.add_argument("--out")

    for name, helptext in (("simulate", "Monte Carlo level and coverage study"),
                           ("power", "rejection rates over a grid of true beta")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--n", type=int, default=100)
        p.add_argument("--p", type=int, default=250)
        p.add_argument("--rho", type=float, default=0.25)
        p.add_argument("--sigma-eps", type=float, default=0.2)
        p.add_argument("--sigma-u", type=float, default=0.1)
        p.add_argument("--scenario", type=int, choices=(1, 2), default=1)
        p.add_argument("--replications", type=int, default=500)
        p.add_argument("--beta-star", type=float, default=1.0)
        p.add_argument("--alpha", type=_floats, default=[0.01, 0.05, 0.10],
                       help="comma-separated significance levels")
        p.add_argument("--omega-method", choices=METHODS, default="lasso")
        p.add_argument("--fast", action="store_true",
                       help="reuse the tuning chosen on replication 0 across the cell")
        p.add_argument("--seed", type=int, default=20240601)
        p.add_argument("--threads", type=int, default=_cores())
        p.add_argument("--out", help="JSON report path; CSV tables are written beside it")
        if name == "simulate":
            p.add_argument("--beta-true", type=float)
            p.add_argument("--records", action="store_true",
                           help="keep per-replication records in the report")
        else:
            p.add_argument("--beta-grid", type=_floats, default=[1.0, 1.05, 1.10, 1.15])
            p.add_argument("--no-plot", dest="plot", action="store_false")
    return parser


def _env_defaults(parser: argparse.ArgumentParser, argv) -> None:
    """Fill defaults from ``CDSCORE_*`` variables for the chosen subcommand."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd = next((a for a in argv if a in sub.choices), None)
    if cmd is None:
        return
    for action in sub.choices[cmd]._actions:
        if not action.option_strings or action.dest == "help":
            continue
        flag = max(action.option_strings, key=len).lstrip("-")
        raw = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
        if raw is None:
            continue
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            on = raw.strip().lower() in ("1", "true", "yes", "on")
            action.default = on if isinstance(action, argparse._StoreTrueAction) else not on
        else:
            try:
                action.default = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ValidationError(f"bad value in {ENV_PREFIX}{flag.upper()}: {exc}")
            if action.choices is not None and action.default not in action.choices:
                raise ValidationError(f"{ENV_PREFIX}{flag.upper()} must be one of "
                                      f"{list(action.choices)}")
        action.required = False


# -- helpers -----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit(report: dict, out, summary: str) -> None:
    report = _jsonable({"schema_version": SCHEMA_VERSION, **report})
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        print(summary)
    else:
        print(text)


def _spec(args) -> ColumnSpec:
    if (args.surrogate is None) == (args.replicates is None):
        raise ValidationError("give exactly one of --surrogate or --replicates")
    if args.replicates is not None:
        if len(args.replicates) < 2:
            raise ValidationError("--replicates needs at least two columns")
        sur = tuple(args.replicates)
    else:
        sur = (args.surrogate,)
    return ColumnSpec(args.response, sur, tuple(args.covariates) if args.covariates else None)


def _tuning(args) -> TuningSettings:
    return TuningSettings(lam=args.lam, lambda_prime=args.lambda_prime, folds=args.folds,
                          folds_prime=args.folds_prime, omega_method=args.omega_method,
                          refit=args.refit)


def _fit_report(ing, res, tuning) -> dict:
    rec, th = ing.record, res.theta
    names = list(ing.columns.covariates)
    raw = rec.theta_to_raw(th.theta)
    support = [("surrogate" if j == 0 else names[j - 1]) for j in th.support]
    return {
        "n": ing.raw.n,
        "p": ing.raw.p,
        "columns": {"response": ing.columns.response, "surrogate": list(ing.columns.surrogate),
                    "covariates": names},
        "moments": ing.moments,
        "standardization": rec.to_dict(),
        "tuning": {**tuning.to_dict(), "lambda": th.lam,
                   "lambda_prime": res.omega.lambda_prime,
                   "lambda_selected_by_cv": tuning.lam is None,
                   "lambda_prime_selected_by_cv": tuning.lambda_prime is None},
        "theta": {
            "standardized": {"beta": th.beta, "gamma": th.gamma},
            "original": {"beta": raw[0], "gamma": raw[1:], "intercept": rec.intercept_raw(th.theta)},
            "support": support,
            "refitted": th.refitted,
        },
        "omega": res.omega.to_dict(),
        "projection": {"distance": res.moments.projection_distance,
                       "iterations": res.moments.projection_iters},
    }


def _run_data_command(args) -> tuple[dict, str]:
    ing = ingest_csv(args.input, _spec(args), args.sigma_u2, args.eu4)
    tuning = _tuning(args)
    rec = ing.record
    alpha = getattr(args, "alpha", 0.05)
    beta_star_raw = getattr(args, "beta_star", 0.0)
    beta_star = beta_star_raw / rec.w_scale
    res = run_pipeline(ing.standardized, tuning, beta_star=beta_star, alpha=alpha,
                       seed=args.seed, with_test=args.command == "test",
                       with_ci=args.command == "ci")
    report = {"command": args.command, "input": str(args.input), "seed": args.seed}
    report.update(_fit_report(ing, res, tuning))
    th = res.theta
    if args.command == "fit":
        raw_beta = rec.beta_to_raw(th.beta)
        summary = (f"beta = {raw_beta:.6g} (standardized {th.beta:.6g}), "
                   f"support size {th.support.size}, lambda = {th.lam:.4g}")
    elif args.command == "test":
        t = res.test
        report["test"] = {**t.to_dict(), "beta_star_original": beta_star_raw,
                          "beta_star_standardized": beta_star}
        summary = (f"H0: beta = {beta_star_raw:g}  T = {t.t_stat:.4f}  "
                   f"p = {t.p_value:.4g}  {'reject' if t.reject else 'do not reject'} "
                   f"at alpha = {t.alpha:g}")
    else:
        c = res.one_step
        s = rec.w_scale
        report["one_step"] = {
            "standardized": c.to_dict(),
            "original": {"beta_hat": c.beta_hat * s, "se": c.se * s,
                         "ci_low": c.ci_low * s, "ci_high": c.ci_high * s,
                         "beta_tilde": c.beta_tilde * s},
        }
        summary = (f"beta_hat = {c.beta_hat * s:.6g}  "
                   f"{100 * (1 - c.alpha):g}% CI ({c.ci_low * s:.6g}, {c.ci_high * s:.6g})")
    return report, summary


def _run_moments(args) -> tuple[dict, str]:
    header, values = read_table(args.input)
    missing = [c for c in args.replicates if c not in header]
    if missing:
        raise MissingColumn(f"{args.input}: no column named {missing[0]!r}", column=missing[0])
    reps = ReplicateMatrix(values[:, [header.index(c) for c in args.replicates]])
    s2, u4 = estimate_error_moments(reps)
    avg = surrogate_from_replicates(reps, s2, u4)
    report = {"command": "moments", "input": str(args.input), "n": reps.n, "replicates": reps.m,
              "sigma_u2": s2, "sigma_u": float(np.sqrt(s2)), "eu4": u4,
              "kurtosis": u4 / s2 ** 2 if s2 > 0 else None,
              "averaged": {"sigma_u2": avg.sigma_u2, "eu4": avg.eu4}}
    summary = f"sigma_u = {np.sqrt(s2):.6g}  E(U^4) = {u4:.6g}  (m = {reps.m}, n = {reps.n})"
    return report, summary


def _sim_config(args, **extra) -> sim.SimConfig:
    return sim.SimConfig(n=args.n, p=args.p, rho=args.rho, sigma_eps=args.sigma_eps,
                         sigma_u=args.sigma_u, theta0=sim.scenario_theta(args.scenario, args.p),
                         beta_star=args.beta_star, replications=args.replications,
                         base_seed=args.seed, omega_method=args.omega_method,
                         alpha_levels=tuple(args.alpha), fast=args.fast, **extra)


def _write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r[c] for c in columns})
    Path(path).write_text(buf.getvalue())


def _sidecar(out, suffix) -> Path:
    p = Path(out)
    return p.with_name(p.stem + suffix)


def _run_simulate(args) -> tuple[dict, str]:
    cfg = _sim_config(args, beta_true=args.beta_true, keep_records=args.records)
    rep = sim.run_monte_carlo(cfg, workers=max(1, args.threads))
    report = {"command": "simulate", **rep.to_dict(), "digest": rep.digest()}
    if args.out:
        level = rep.level_rows()
        _write_csv(_sidecar(args.out, "_level.csv"), level, list(level[0]))
        est = rep.estimator_row()
        if rep.valid:
            _write_csv(_sidecar(args.out, "_estimator.csv"), [est], list(est))
    parts = [f"a={r['alpha']:g}: {100 * r['rate']:.1f}%" for r in rep.rejection]
    e = rep.estimator
    summary = (f"{rep.valid}/{rep.replications} replications"
               + (" (fast mode)" if cfg.fast else "") + "; rejection " + ", ".join(parts))
    if e:
        summary += (f"; mean beta_hat {e['mean']:.4f}, emp sd {e['emp_sd']:.4f}, "
                    f"est sd {e['est_sd']:.4f}, coverage {100 * e['coverage']:.1f}%")
    if rep.flagged:
        summary += f"; WARNING {100 * rep.failure_rate:.1f}% of replications failed"
    return report, summary


def _run_power(args) -> tuple[dict, str]:
    cfg = _sim_config(args)
    table = sim.power_curve(cfg, args.beta_grid, args.alpha, workers=max(1, args.threads))
    report = {"command": "power", "config": cfg.to_dict(), "rows": table.rows,
              "digests": [r.digest() for r in table.reports],
              "fixed_tuning": [r.fixed_tuning for r in table.reports]}
    if args.out:
        _sidecar(args.out, ".csv").write_text(table.to_csv())
        if args.plot:
            from .plotting import plot_power_curve
            plot_power_curve(table, _sidecar(args.out, ".png"),
                             title=f"n = {cfg.n}, p = {cfg.p}, sigma_u = {cfg.sigma_u:g}")
    lines = []
    for b in args.beta_grid:
        rates = [r for r in table.rows if r["beta_true"] == b]
        lines.append(f"beta = {b:g}: " + ", ".join(
            f"a={r['alpha']:g} {100 * r['rate']:.1f}%" for r in rates))
    return report, "\n".join(lines)


_COMMANDS = {"fit": _run_data_command, "test": _run_data_command, "ci": _run_data_command,
             "moments": _run_moments, "simulate": _run_simulate, "power": _run_power}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _env_defaults(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if hasattr(args, "alpha") and args.command in ("test", "ci") \
                and not 0 < args.alpha < 1:
            raise ValidationError(f"--alpha must lie in (0, 1), got {args.alpha}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report, summary = _COMMANDS[args.command](args)
        msgs = sorted({f"{type(w.message).__name__}: {w.message}" for w in caught})
        for m in msgs:
            print(f"warning: {m}", file=sys.stderr)
        if msgs:
            report["warnings"] = msgs
        _emit(report, args.out, summary)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CDScoreError as exc:  # pragma: no cover - every error is one of the two above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
