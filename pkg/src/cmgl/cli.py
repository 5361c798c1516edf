"""Command-line entry point.

Subcommands: fit, select, lrtest, simulate, portfolio, weights. Every
subcommand reads its inputs, computes, and only then writes files, all
of them under --out. Flags override values from an optional TOML/JSON
--config file; each output JSON embeds the fully resolved configuration
and the library version so a run can be reproduced from its output
alone. Wall-clock runtime goes to stderr only, keeping outputs
byte-identical across repeated and parallel runs.

Exit codes: 0 success, 2 usage error (bad flags, unreadable or malformed
inputs), 3 computational failure (singularities, degeneracies).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__, io
from .estimate import fit_ols, fit_qmle, loglik, ols_variance, qmle_variance
from .exceptions import CmglError, InputError
from .lrtest import lr_test
from .portfolio import backtest
from .select import backward_select, exhaustive_select
from .simlab import SimConfig, run_part1, run_part2
from .weights import density

__all__ = ["main", "render_report"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPUTE = 3


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _table(rows) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    )


def _coef_table(beta, sd) -> str:
    rows = [["coef", "estimate", "sd"]]
    for k, b in enumerate(beta):
        s = None if sd is None else sd[k]
        rows.append([f"beta_{k}", _fmt(b), _fmt(s)])
    return _table(rows)


def _render_table(report) -> str:
    if report.get("part") == 1:
        rows = [["coef", "sd_mean", "esd"]]
        sd_mean = report.get("sd_mean") or []
        esd = report.get("esd") or []
        for k in range(len(sd_mean)):
            rows.append([f"beta_{k}", _fmt(sd_mean[k]), _fmt(esd[k])])
        lines = [_table(rows)] if len(rows) > 1 else []
        measures = report.get("measures")
        if measures:
            mrows = [["measure", "mean", "sd"]]
            for name in sorted(measures):
                m = measures[name]
                mrows.append([name, _fmt(m["mean"]), _fmt(m["sd"])])
            lines.append(_table(mrows))
        sel = report.get("selection")
        if sel:
            srows = [
                ["tpr", _fmt(sel["tpr"]["mean"])],
                ["fdr", _fmt(sel["fdr"]["mean"])],
                ["ct", _fmt(sel["ct"])],
            ]
            lines.append(_table([["selection", "mean"]] + srows))
        lines.append(f"replications used: {report['reps_used']}, failed: {report['n_failed']}")
        return "\n\n".join(lines)
    if report.get("part") == 2:
        rows = [["comparison", "prefer_alt", "equivalent", "prefer_exp", "rejection"]]
        for name in sorted(report["comparisons"]):
            c = report["comparisons"][name]
            rows.append(
                [
                    name,
                    _fmt(c["prefer_link1"]),
                    _fmt(c["equivalent"]),
                    _fmt(c["prefer_link2"]),
                    _fmt(c["rejection"]),
                ]
            )
        return _table(rows) + (
            f"\n\nreplications used: {report['reps_used']}, failed: {report['n_failed']}"
        )
    if "sharpe" in report:
        rows = [
            ["periods", _fmt(len(report["realized"]))],
            ["mean", _fmt(report["mean"])],
            ["sd", _fmt(report["sd"])],
            ["sharpe", _fmt(report["sharpe"])],
        ]
        return _table([["portfolio", "value"]] + rows)
    if "decision" in report:
        rows = [
            ["t_lr", _fmt(report["t_lr"])],
            ["z", _fmt(report["z"])],
            ["sigma_hat", _fmt(report["sigma_hat"])],
            ["z_alpha", _fmt(report["z_alpha"])],
            ["decision", report["decision"]],
        ]
        return _table([["statistic", "value"]] + rows)
    if "support" in report:
        head = [
            ["support", ";".join(map(str, report["support"]))],
            ["ebic", _fmt(report["ebic"])],
            ["subsets tried", _fmt(len(report["trace"]))],
        ]
        out = _table([["selection", "value"]] + head)
        refit = report.get("refit")
        if refit and refit.get("beta") is not None:
            out += "\n\n" + _coef_table(refit["beta"], refit.get("sd"))
        return out
    if "beta" in report:
        out = _coef_table(report["beta"], report.get("sd"))
        tail = [
            ["loglik", _fmt(report.get("loglik"))],
            ["iterations", _fmt(report.get("iterations"))],
            ["converged", _fmt(report.get("converged"))],
        ]
        return out + "\n\n" + _table(tail)
    return _table([[str(k), _fmt(v)] for k, v in sorted(report.items())])


def render_report(report, format: str = "json") -> str:
    """Deterministic text rendering of a report mapping.

    ``json`` gives the canonical serialized form (sorted keys, null for
    non-finite numbers); ``table`` gives an aligned human-readable
    summary of the report's main block.
    """
    if format == "json":
        return io.dumps_json(report)
    if format == "table":
        if not isinstance(report, dict):
            raise InputError("report must be a mapping")
        return _render_table(report) + "\n"
    raise InputError(f"unknown render format {format!r}; use 'json' or 'table'")


def _resolve(args, spec: dict) -> dict:
    """Merge flag values over config-file values over defaults.

    ``spec`` maps each key to its default; a default of ``...`` marks
    the key as required. Unknown keys in the config file are an error.
    """
    cfg = io.load_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(spec)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = {}
    for key, default in spec.items():
        value = getattr(args, key, None)
        if value is None:
            value = cfg.get(key, None if default is ... else default)
        if value is None:
            raise InputError(f"missing required option --{key.replace('_', '-')}")
        resolved[key] = value
    return resolved


def _echo(resolved: dict, seed=None) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "config": dict(resolved),
    }


def _print_report(report, out_path) -> None:
    sys.stdout.write(render_report(report, "table"))
    sys.stderr.write(f"wrote {out_path}\n")


def _cmd_fit(args) -> int:
    spec = {
        "data": ...,
        "weights": ...,
        "link": ...,
        "estimator": "qmle",
        "max_iter": 200,
        "tol": 1e-6,
        "out": ...,
    }
    opt = _resolve(args, spec)
    if opt["estimator"] not in ("qmle", "ols"):
        raise InputError("estimator must be 'qmle' or 'ols'")
    _, y = io.read_matrix_csv(opt["data"])
    ws, names = io.load_weightset(opt["weights"])

    if opt["estimator"] == "qmle":
        fit = fit_qmle(
            y, ws, opt["link"],
            max_iter=int(opt["max_iter"]), gtol=float(opt["tol"]), vcov=False,
        )
        ll, n_iter, converged = fit.loglik, fit.n_iter, fit.converged
        variance = qmle_variance
    else:
        if opt["link"] != "identity":
            raise InputError("the least-squares estimator requires the identity link")
        fit = fit_ols(y, ws, vcov=False)
        n_iter, converged = 0, True
        try:
            ll = loglik(fit.beta, y, ws, "identity")
        except CmglError:
            ll = None
        variance = ols_variance
    sd = vcov = mu4 = None
    if converged:
        try:
            ve = variance(fit, y, ws)
            sd, vcov, mu4 = ve.sd, ve.vcov, ve.mu4
        except CmglError as exc:
            sys.stderr.write(f"note: no variance estimate ({exc})\n")
    else:
        sys.stderr.write("warning: fit did not converge within the iteration budget\n")

    report = _echo(opt)
    report.update(
        {
            "n": y.shape[0],
            "p": y.shape[1],
            "weight_names": list(names),
            "beta": fit.beta,
            "sd": sd,
            "vcov": vcov,
            "mu4": mu4,
            "loglik": ll,
            "iterations": n_iter,
            "converged": converged,
        }
    )
    io.write_json(opt["out"], report)
    _print_report(report, opt["out"])
    return EXIT_OK


def _cmd_select(args) -> int:
    spec = {
        "data": ...,
        "weights": ...,
        "link": "identity",
        "estimator": "qmle",
        "gamma": 0.5,
        "method": "backward",
        "out": ...,
    }
    opt = _resolve(args, spec)
    if opt["method"] not in ("backward", "exhaustive"):
        raise InputError("method must be 'backward' or 'exhaustive'")
    _, y = io.read_matrix_csv(opt["data"])
    ws, names = io.load_weightset(opt["weights"])
    search = backward_select if opt["method"] == "backward" else exhaustive_select
    res = search(
        y, ws, link=opt["link"], estimator=opt["estimator"], gamma=float(opt["gamma"])
    )

    sd_full = None
    if res.fit is not None and res.fit.sd is not None:
        sd_full = [None] * (ws.k + 1)
        for idx, value in zip(res.support, res.fit.sd):
            sd_full[idx] = float(value)
    refit = {
        "beta": res.beta,
        "sd": sd_full,
        "converged": res.converged,
    }
    report = _echo(opt)
    report.update(
        {
            "n": y.shape[0],
            "p": y.shape[1],
            "weight_names": list(names),
            "support": list(res.support),
            "ebic": res.ebic,
            "trace": [
                {"support": list(s), "ebic": val} for s, val in res.trace
            ],
            "refit": refit,
        }
    )
    io.write_json(opt["out"], report)
    _print_report(report, opt["out"])
    return EXIT_OK


def _cmd_lrtest(args) -> int:
    spec = {
        "data": ...,
        "weights": ...,
        "link1": ...,
        "link2": ...,
        "alpha": 0.05,
        "out": ...,
    }
    opt = _resolve(args, spec)
    _, y = io.read_matrix_csv(opt["data"])
    ws, names = io.load_weightset(opt["weights"])
    res = lr_test(y, ws, opt["link1"], opt["link2"], alpha=float(opt["alpha"]))

    report = _echo(opt)
    report.update(
        {
            "n": res.n,
            "p": res.p,
            "weight_names": list(names),
            "t_lr": res.t_lr,
            "z": res.z,
            "sigma_hat": res.sigma_hat,
            "z_alpha": res.z_alpha,
            "klic_gap": res.klic_gap,
            "decision": res.decision,
            "loglik1": res.fit1.loglik,
            "loglik2": res.fit2.loglik,
            "converged1": res.fit1.converged,
            "converged2": res.fit2.converged,
        }
    )
    io.write_json(opt["out"], report)
    _print_report(report, opt["out"])
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.config is None:
        raise InputError("missing required option --config")
    if args.out is None:
        raise InputError("missing required option --out")
    cfg_dict = io.load_config(args.config)
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg = SimConfig.from_dict(cfg_dict)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    runner = run_part1 if args.part == 1 else run_part2
    report, raw = runner(cfg, jobs=jobs)

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    io.write_json(report_path, report)
    io.write_rows_csv(os.path.join(args.out, "raw.csv"), raw)
    sys.stdout.write(render_report(report, "table"))
    sys.stderr.write(f"wrote {report_path}\n")
    return EXIT_OK


def _cmd_portfolio(args) -> int:
    spec = {
        "returns": ...,
        "covariates": ...,
        "link": "identity",
        "estimator": "qmle",
        "select": False,
        "gamma": 0.5,
        "rf": "0",
        "scale": 10.0,
        "target_density": 0.10,
        "demean": True,
        "out": ...,
    }
    opt = _resolve(args, spec)
    panel = io.read_returns_csv(opt["returns"])
    covs = io.read_covariates_dir(opt["covariates"])
    try:
        rf = float(opt["rf"])
    except (TypeError, ValueError):
        rf = io.read_series_csv(opt["rf"])
    res = backtest(
        panel,
        covs,
        link=opt["link"],
        estimator=opt["estimator"],
        select=bool(opt["select"]),
        gamma=float(opt["gamma"]),
        rf=rf,
        scale=float(opt["scale"]),
        target_density=float(opt["target_density"]),
        demean=bool(opt["demean"]),
    )

    report = _echo(opt)
    report.update(
        {
            "p": panel.returns.shape[1],
            "periods": list(res.fit_dates),
            "weights": res.weights,
            "realized": res.realized,
            "mean": res.mean,
            "sd": res.sd,
            "sharpe": res.sharpe,
            "rf": res.rf,
            "selected_supports": (
                [list(s) for s in res.selected_supports]
                if bool(opt["select"])
                else None
            ),
        }
    )
    io.write_json(opt["out"], report)
    _print_report(report, opt["out"])
    return EXIT_OK


def _cmd_weights(args) -> int:
    spec = {"weights": ..., "out": ...}
    opt = _resolve(args, spec)
    ws, names = io.load_weightset(opt["weights"])
    os.makedirs(opt["out"], exist_ok=True)
    densities = {}
    for idx, name in enumerate(names, start=1):
        w = ws.matrix(idx)
        io.write_weight_csv(os.path.join(opt["out"], f"{name}.csv"), w)
        densities[name] = density(w)
    manifest = _echo(opt)
    manifest.update({"p": ws.p, "k": ws.k, "names": list(names), "density": densities})
    manifest_path = os.path.join(opt["out"], "weights.json")
    io.write_json(manifest_path, manifest)
    sys.stdout.write(render_report(manifest, "table"))
    sys.stderr.write(f"wrote {manifest_path}\n")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmgl",
        description=(
            "Covariance models with linear structure: estimation, subset "
            "selection, link tests, simulation studies, and a minimum-"
            "variance portfolio backtest."
        ),
    )
    parser.add_argument("--version", action="version", version=f"cmgl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="TOML/JSON file supplying option defaults")
        sp.set_defaults(run=func)
        return sp

    sp = add("fit", _cmd_fit, "fit one model to a data CSV")
    sp.add_argument("--data", help="CSV of observations, one row per sample")
    sp.add_argument("--weights", help="weight-matrix directory or covariate config")
    sp.add_argument("--link", help="identity, exponential, square, inverse, or sar")
    sp.add_argument("--estimator", choices=["qmle", "ols"])
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--out", help="output JSON path")

    sp = add("select", _cmd_select, "EBIC subset selection over weight matrices")
    sp.add_argument("--data")
    sp.add_argument("--weights")
    sp.add_argument("--link")
    sp.add_argument("--estimator", choices=["qmle", "ols"])
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--method", choices=["backward", "exhaustive"])
    sp.add_argument("--out")

    sp = add("lrtest", _cmd_lrtest, "quasi-likelihood ratio test of two links")
    sp.add_argument("--data")
    sp.add_argument("--weights")
    sp.add_argument("--link1")
    sp.add_argument("--link2")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--out")

    sp = add("simulate", _cmd_simulate, "run a Monte Carlo study")
    sp.add_argument("--part", type=int, choices=[1, 2], required=True)
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
    sp.add_argument("--out", help="output directory")

    sp = add("portfolio", _cmd_portfolio, "minimum-variance portfolio backtest")
    sp.add_argument("--returns", help="CSV with a period-label column then assets")
    sp.add_argument("--covariates", help="directory with one covariate CSV per period")
    sp.add_argument("--link")
    sp.add_argument("--estimator", choices=["qmle", "ols"])
    sp.add_argument("--select", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--rf", help="risk-free rate: a number or a CSV series")
    sp.add_argument("--scale", type=float)
    sp.add_argument("--target-density", dest="target_density", type=float)
    sp.add_argument("--demean", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--out")

    sp = add("weights", _cmd_weights, "build weight matrices and export dense CSVs")
    sp.add_argument("--weights", help="weight-matrix directory or covariate config")
    sp.add_argument("--out", help="output directory")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.monotonic()
    try:
        status = args.run(args)
    except InputError as exc:
        sys.stderr.write(f"cmgl: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"cmgl: error: {exc}\n")
        return EXIT_USAGE
    except CmglError as exc:
        sys.stderr.write(f"cmgl: {type(exc).__name__}: {exc}\n")
        return EXIT_COMPUTE
    sys.stderr.write(f"runtime: {time.monotonic() - start:.2f}s\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
