"""Command-line harness.

Subcommands: ``catalog`` prints the scenario table, ``simulate`` writes
synthetic trial CSVs with truth sidecars, ``fit`` runs the sampler on one
series, ``replicate`` runs the generate-fit-compare loop for a scenario,
``meta`` pools several series hierarchically, and ``ppc`` reruns the
posterior predictive check for one series.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .gibbs import McmcConfig, empirical_intercept_means
from .harness import (
    RHAT_THRESHOLD,
    default_workers,
    fit_report,
    replicate_scenario,
    replication_csv_row,
)
from .io import ingest_csv, load_hyperpriors, load_priors, write_csv, write_json
from .meta import participant_dd_draws, pooled_estimands, run_meta_chain
from .model import ModelSpec, summarize_estimand
from .simulate import gen_trial, get_scenario, layout_for, scenario_catalog

DESK_SCALE = {"burn_in": 2000, "draws": 2000}


def _add_mcmc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chains", type=int, default=3)
    parser.add_argument("--burn-in", type=int, default=15_000)
    parser.add_argument("--draws", type=int, default=5_000)
    parser.add_argument("--thin", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--desk-scale", action="store_true",
        help="short-run settings (2000 burn-in / 2000 draws) for pipelines",
    )


def _mcmc_config(args: argparse.Namespace) -> McmcConfig:
    burn_in, draws = args.burn_in, args.draws
    if args.desk_scale:
        burn_in, draws = DESK_SCALE["burn_in"], DESK_SCALE["draws"]
    return McmcConfig(
        chains=args.chains, burn_in=burn_in, draws=draws,
        seed=args.seed, thin=args.thin,
    )


def _print_table(rows: list[list[str]], out=None) -> None:
    out = out if out is not None else sys.stdout
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip(), file=out)


def cmd_catalog(args: argparse.Namespace) -> int:
    rows = [["id", "L", "rho", "rho_u", "alpha0", "alpha1", "beta0", "beta1",
             "beta2", "model", "IV", "log_tau", "log_theta"]]
    for s in scenario_catalog():
        rows.append([
            s.id, str(s.duration), f"{s.rho:.1f}", f"{s.rho_u:.1f}",
            f"{s.alpha0:.2f}", f"{s.alpha1:.2f}", f"{s.beta0:.2f}",
            f"{s.beta1:.2f}", f"{s.beta2:.2f}", s.variant,
            s.iv_strength_label, f"{s.true_log_tau:.2f}", f"{s.true_log_theta:.2f}",
        ])
    _print_table(rows)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = get_scenario(args.scenario)
    layout = layout_for(scenario.duration, args.days_per_period)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scenario": asdict(scenario),
        "days_per_period": args.days_per_period,
        "seed": args.seed,
        "replicates": args.replicates,
        "files": [],
    }
    for rep in range(args.replicates):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(rep, 0)))
        series, truth = gen_trial(scenario, layout, rng, participant_id=f"rep{rep}")
        csv_name = f"{scenario.id}_rep{rep:04d}.csv"
        truth_name = f"{scenario.id}_rep{rep:04d}.truth.json"
        write_csv(series, out_dir / csv_name)
        write_json(
            {
                **truth.as_dict(),
                "scenario": asdict(scenario),
                "paper_truth": {
                    "log_tau": scenario.true_log_tau,
                    "log_theta": scenario.true_log_theta,
                },
            },
            out_dir / truth_name,
        )
        manifest["files"].append({
            "replicate": rep,
            "csv": csv_name,
            "truth": truth_name,
            "spawn_key": [rep, 0],
        })
    write_json(manifest, out_dir / "manifest.json")
    print(f"wrote {args.replicates} replicate(s) of {scenario.id} to {out_dir}")
    return 0


def _fit_common(args: argparse.Namespace):
    data = ingest_csv(args.data)
    spec = ModelSpec(variant=args.model, covariate_dim=data.covariate_dim)
    intercepts = {}
    if args.empirical_intercepts:
        a0, b0 = empirical_intercept_means(data)
        intercepts = {"alpha0_mean": a0, "beta0_mean": b0}
    priors = load_priors(args.priors, covariate_dim=data.covariate_dim, **intercepts)
    return data, spec, priors


def cmd_fit(args: argparse.Namespace) -> int:
    data, spec, priors = _fit_common(args)
    cfg = _mcmc_config(args)
    report, _ = fit_report(
        data, spec, priors, cfg, ppc=not args.no_ppc, ppc_seed=args.seed
    )
    if args.out:
        write_json(report, args.out)
    rows = [["estimand", "mean log-OR", "95% CrI", "p(OR>1)"]]
    for name, e in report["estimands"].items():
        rows.append([
            name, f"{e['posterior_mean_log_or']:.3f}",
            f"[{e['cri_low']:.3f}, {e['cri_high']:.3f}]", f"{e['prob_or_gt_1']:.3f}",
        ])
    _print_table(rows)
    if report["rhat_max"] is not None:
        print(f"max R-hat: {report['rhat_max']:.4f}")
    if report["degenerate_outcome"]:
        print("warning: outcome sequence is constant; estimates are prior-driven")
    if report["converged"] is False and not args.warn_only:
        print(f"error: R-hat >= {RHAT_THRESHOLD}; rerun longer or pass --warn-only",
              file=sys.stderr)
        return 1
    return 0


def cmd_ppc(args: argparse.Namespace) -> int:
    data, spec, priors = _fit_common(args)
    cfg = _mcmc_config(args)
    report, _ = fit_report(data, spec, priors, cfg, ppc=True, ppc_seed=args.seed)
    payload = {"model": spec.variant, "ppc": report["ppc"]}
    if args.out:
        write_json(payload, args.out)
    rows = [["statistic", "Bayesian p"]]
    for stat, key in (("deviance", "p_deviance"), ("num_events", "p_events"),
                      ("num_changes", "p_changes")):
        rows.append([stat, f"{report['ppc'][key]:.3f}"])
    _print_table(rows)
    return 0


def cmd_replicate(args: argparse.Namespace) -> int:
    scenario = get_scenario(args.scenario)
    cfg = _mcmc_config(args)
    report = replicate_scenario(
        scenario,
        replicates=args.replicates,
        cfg=cfg,
        workers=args.workers,
        oracle_paths=args.oracle_paths,
        days_per_period=args.days_per_period,
    )
    if not args.keep_replicates:
        report = {k: v for k, v in report.items() if k != "per_replicate"}
    if args.out:
        write_json(report, args.out)
    if args.csv:
        Path(args.csv).write_text(replication_csv_row(report))
    rows = [["method", "mean", "bias%", "coverage", "truth"]]
    for name, m in report["methods"].items():
        if not m.get("n"):
            rows.append([name, "-", "-", "-", "-"])
            continue
        rows.append([
            name, f"{m['mean_estimate']:.3f}", f"{m['bias_percent']:.2f}",
            f"{m['coverage']:.3f}", f"{m['truth']:.3f}",
        ])
    _print_table(rows)
    if report["failures"]:
        print(f"{report['failures']} replicate(s) failed")
    return 0


def cmd_meta(args: argparse.Namespace) -> int:
    data_dir = Path(args.data_dir)
    files = sorted(data_dir.glob("*.csv"))
    if not files:
        print(f"error: no CSV files in {data_dir}", file=sys.stderr)
        return 1
    series = [ingest_csv(f) for f in files]
    dims = {s.covariate_dim for s in series}
    if len(dims) > 1:
        print("error: participants have mixed covariate dimensions", file=sys.stderr)
        return 1
    spec = ModelSpec(variant=args.model, covariate_dim=dims.pop())
    hp = load_hyperpriors(args.hyperpriors, covariate_dim=spec.covariate_dim)
    cfg = _mcmc_config(args)
    md = run_meta_chain(series, spec, hp, cfg)
    dd, ud, itt = pooled_estimands(md)
    participants = []
    for i, s in enumerate(series):
        summary = summarize_estimand(participant_dd_draws(md, i), name="DD")
        participants.append({"participant_id": s.participant_id, "DD": summary.as_dict()})
    payload = {
        "model": spec.variant,
        "n_participants": md.n_participants,
        "mcmc": {"chains": cfg.chains, "burn_in": cfg.burn_in, "draws": cfg.draws,
                 "thin": cfg.thin, "seed": cfg.seed},
        "pooled": {"DD": dd.as_dict(), "UD": ud.as_dict(), "ITT": itt.as_dict()},
        "participants": participants,
    }
    if args.out:
        write_json(payload, args.out)
    rows = [["pooled estimand", "mean log-OR", "95% CrI", "p(OR>1)"]]
    for e in (dd, ud, itt):
        rows.append([
            e.name, f"{e.posterior_mean_log_or:.3f}",
            f"[{e.cri_low:.3f}, {e.cri_high:.3f}]", f"{e.prob_or_gt_1:.3f}",
        ])
    _print_table(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nof1iv",
        description="Bayesian IV analysis of N-of-1 crossover trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("catalog", help="print the simulation scenario table")

    p = sub.add_parser("simulate", help="write synthetic trial CSVs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--days-per-period", type=int, default=5)

    for name in ("fit", "ppc"):
        p = sub.add_parser(name, help=f"{name} a single trial CSV")
        p.add_argument("--data", required=True)
        p.add_argument("--model", choices=("NCO", "CO"), default="NCO")
        p.add_argument("--priors", default=None, help="JSON prior config")
        p.add_argument("--empirical-intercepts", action="store_true",
                       help="center intercept priors on observed off-day rates")
        p.add_argument("--out", default=None)
        _add_mcmc_flags(p)
        if name == "fit":
            p.add_argument("--no-ppc", action="store_true")
            p.add_argument("--warn-only", action="store_true",
                           help="do not fail on R-hat above the threshold")

    p = sub.add_parser("replicate", help="bias/coverage study for one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--workers", type=int, default=default_workers(),
                   help="parallel replicate processes (env NOF1IV_WORKERS)")
    p.add_argument("--oracle-paths", type=int, default=100_000)
    p.add_argument("--days-per-period", type=int, default=5)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--keep-replicates", action="store_true",
                   help="include per-replicate results in the JSON report")
    _add_mcmc_flags(p)

    p = sub.add_parser("meta", help="hierarchical pooling of several CSVs")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--model", choices=("NCO", "CO"), default="NCO")
    p.add_argument("--hyperpriors", default=None, help="JSON hyperprior config")
    p.add_argument("--out", default=None)
    _add_mcmc_flags(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "catalog": cmd_catalog,
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "ppc": cmd_ppc,
        "replicate": cmd_replicate,
        "meta": cmd_meta,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
