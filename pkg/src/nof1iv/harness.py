"""Fit-report assembly and the scenario replication engine.

All randomness descends from one 64-bit root seed through spawn keys:
``(replicate, 0)`` seeds data generation and ``(replicate, 1)`` derives the
per-replicate MCMC seed (whose chains split further by chain index).
Replicates are therefore independent of worker scheduling and reports are
byte-stable.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from .comparators import EstimationError, at_log_or, itt_log_or, pp_log_or
from .diagnostics import gelman_rubin_table, posterior_predictive_check
from .gibbs import McmcConfig, PosteriorDraws, PriorSpec, run_chains
from .model import ModelSpec, TrialSeries, summarize_estimand
from .simulate import ScenarioSpec, gen_trial, layout_for, true_estimand_oracle

__all__ = [
    "RHAT_THRESHOLD",
    "default_workers",
    "fit_report",
    "replicate_scenario",
    "replication_csv_row",
]

RHAT_THRESHOLD = 1.01

_ESTIMAND_KEYS = {"DD": "log_or_dd", "UD": "log_or_ud", "ITT": "log_or_itt"}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("NOF1IV_WORKERS", "1")))
    except ValueError:
        return 1


def _param_summary(values: np.ndarray) -> dict:
    lo, mid, hi = np.quantile(values, (0.025, 0.5, 0.975))
    return {
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "q2.5": float(lo),
        "q50": float(mid),
        "q97.5": float(hi),
    }


def fit_report(
    data: TrialSeries,
    spec: ModelSpec,
    priors: PriorSpec,
    cfg: McmcConfig,
    ppc: bool = True,
    ppc_seed: int = 0,
) -> tuple[dict, PosteriorDraws]:
    """Fit one series; returns the machine-readable report plus the draws."""
    draws = run_chains(data, spec, priors, cfg)
    rhat = gelman_rubin_table(draws) if cfg.chains >= 2 else {}
    parameters = {}
    for name in draws.parameter_names():
        parameters[name] = _param_summary(draws.flat(name))
        if rhat:
            parameters[name]["rhat"] = rhat[name]
    estimands = {
        name: summarize_estimand(draws.flat(key), name=name).as_dict()
        for name, key in _ESTIMAND_KEYS.items()
    }
    degenerate = bool(np.nansum(data.y) in (0.0, float(np.sum(~np.isnan(data.y)))))
    report = {
        "model": spec.variant,
        "participant_id": data.participant_id,
        "layout": {"periods": data.layout.periods, "days_per_period": data.layout.days_per_period},
        "mcmc": {
            "chains": cfg.chains,
            "burn_in": cfg.burn_in,
            "draws": cfg.draws,
            "thin": cfg.thin,
            "seed": cfg.seed,
        },
        "parameters": parameters,
        "estimands": estimands,
        "rhat_max": max(rhat.values()) if rhat else None,
        "converged": bool(rhat and max(rhat.values()) < RHAT_THRESHOLD) if rhat else None,
        "degenerate_outcome": degenerate,
    }
    if ppc:
        rng = np.random.default_rng(np.random.SeedSequence(ppc_seed, spawn_key=(2,)))
        report["ppc"] = posterior_predictive_check(draws, data, spec, rng).as_dict()
    else:
        report["ppc"] = None
    return report, draws


def _mcmc_seed(root_seed: int, replicate: int) -> int:
    ss = np.random.SeedSequence(root_seed, spawn_key=(replicate, 1))
    return int(ss.generate_state(1, np.uint64)[0])


def _bayes_entry(values: np.ndarray, truth: float) -> dict:
    lo, hi = np.quantile(values, (0.025, 0.975))
    return {
        "estimate": float(values.mean()),
        "ci_low": float(lo),
        "ci_high": float(hi),
        "covered": bool(lo <= truth <= hi),
    }


def _freq_entry(est, truth: float) -> dict:
    return {
        "estimate": est.log_or,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "covered": bool(est.covers(truth)),
    }


def _replicate_one(task: tuple) -> tuple[int, dict]:
    (scenario_dict, cfg_dict, root_seed, replicate, truths, days_per_period) = task
    scenario = ScenarioSpec(**scenario_dict)
    cfg = McmcConfig(**{**cfg_dict, "seed": _mcmc_seed(root_seed, replicate)})
    layout = layout_for(scenario.duration, days_per_period)
    data_rng = np.random.default_rng(
        np.random.SeedSequence(root_seed, spawn_key=(replicate, 0))
    )
    series, _ = gen_trial(scenario, layout, data_rng, participant_id=f"rep{replicate}")
    spec = scenario.model_spec
    priors = PriorSpec.defaults()

    result: dict = {"replicate": replicate}
    try:
        draws = run_chains(series, spec, priors, cfg)
    except Exception as err:  # a failed fit is recorded, not fatal
        result["error"] = f"{type(err).__name__}: {err}"
        return replicate, result

    result["IV_DD"] = _bayes_entry(draws.flat("log_or_dd"), truths["dd"])
    result["IV_UD"] = _bayes_entry(draws.flat("log_or_ud"), truths["ud"])
    result["ITT_model"] = _bayes_entry(draws.flat("log_or_itt"), truths["itt"])
    for name, fn in (("ITT_freq", itt_log_or), ("AT", at_log_or), ("PP", pp_log_or)):
        try:
            result[name] = _freq_entry(fn(series), truths["dd"])
        except EstimationError as err:
            result[name] = {"error": str(err)}
    return replicate, result


def replicate_scenario(
    scenario: ScenarioSpec,
    replicates: int,
    cfg: McmcConfig,
    workers: int | None = None,
    oracle_paths: int = 100_000,
    days_per_period: int = 5,
) -> dict:
    """Generate-fit-compare over replicates and aggregate bias and coverage.

    Bias for the IV_DD estimand and for the frequentist comparators is
    measured against the oracle continuous-exposure truth; IV_UD and the
    model ITT are measured against their own oracle truths.  Coverage is the
    fraction of replicates whose 95% interval contains that truth.
    """
    oracle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xFACADE,)))
    dd, ud, itt = true_estimand_oracle(
        scenario, mc_paths=oracle_paths, rng=oracle_rng,
        layout=layout_for(scenario.duration, days_per_period),
    )
    truths = {"dd": dd, "ud": ud, "itt": itt}

    cfg_dict = {
        "chains": cfg.chains, "burn_in": cfg.burn_in, "draws": cfg.draws,
        "thin": cfg.thin, "behaviour_mc": cfg.behaviour_mc,
    }
    tasks = [
        (asdict(scenario), cfg_dict, cfg.seed, r, truths, days_per_period)
        for r in range(replicates)
    ]
    if workers is None:
        workers = default_workers()
    if workers <= 1:
        outcomes = [_replicate_one(t) for t in tasks]
    else:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            outcomes = list(pool.map(_replicate_one, tasks))
    outcomes.sort(key=lambda pair: pair[0])
    results = [res for _, res in outcomes]

    method_truth = {
        "IV_DD": dd, "IV_UD": ud, "ITT_model": itt,
        "ITT_freq": dd, "AT": dd, "PP": dd,
    }
    methods = {}
    for name, truth in method_truth.items():
        ests = [r[name]["estimate"] for r in results if name in r and "error" not in r[name]]
        covs = [r[name]["covered"] for r in results if name in r and "error" not in r[name]]
        if not ests:
            methods[name] = {"n": 0}
            continue
        mean_est = float(np.mean(ests))
        methods[name] = {
            "n": len(ests),
            "mean_estimate": mean_est,
            "bias_percent": float((mean_est - truth) / truth * 100.0) if truth != 0 else math.nan,
            "coverage": float(np.mean(covs)),
            "truth": truth,
        }
    failures = sum(1 for r in results if "error" in r)
    return {
        "scenario": asdict(scenario),
        "days_per_period": days_per_period,
        "replicates": replicates,
        "failures": failures,
        "seed": cfg.seed,
        "mcmc": cfg_dict,
        "truth": {
            "oracle": truths,
            "paper": {
                "log_tau": scenario.true_log_tau,
                "log_theta": scenario.true_log_theta,
            },
        },
        "methods": methods,
        "per_replicate": results,
    }


def replication_csv_row(report: dict) -> str:
    """One CSV row in the bias/coverage table layout of the study report."""
    s = report["scenario"]
    cols = [s["id"], str(s["duration"]), f"{s['rho']:.1f}"]
    header = ["scenario", "duration", "rho"]
    for name in ("IV_DD", "IV_UD", "ITT_model", "ITT_freq", "AT", "PP"):
        m = report["methods"].get(name, {})
        header += [f"{name}_mean", f"{name}_bias_pct", f"{name}_coverage"]
        if m.get("n"):
            cols += [
                f"{m['mean_estimate']:.4f}",
                f"{m['bias_percent']:.2f}",
                f"{m['coverage']:.3f}",
            ]
        else:
            cols += ["", "", ""]
    return ",".join(header) + "\n" + ",".join(cols) + "\n"
