"""Command-line front end.

Every command takes a JSON config file, validates it against a strict
schema (unknown keys rejected), writes the fully resolved configuration
next to its outputs, and emits a machine-readable result JSON plus
plot-ready CSVs.  Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._threads import single_thread_blas
from .core import (Campaign, InitialConditionKind, NoiseModel, PriorBox,
                   ThetaParams, WallGeometry, read_campaign_csv,
                   validate_campaign, write_campaign_csv)
from .design import DesignSetup, detect_cycles, gain_vs_duration, rank_cycles
from .inference import (McmcConfig, McmcError, OptimizationError, aic,
                        rw_metropolis, summarize_marginals)
from .likelihood import NumericalError
from .pipeline import (InferenceSetup, boundary_prior, fit_laplace, fit_map,
                       grid_for, make_log_posterior, noise_report, smooth_series,
                       window_inference)
from .preprocess import PreprocessConfig, average_campaign, estimate_noise_sd, select_lag
from .robustness import SubsampleConfig, run_study
from .synthetic import (ExternalProfile, InternalProfile, NoiseSpec,
                        ScenarioSpec, SinusoidComponent, simulate_campaign)
from .forward import solve_forward

COMMANDS = ("simulate", "preprocess", "fit", "laplace", "mcmc", "aic-compare",
            "infogain", "cycles", "robustness", "predict")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ----------------------------------------------------------------------
# configuration schema and defaults

def default_config() -> dict:
    return {
        "paths": {"input": None, "outdir": "."},
        "geometry": {"thickness_m": 0.215},
        "grid": {"m_cells": 60, "dt_s": 60.0},
        "priors": {"r": [0.17, 0.36], "rho_c": [234000.0, 431000.0],
                   "tau0": [5.0, 25.0], "tau1": None},
        "noise": {"sigma_flux_int": 0.66, "sigma_flux_ext": 0.66,
                  "sigma_temp_prior": 0.01, "estimate_from_data": False},
        "preprocessing": {"lag": None, "lag_candidates": list(range(2, 13)),
                          "lambda_grid": {"min": 1e-10, "max": 100.0, "num": 60},
                          "acf_lags": 50, "ljung_box_lags": 20},
        "inference": {"likelihood": "marginal", "ic_kind": "piecewise_linear",
                      "bc_source": "smoothed", "ic_endpoints": "smoothed",
                      "n_starts": 8, "seed": 0, "max_iter": 200,
                      "obs_decimate": 1, "obs_limit": None,
                      "mcmc": {"n_iter": 101000, "burn_in": 1000, "thin": 20,
                               "proposal_frac": 0.02, "proposal_scales": None,
                               "pilot_adapt": False, "seed": 0,
                               "start": "map"}},
        "design": {"checkpoints": [], "n_checkpoints": 5, "min_window": 100,
                   "min_separation_min": 600.0, "min_prominence_c": 1.0},
        "robustness": {"ell": 5, "b": 4, "n_repeats": 100, "seed": 0},
        "scenario": {"r_value": 0.31, "rho_c": 320000.0, "tau0": 15.0,
                     "tau1": None, "ic_kind": "piecewise_linear",
                     "internal": {"base": 20.0, "drift_per_day": 0.0},
                     "external": {"mean": 10.0,
                                  "components": [{"amplitude": 10.0,
                                                  "period_min": 1440.0,
                                                  "phase": 0.0}]},
                     "noise": {"temp_sd": 0.1, "flux_sd": 0.66, "ar1": 0.0},
                     "duration_min": 7200, "sim_refine": 4, "seed": 0},
        "predict": {"theta": None, "fit_artifact": None, "n_draws": 200,
                    "seed": 0},
    }


def _num(**kw) -> dict:
    return {"type": ["number", "integer"], **kw}


def _interval() -> dict:
    return {"type": "array", "items": _num(), "minItems": 2, "maxItems": 2}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "paths": {"type": "object", "additionalProperties": False,
                  "properties": {"input": {"type": ["string", "null"]},
                                 "outdir": {"type": "string"}}},
        "geometry": {"type": "object", "additionalProperties": False,
                     "properties": {"thickness_m": _num(exclusiveMinimum=0)}},
        "grid": {"type": "object", "additionalProperties": False,
                 "properties": {"m_cells": {"type": "integer", "minimum": 3},
                                "dt_s": _num(exclusiveMinimum=0)}},
        "priors": {"type": "object", "additionalProperties": False,
                   "properties": {"r": _interval(), "rho_c": _interval(),
                                  "tau0": _interval(),
                                  "tau1": {"oneOf": [_interval(), {"type": "null"}]}}},
        "noise": {"type": "object", "additionalProperties": False,
                  "properties": {"sigma_flux_int": _num(exclusiveMinimum=0),
                                 "sigma_flux_ext": _num(exclusiveMinimum=0),
                                 "sigma_temp_prior": _num(exclusiveMinimum=0),
                                 "estimate_from_data": {"type": "boolean"}}},
        "preprocessing": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "lag": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
                "lag_candidates": {"type": "array",
                                   "items": {"type": "integer", "minimum": 1},
                                   "minItems": 1},
                "lambda_grid": {"type": "object", "additionalProperties": False,
                                "properties": {"min": _num(exclusiveMinimum=0),
                                               "max": _num(exclusiveMinimum=0),
                                               "num": {"type": "integer", "minimum": 1}}},
                "acf_lags": {"type": "integer", "minimum": 1},
                "ljung_box_lags": {"type": "integer", "minimum": 1},
            }},
        "inference": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "likelihood": {"enum": ["marginal", "deterministic"]},
                "ic_kind": {"enum": [k.value for k in InitialConditionKind]},
                "bc_source": {"enum": ["smoothed", "observed"]},
                "ic_endpoints": {"enum": ["smoothed", "observed"]},
                "n_starts": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "max_iter": {"type": "integer", "minimum": 1},
                "obs_decimate": {"type": "integer", "minimum": 1},
                "obs_limit": {"oneOf": [{"type": "integer", "minimum": 2},
                                        {"type": "null"}]},
                "mcmc": {"type": "object", "additionalProperties": False,
                         "properties": {"n_iter": {"type": "integer", "minimum": 1},
                                        "burn_in": {"type": "integer", "minimum": 0},
                                        "thin": {"type": "integer", "minimum": 1},
                                        "proposal_frac": _num(exclusiveMinimum=0),
                                        "proposal_scales": {
                                            "oneOf": [{"type": "array",
                                                       "items": _num(exclusiveMinimum=0)},
                                                      {"type": "null"}]},
                                        "pilot_adapt": {"type": "boolean"},
                                        "seed": {"type": "integer"},
                                        "start": {"enum": ["map", "center"]}}},
            }},
        "design": {"type": "object", "additionalProperties": False,
                   "properties": {"checkpoints": {"type": "array",
                                                  "items": {"type": "integer", "minimum": 2}},
                                  "n_checkpoints": {"type": "integer", "minimum": 1},
                                  "min_window": {"type": "integer", "minimum": 2},
                                  "min_separation_min": _num(exclusiveMinimum=0),
                                  "min_prominence_c": _num(minimum=0)}},
        "robustness": {"type": "object", "additionalProperties": False,
                       "properties": {"ell": {"type": "integer", "minimum": 1},
                                      "b": {"type": "integer", "minimum": 1},
                                      "n_repeats": {"type": "integer", "minimum": 1},
                                      "seed": {"type": "integer"}}},
        "scenario": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "r_value": _num(exclusiveMinimum=0),
                "rho_c": _num(exclusiveMinimum=0),
                "tau0": _num(),
                "tau1": {"oneOf": [_num(), {"type": "null"}]},
                "ic_kind": {"enum": [k.value for k in InitialConditionKind]},
                "internal": {"type": "object", "additionalProperties": False,
                             "properties": {"base": _num(),
                                            "drift_per_day": _num()}},
                "external": {"type": "object", "additionalProperties": False,
                             "properties": {"mean": _num(),
                                            "components": {
                                                "type": "array",
                                                "items": {"type": "object",
                                                          "additionalProperties": False,
                                                          "properties": {
                                                              "amplitude": _num(),
                                                              "period_min": _num(exclusiveMinimum=0),
                                                              "phase": _num()}}}}},
                "noise": {"type": "object", "additionalProperties": False,
                          "properties": {"temp_sd": _num(minimum=0),
                                         "flux_sd": _num(minimum=0),
                                         "ar1": _num()}},
                "duration_min": {"type": "integer", "minimum": 1},
                "sim_refine": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            }},
        "predict": {"type": "object", "additionalProperties": False,
                    "properties": {"theta": {"oneOf": [{"type": "array",
                                                        "items": _num(),
                                                        "minItems": 3, "maxItems": 4},
                                                       {"type": "null"}]},
                                   "fit_artifact": {"type": ["string", "null"]},
                                   "n_draws": {"type": "integer", "minimum": 2},
                                   "seed": {"type": "integer"}}},
    },
}


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | Path | None, overrides: dict | None = None) -> dict:
    """Defaults <- config file <- CLI overrides, then schema validation."""
    import jsonschema

    merged = default_config()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        merged = _deep_merge(merged, user)
    if overrides:
        merged = _deep_merge(merged, overrides)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(merged), key=lambda e: list(e.path))
    if errors:
        msgs = "; ".join(f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}"
                         for e in errors)
        raise ConfigError(f"config schema violations: {msgs}")
    return merged


# ----------------------------------------------------------------------
# config -> domain objects

def _prior_box(cfg: dict) -> PriorBox:
    pr = cfg["priors"]
    tau1 = tuple(pr["tau1"]) if pr["tau1"] is not None else None
    try:
        return PriorBox(tuple(pr["r"]), tuple(pr["rho_c"]), tuple(pr["tau0"]), tau1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _preprocess_config(cfg: dict) -> PreprocessConfig:
    pp = cfg["preprocessing"]
    lg = pp["lambda_grid"]
    grid = np.logspace(np.log10(lg["min"]), np.log10(lg["max"]), lg["num"])
    return PreprocessConfig(lambda_grid=tuple(float(x) for x in grid),
                            acf_lags=pp["acf_lags"],
                            ljung_box_lags=pp["ljung_box_lags"])


def _noise_model(cfg: dict, campaign: Campaign | None,
                 pre_cfg: PreprocessConfig) -> NoiseModel:
    nz = cfg["noise"]
    si, se = nz["sigma_flux_int"], nz["sigma_flux_ext"]
    if nz["estimate_from_data"]:
        if campaign is None:
            raise ConfigError("noise.estimate_from_data requires an input campaign")
        _, fit_i = smooth_series(campaign.flux_int, pre_cfg)
        _, fit_e = smooth_series(campaign.flux_ext, pre_cfg)
        si = estimate_noise_sd(fit_i.residuals.values)
        se = estimate_noise_sd(fit_e.residuals.values)
    return NoiseModel(sigma_flux_int=float(si), sigma_flux_ext=float(se),
                      sigma_temp_prior=float(nz["sigma_temp_prior"]))


def _inference_setup(cfg: dict, campaign: Campaign | None) -> InferenceSetup:
    inf = cfg["inference"]
    pre = _preprocess_config(cfg)
    return InferenceSetup(
        geometry=WallGeometry(cfg["geometry"]["thickness_m"]),
        m_cells=cfg["grid"]["m_cells"],
        priors=_prior_box(cfg),
        noise=_noise_model(cfg, campaign, pre),
        ic_kind=InitialConditionKind(inf["ic_kind"]),
        likelihood=inf["likelihood"],
        bc_source=inf["bc_source"],
        ic_endpoints=inf["ic_endpoints"],
        n_starts=inf["n_starts"],
        seed=inf["seed"],
        max_iter=inf["max_iter"],
        preprocess=pre,
    )


def _scenario(cfg: dict) -> ScenarioSpec:
    sc = cfg["scenario"]
    theta = ThetaParams(sc["r_value"], sc["rho_c"], sc["tau0"], sc["tau1"])
    comps = tuple(SinusoidComponent(c["amplitude"], c["period_min"], c["phase"])
                  for c in sc["external"]["components"])
    return ScenarioSpec(
        theta_true=theta,
        geometry=WallGeometry(cfg["geometry"]["thickness_m"]),
        internal=InternalProfile(sc["internal"]["base"],
                                 sc["internal"]["drift_per_day"]),
        external=ExternalProfile(sc["external"]["mean"], comps),
        noise=NoiseSpec(sc["noise"]["temp_sd"], sc["noise"]["flux_sd"],
                        sc["noise"]["ar1"]),
        duration_min=sc["duration_min"],
        ic_kind=InitialConditionKind(sc["ic_kind"]),
        base_m_cells=cfg["grid"]["m_cells"],
        base_dt_s=cfg["grid"]["dt_s"],
        sim_refine=sc["sim_refine"],
        seed=sc["seed"],
    )


def _read_input(cfg: dict, stage: str) -> Campaign:
    path = cfg["paths"]["input"]
    if path is None:
        raise ConfigError("paths.input is required for this command")
    p = Path(path)
    if not p.exists():
        raise DataError(f"input file not found: {p}")
    try:
        campaign = read_campaign_csv(p, stage=stage)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    problems = validate_campaign(campaign)
    if problems:
        raise DataError(f"invalid campaign {p}: " + "; ".join(problems))
    return campaign


def _observed_window(campaign: Campaign, cfg: dict) -> Campaign:
    inf = cfg["inference"]
    out = campaign.decimate(inf["obs_decimate"])
    limit = inf["obs_limit"]
    if limit is not None:
        if limit > len(out):
            raise ConfigError(f"obs_limit {limit} exceeds available samples {len(out)}")
        out = out.slice(0, limit)
    return out


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["paths"]["outdir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (int, float, np.floating))
                        and not isinstance(x, bool) else x for x in row])


def _theta_dict(theta: ThetaParams) -> dict:
    d = {"R": theta.r_value, "rhoC": theta.rho_c, "tau0": theta.tau0}
    if theta.tau1 is not None:
        d["tau1"] = theta.tau1
    return d


# ----------------------------------------------------------------------
# commands

def cmd_simulate(cfg: dict, outdir: Path) -> dict:
    spec = _scenario(cfg)
    raw, truth = simulate_campaign(spec)
    write_campaign_csv(raw, outdir / "raw.csv")
    write_campaign_csv(truth, outdir / "truth.csv")
    spec_payload = cfg["scenario"] | {"geometry": cfg["geometry"],
                                      "grid": cfg["grid"]}
    _write_json(outdir / "scenario.json", spec_payload)
    return {"samples": len(raw), "raw_csv": str(outdir / "raw.csv"),
            "truth_csv": str(outdir / "truth.csv"),
            "theta_true": _theta_dict(spec.theta_true)}


def cmd_preprocess(cfg: dict, outdir: Path) -> dict:
    raw = _read_input(cfg, stage="raw")
    pre = _preprocess_config(cfg)
    pp = cfg["preprocessing"]
    lag = pp["lag"]
    if lag is None:
        with single_thread_blas():
            lag = select_lag(raw, pp["lag_candidates"], pre)
    averaged = average_campaign(raw, lag)
    write_campaign_csv(averaged, outdir / "averaged.csv")
    report = noise_report(averaged, pre)
    report["lag"] = lag
    report["n_raw"] = len(raw)
    report["n_averaged"] = len(averaged)
    _write_json(outdir / "noise_report.json", report)
    return {"lag": lag, "n_raw": len(raw), "n_averaged": len(averaged),
            "averaged_csv": str(outdir / "averaged.csv"),
            "noise_report": str(outdir / "noise_report.json")}


def cmd_fit(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    theta, value = fit_map(campaign, setup)
    payload = {"theta_hat": _theta_dict(theta), "log_posterior": value,
               "likelihood": setup.likelihood, "n_obs": len(campaign),
               "noise": asdict(setup.noise)}
    _write_json(outdir / "fit.json", payload)
    return payload


def cmd_laplace(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    approx = fit_laplace(campaign, setup)
    payload = approx.to_dict()
    payload["summaries"] = {k: v.to_dict() for k, v in
                            summarize_marginals(approx).items()}
    payload["n_obs"] = len(campaign)
    _write_json(outdir / "laplace.json", payload)
    return {"map": payload["map"],
            "posterior_sd": {k: v["sd"] for k, v in payload["summaries"].items()},
            "log_posterior_at_map": payload["log_posterior_at_map"]}


def cmd_mcmc(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    mc = cfg["inference"]["mcmc"]
    if mc["start"] == "map":
        theta0, _ = fit_map(campaign, setup)
    else:
        theta0 = setup.priors.center()
    logpost = make_log_posterior(campaign, setup)
    mcfg = McmcConfig(n_iter=mc["n_iter"], burn_in=mc["burn_in"], thin=mc["thin"],
                      proposal_scales=(tuple(mc["proposal_scales"])
                                       if mc["proposal_scales"] else None),
                      proposal_frac=mc["proposal_frac"],
                      pilot_adapt=mc["pilot_adapt"], seed=mc["seed"])
    chain = rw_metropolis(logpost, theta0, setup.priors, mcfg)
    names = list(chain.param_names)
    _write_csv(outdir / "chain.csv", ["iter"] + names + ["log_post"],
               ([i] + list(row) + [lp] for i, (row, lp) in
                enumerate(zip(chain.samples, chain.log_posts))))
    summaries = {k: v.to_dict() for k, v in summarize_marginals(chain).items()}
    payload = {"acceptance_rate": chain.acceptance_rate,
               "n_kept": len(chain), "start": _theta_dict(theta0),
               "summaries": summaries, "chain_csv": str(outdir / "chain.csv")}
    _write_json(outdir / "mcmc.json", payload)
    return {"acceptance_rate": chain.acceptance_rate, "n_kept": len(chain),
            "posterior_sd": {k: summaries[k]["sd"] for k in names}}


def cmd_aic_compare(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    rows = []
    for kind in InitialConditionKind:
        n_params = 4 if kind is InitialConditionKind.CUBIC else 3
        theta, value = fit_map(campaign, setup, ic_kind=kind)
        # under the uniform prior the MAP value is loglik - log(volume)
        loglik = value + np.log(setup.priors.volume(n_params))
        rows.append({"ic_kind": kind.value, "theta_hat": _theta_dict(theta),
                     "max_log_lik": loglik, "n_params": n_params,
                     "aic": aic(loglik, n_params)})
    best = min(rows, key=lambda r: r["aic"])
    _write_csv(outdir / "aic.csv",
               ["ic_kind", "R", "rhoC", "tau0", "max_log_lik", "n_params", "aic"],
               ([r["ic_kind"], r["theta_hat"]["R"], r["theta_hat"]["rhoC"],
                 r["theta_hat"]["tau0"], r["max_log_lik"], r["n_params"], r["aic"]]
                for r in rows))
    payload = {"models": rows, "preferred": best["ic_kind"]}
    _write_json(outdir / "aic.json", payload)
    return {"preferred": best["ic_kind"],
            "aic": {r["ic_kind"]: r["aic"] for r in rows}}


def _gain_csv(outdir: Path, name: str, results, campaign: Campaign) -> None:
    t0, dt = campaign.t0, campaign.dt_sample
    rows = []
    for r in results:
        rows.append([t0 + r.setup.start * dt, t0 + r.setup.end * dt,
                     r.setup.label, r.d_kl, r.laplace.map_point.r_value,
                     r.laplace.map_point.rho_c])
    _write_csv(outdir / name,
               ["window_start_min", "window_end_min", "label", "d_kl_nats",
                "map_R", "map_rhoC"], rows)


def cmd_infogain(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    dz = cfg["design"]
    checkpoints = list(dz["checkpoints"])
    if not checkpoints:
        n = len(campaign)
        lo = max(dz["min_window"], n // (dz["n_checkpoints"] + 1))
        checkpoints = sorted(set(np.linspace(lo, n, dz["n_checkpoints"], dtype=int)))
    infer = window_inference(campaign, setup)
    results = gain_vs_duration(checkpoints, infer, setup.priors,
                               min_window=min(dz["min_window"], min(checkpoints)))
    _gain_csv(outdir, "infogain.csv", results, campaign)
    payload = {"checkpoints": [int(c) for c in checkpoints],
               "results": [{"label": r.setup.label, "end": r.setup.end,
                            "d_kl_nats": r.d_kl, "c_trunc": r.c_trunc,
                            "map": _theta_dict(r.laplace.map_point)}
                           for r in results]}
    _write_json(outdir / "infogain.json", payload)
    return {"n_windows": len(results),
            "d_kl": [round(r.d_kl, 4) for r in results]}


def cmd_cycles(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)  # noise estimated on the full record
    campaign = _observed_window(full, cfg)
    dz = cfg["design"]
    with single_thread_blas():
        _, fit = smooth_series(campaign.temp_ext, setup.preprocess)
    windows = detect_cycles(fit.fitted, dz["min_separation_min"],
                            dz["min_prominence_c"])
    usable = [w for w in windows if w.n_samples >= dz["min_window"]]
    infer = window_inference(campaign, setup)
    results = rank_cycles(usable, infer, setup.priors)
    _gain_csv(outdir, "cycles.csv", results, campaign)
    payload = {"windows": [{"start": w.start, "end": w.end, "label": w.label}
                           for w in windows],
               "ranked": [{"label": r.setup.label, "d_kl_nats": r.d_kl,
                           "map": _theta_dict(r.laplace.map_point)}
                          for r in results]}
    _write_json(outdir / "cycles.json", payload)
    return {"n_cycles": len(windows), "ranking": [r.setup.label for r in results]}


def cmd_robustness(cfg: dict, outdir: Path) -> dict:
    raw = _read_input(cfg, stage="raw")
    setup = _inference_setup(cfg, raw)
    rb = cfg["robustness"]
    sub_cfg = SubsampleConfig(ell=rb["ell"], b=rb["b"],
                              n_repeats=rb["n_repeats"], seed=rb["seed"])
    summary = run_study(raw, sub_cfg, setup,
                        obs_decimate=cfg["inference"]["obs_decimate"])
    names = ["R", "rhoC", "tau0", "tau1"][: summary.estimates.shape[1]]
    _write_csv(outdir / "robustness.csv", ["repeat"] + names,
               ([i] + list(row) for i, row in enumerate(summary.estimates)))
    payload = {"config": asdict(sub_cfg), "quantiles": summary.quantiles,
               "n_ok": summary.n_ok, "n_failed": summary.n_failed}
    _write_json(outdir / "robustness.json", payload)
    return {"n_ok": summary.n_ok, "n_failed": summary.n_failed,
            "quantiles": summary.quantiles}


def cmd_predict(cfg: dict, outdir: Path) -> dict:
    full = _read_input(cfg, stage="averaged")
    setup = _inference_setup(cfg, full)
    campaign = _observed_window(full, cfg)
    pd_cfg = cfg["predict"]
    if pd_cfg["theta"] is not None:
        theta = ThetaParams.from_array(pd_cfg["theta"])
    elif pd_cfg["fit_artifact"] is not None:
        art = Path(pd_cfg["fit_artifact"])
        if not art.exists():
            raise DataError(f"fit artifact not found: {art}")
        fit = json.loads(art.read_text())
        th = fit["theta_hat"]
        theta = ThetaParams(th["R"], th["rhoC"], th["tau0"], th.get("tau1"))
    else:
        raise ConfigError("predict needs predict.theta or predict.fit_artifact")

    bprior = boundary_prior(campaign, setup)
    grid = grid_for(campaign, setup.m_cells)
    rng = np.random.default_rng(pd_cfg["seed"])
    n = len(campaign)
    draws_int = np.empty((pd_cfg["n_draws"], n))
    draws_ext = np.empty((pd_cfg["n_draws"], n))
    sp = setup.noise.sigma_temp_prior
    with single_thread_blas():
        for j in range(pd_cfg["n_draws"]):
            ti = bprior.mu_int.values + sp * rng.standard_normal(n)
            te = bprior.mu_ext.values + sp * rng.standard_normal(n)
            fi, fe = solve_forward(theta, setup.geometry, grid, ti, te,
                                   setup.ic_kind)
            draws_int[j] = fi
            draws_ext[j] = fe
    qs_int = np.percentile(draws_int, [2.5, 50.0, 97.5], axis=0)
    qs_ext = np.percentile(draws_ext, [2.5, 50.0, 97.5], axis=0)
    times = campaign.temp_int.times()
    _write_csv(outdir / "predict.csv",
               ["t_min", "flux_int_lo", "flux_int_median", "flux_int_hi",
                "flux_ext_lo", "flux_ext_median", "flux_ext_hi"],
               ([times[i], qs_int[0, i], qs_int[1, i], qs_int[2, i],
                 qs_ext[0, i], qs_ext[1, i], qs_ext[2, i]] for i in range(n)))
    payload = {"theta": _theta_dict(theta), "n_draws": pd_cfg["n_draws"],
               "predict_csv": str(outdir / "predict.csv")}
    _write_json(outdir / "predict.json", payload)
    return payload


COMMAND_FNS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "laplace": cmd_laplace,
    "mcmc": cmd_mcmc,
    "aic-compare": cmd_aic_compare,
    "infogain": cmd_infogain,
    "cycles": cmd_cycles,
    "robustness": cmd_robustness,
    "predict": cmd_predict,
}


def run(command: str, config: dict) -> dict:
    """Execute one subcommand against a resolved config; returns the result
    summary that main() prints as JSON."""
    if command not in COMMAND_FNS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
    outdir = _outdir(config)
    _write_json(outdir / "resolved_config.json", config)
    result = COMMAND_FNS[command](config, outdir)
    _write_json(outdir / "result.json", {"command": command, "ok": True,
                                         "result": result})
    return result


def _error_payload(command: str, exc: Exception) -> dict:
    return {"command": command, "ok": False,
            "error": {"type": type(exc).__name__, "message": str(exc)}}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="wallheat",
        description="Bayesian wall thermal-property estimation from "
                    "temperature and heat-flux records")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file (defaults used when omitted)")
        p.add_argument("--input", type=str, default=None,
                       help="input campaign CSV (overrides paths.input)")
        p.add_argument("--outdir", type=str, default=None,
                       help="output directory (overrides paths.outdir)")
    args = parser.parse_args(argv)

    command = args.command
    try:
        overrides: dict = {"paths": {}}
        if args.input is not None:
            overrides["paths"]["input"] = args.input
        if args.outdir is not None:
            overrides["paths"]["outdir"] = args.outdir
        config = load_config(args.config, overrides)
        result = run(command, config)
    except ConfigError as exc:
        print(json.dumps(_error_payload(command, exc)), file=sys.stderr)
        return 2
    except DataError as exc:
        print(json.dumps(_error_payload(command, exc)), file=sys.stderr)
        return 3
    except (NumericalError, OptimizationError, McmcError, ValueError,
            RuntimeError) as exc:
        print(json.dumps(_error_payload(command, exc)), file=sys.stderr)
        return 4
    print(json.dumps({"command": command, "ok": True, "result": result},
                     indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
