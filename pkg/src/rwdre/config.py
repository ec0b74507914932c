"""Experiment configuration: TOML parsing, validation, object construction.

Keys carry explicit units (seconds, sites, sites_per_second). Validation
collects failures as (field path, message) pairs so the CLI can report all
of them in one pass without simulating anything.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boxes import nu_constraint_ok
from .environments import AsepParams, RateFunction, ValidationError, ZrParams
from .estimators import BallisticityParams, DecouplingParams, EnvironmentSpec
from .walker import RateBoundError, RateModel

EXPERIMENT_KINDS = (
    "simulate-env",
    "walk",
    "estimate-ph",
    "speed-bracket",
    "decoupling",
    "traps",
    "ballisticity",
    "lln",
    "deviation",
)


class ConfigError(ValueError):
    """Configuration failed validation; carries (field, message) pairs."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.failures))


@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)

    def fail(self, path: str, message: str):
        self.failures.append((path, message))

    @property
    def ok(self) -> bool:
        return not self.failures


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _require(cfg: dict, section: str, report: ValidationReport) -> dict:
    if section not in cfg:
        report.fail(section, "missing section")
        return {}
    return cfg[section]


def validate_config(cfg: dict, strict_scales: bool = False) -> ValidationReport:
    """Dry-run validation of every invariant reachable from the config."""
    report = ValidationReport()

    exp = _require(cfg, "experiment", report)
    kind = exp.get("kind")
    if kind not in EXPERIMENT_KINDS:
        report.fail("experiment.kind", f"must be one of {', '.join(EXPERIMENT_KINDS)}")

    env = _require(cfg, "environment", report)
    env_type = env.get("type")
    if env_type not in ("constant", "zeroRange", "asep"):
        report.fail("environment.type", "must be constant, zeroRange or asep")
    if env_type == "zeroRange":
        zr = env.get("zero_range", {})
        try:
            g = RateFunction(
                np.asarray(zr.get("g_values", []), dtype=np.float64),
                float(zr.get("gamma_minus", 0.0)),
                float(zr.get("gamma_plus", 0.0)),
            )
            if float(zr.get("rho", 0.0)) <= 0:
                report.fail("environment.zero_range.rho", "must be positive")
            else:
                ZrParams(g, float(zr["rho"]))
        except (ValidationError, KeyError, TypeError) as exc:
            report.fail("environment.zero_range.g_values", str(exc))
    if env_type == "asep":
        asep = env.get("asep", {})
        try:
            AsepParams(float(asep.get("p", -1.0)), float(asep.get("rho", -1.0)))
        except ValidationError as exc:
            report.fail("environment.asep", str(exc))

    rm = _require(cfg, "rate_model", report)
    if rm:
        alpha = np.asarray(rm.get("alpha", []), dtype=np.float64)
        beta = np.asarray(rm.get("beta", []), dtype=np.float64)
        lam = float(rm.get("lambda_bound", 0.0))
        if alpha.size == 0 or alpha.size != beta.size:
            report.fail("rate_model.alpha", "alpha and beta must be nonempty tables of equal length")
        else:
            total = alpha + beta
            if np.any(total > lam + 1e-12):
                k = int(np.argmax(total > lam + 1e-12))
                report.fail(
                    "rate_model",
                    f"alpha+beta = {total[k]:.6g} exceeds lambda_bound = {lam:.6g} at occupation {k}",
                )
            if lam < 1.0:
                report.fail("rate_model.lambda_bound", "must be at least 1")

    run = _require(cfg, "run", report)
    if run:
        if int(run.get("seed", -1)) < 0:
            report.fail("run.seed", "must be a non-negative integer")
        if int(run.get("workers", 1)) < 1:
            report.fail("run.workers", "must be a positive integer")

    scales = cfg.get("scales")
    if scales is not None:
        nu = float(scales.get("nu", 0.0))
        gamma = float(scales.get("gamma", 0.0))
        if not 0.0 < nu < 1.0:
            report.fail("scales.nu", "must lie in (0, 1)")
        if gamma <= 1.0:
            report.fail("scales.gamma", "must exceed 1")
        elif strict_scales and not nu_constraint_ok(nu, gamma):
            val = 6.0 * (1.0 + nu) ** (3.0 * gamma)
            report.fail("scales.nu", f"nu-constraint violated: 6*(1+nu)^(3*gamma) = {val:.4g} > 7")

    if kind == "decoupling" and "decoupling" in cfg:
        dec = cfg["decoupling"]
        try:
            params = DecouplingParams(
                float(dec["v_circ_sites_per_second"]),
                float(dec["kappa_circ"]),
                float(dec["c_circ"]),
                float(dec["c2"]),
                float(dec["c3"]),
                float(dec["gamma_circ"]),
            )
            s = float(dec["s_seconds"])
            d_v = float(dec["d_v_seconds"])
            for d_h in dec["d_h_sites"]:
                if d_h < params.v_circ * d_v + params.c2 * s + params.c3:
                    report.fail(
                        "decoupling.d_h_sites",
                        f"d_h = {d_h} violates the distance condition "
                        f"(needs >= {params.v_circ * d_v + params.c2 * s + params.c3:.6g})",
                    )
        except (KeyError, ValueError) as exc:
            report.fail("decoupling", f"bad or missing field: {exc}")

    return report


def build_rate_model(cfg: dict) -> RateModel:
    rm = cfg["rate_model"]
    try:
        return RateModel(
            np.asarray(rm["alpha"], dtype=np.float64),
            np.asarray(rm["beta"], dtype=np.float64),
            float(rm["lambda_bound"]),
            declared_drift_inf=rm.get("declared_drift_inf"),
        )
    except RateBoundError as exc:
        raise ConfigError([("rate_model", str(exc))]) from exc


def build_env_spec(cfg: dict) -> EnvironmentSpec:
    env = cfg["environment"]
    kind = env["type"]
    buf = env.get("buffer_sites")
    if kind == "constant":
        return EnvironmentSpec("constant", value=int(env.get("value", 0)), buffer_width=buf)
    if kind == "zeroRange":
        zr = env["zero_range"]
        g = RateFunction(
            np.asarray(zr["g_values"], dtype=np.float64),
            float(zr["gamma_minus"]),
            float(zr["gamma_plus"]),
        )
        return EnvironmentSpec("zero_range", zr=ZrParams(g, float(zr["rho"])), buffer_width=buf)
    asep = env["asep"]
    return EnvironmentSpec("asep", asep=AsepParams(float(asep["p"]), float(asep["rho"])), buffer_width=buf)


def ballisticity_params(section: dict) -> BallisticityParams | None:
    if "kappa_star" not in section:
        return None
    return BallisticityParams(
        float(section["v_star_sites_per_second"]),
        float(section["kappa_star"]),
        float(section["c_star"]),
        float(section["gamma_star"]),
    )
