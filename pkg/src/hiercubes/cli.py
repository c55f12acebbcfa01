"""``hiercubes`` command line.

Exit codes: 0 success, 2 invalid configuration or flags, 3 undetermined
regime (always for hard failures, and for soft ones under ``--strict``),
4 numerical failure.
"""

from __future__ import annotations

import functools
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .config import dumps_csv, dumps_json, model_from_dict, profile_from_dict, read_document, validate
from .core import LatticeParams, TableModel
from .density import densities, finite_volume_densities, invert_densities, profile_rows
from .entropy import (DEFAULT_PHI_ORDER, bernoulli_entropy, chemical_potentials, entropy, entropy_bound,
                      free_energy, phi_series)
from .errors import ConfigError, NumericalError, OutsideUnitBall, SaturatedProfile, Undetermined
from .oracle import counts_table, enumerate_partition
from .phase import classify
from .pressure import DEFAULT_REGIME, effective_activities, pressure
from .sampler import fractal_export, sample_configuration, sample_stats

EXIT_CONFIG, EXIT_UNDETERMINED, EXIT_NUMERIC = 2, 3, 4


def _guard(fn):
    """Translate library errors into the exit-code contract."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except Undetermined as exc:
            click.echo(f"undetermined: {exc}", err=True)
            sys.exit(EXIT_UNDETERMINED)
        except NumericalError as exc:
            click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
    return wrapper


def _emit(command: str, meta: dict, result, out: str, csv_table=None):
    """Write JSON (envelope validated against the shipped schema) or CSV."""
    fmt, target = _resolve_out(out)
    if fmt == "csv":
        if csv_table is None:
            raise ConfigError(f"{command} has no CSV form")
        text = dumps_csv(*csv_table)
    else:
        doc = {"command": command, "meta": meta, "result": result}
        text = dumps_json(doc)
        validate(json.loads(text), command)
    if target is None:
        click.echo(text, nl=False)
    else:
        Path(target).write_text(text)


def _resolve_out(out: str):
    if out in ("json", "csv"):
        return out, None
    suffix = Path(out).suffix.lower()
    if suffix not in (".json", ".csv"):
        raise ConfigError(f"--out must be json, csv or a .json/.csv path, got {out!r}")
    return suffix[1:], out


def _meta(**kw) -> dict:
    meta = {"version": __version__}
    meta.update({k: v for k, v in kw.items() if v is not None})
    return meta


def _load_model(config, mu):
    if config is None:
        raise ConfigError("--config is required")
    params, model = model_from_dict(read_document(config))
    if mu is not None:
        if isinstance(model, TableModel):
            raise ConfigError("--mu does not apply to table models")
        model = model.with_mu(mu)
    return params, model


def _regime_meta(tol, max_level):
    c = DEFAULT_REGIME
    heuristics = {"small_zhat": c.small, "run": c.run, "collapse_ratio": c.collapse,
                  "sum_cap": c.sum_cap, "tail_ratio": c.tail_ratio,
                  "note": "summable/divergent thresholds are engineering choices"}
    return _meta(tol=tol, max_level=max_level, heuristics=heuristics)


def common(fn=None, *, out_default="json"):
    def deco(fn):
        fn = click.option("--config", type=click.Path(), default=None, help="Model or profile JSON file.")(fn)
        fn = click.option("--tol", type=float, default=1e-10, show_default=True)(fn)
        fn = click.option("--max-level", type=click.IntRange(0, 2000), default=48, show_default=True)(fn)
        fn = click.option("--out", default=out_default, show_default=True,
                          help="json, csv, or an output path.")(fn)
        fn = click.option("--strict", is_flag=True, help="Exit 3 on undetermined results.")(fn)
        return fn
    return deco(fn) if fn is not None else deco


def _check_tol(tol):
    if not (tol > 0 and math.isfinite(tol)):
        raise ConfigError("--tol must be a positive real")


@click.group()
@click.version_option(__version__)
def main():
    """Thermodynamics of hierarchical cube mixtures."""


@main.command("pressure")
@common
@click.option("--mu", type=float, default=None, help="Override the chemical potential.")
@_guard
def cmd_pressure(config, tol, max_level, out, strict, mu):
    """Infinite-volume pressure and effective activities."""
    _check_tol(tol)
    params, model = _load_model(config, mu)
    res = pressure(model, params, tol, max_level)
    if strict and res.regime_hint == "undetermined":
        raise Undetermined("pressure tail neither converged nor diverged")
    rows = [(j, zh, pj) for j, (zh, pj) in enumerate(zip(res.effective.zhat, res.effective.p_partial))]
    _emit("pressure", _regime_meta(tol, max_level), res.to_dict(), out,
          (["j", "zhat_j", "p_j"], rows))


@main.command("densities")
@common
@click.option("--mu", type=float, default=None)
@_guard
def cmd_densities(config, tol, max_level, out, strict, mu):
    """Block densities, packing fraction and per-level table."""
    _check_tol(tol)
    params, model = _load_model(config, mu)
    res = pressure(model, params, tol, max_level)
    profile = densities(res)
    rows = profile_rows(profile, params)
    result = {"profile": profile.to_dict(), "rows": rows, "regime_hint": res.regime_hint, "p": res.p}
    _emit("densities", _regime_meta(tol, max_level), result, out, _rows_csv(rows))


def _rows_csv(rows):
    header = ["j", "rho_j", "nu_j", "zhat_j", "z_j"]
    return header, [[r[k] for k in header] for r in rows]


@main.command("invert")
@common
@_guard
def cmd_invert(config, tol, max_level, out, strict):
    """Activities and pressure recovered from a density profile."""
    if config is None:
        raise ConfigError("--config is required")
    params, profile = profile_from_dict(read_document(config))
    inv = invert_densities(profile, params)
    rows = profile_rows(profile, params)
    result = {"zhat": inv.zhat, "z": inv.z, "log_z": inv.log_z, "p": inv.p, "rows": rows}
    _emit("invert", _meta(), result, out, _rows_csv(rows))


@main.command("entropy")
@common
@click.option("--order", type=click.IntRange(2, 10_000), default=DEFAULT_PHI_ORDER, show_default=True,
              help="Truncation order of the power series.")
@_guard
def cmd_entropy(config, tol, max_level, out, strict, order):
    """Entropy, series form, chemical potentials and free energy.

    Accepts a profile document, or a model document whose equilibrium
    densities are used.
    """
    _check_tol(tol)
    if config is None:
        raise ConfigError("--config is required")
    doc = read_document(config)
    model = None
    if isinstance(doc, dict) and "profile" in doc:
        model_doc = doc.pop("model", None)
        params, profile = profile_from_dict(doc)
        if model_doc is not None:
            _, model = model_from_dict({"d": params.d, "model": model_doc})
    else:
        params, model = model_from_dict(doc)
        profile = densities(pressure(model, params, tol, max_level))
    result = {"s": entropy(profile, params), "s_ber": bernoulli_entropy(profile, params),
              "s_bound": entropy_bound(profile, params), "profile": profile.to_dict(),
              "phi": None, "tail_bound": None, "mu": None, "mu_inf": None, "f": None}
    try:
        result["phi"], result["tail_bound"] = phi_series(profile, params, order)
    except OutsideUnitBall:
        pass
    try:
        cp = chemical_potentials(profile, params)
        result["mu"], result["mu_inf"] = cp.mu, cp.mu_inf
    except SaturatedProfile:
        pass
    if model is not None and hasattr(model, "energy"):
        result["f"] = free_energy(profile, model, params)
    mu = result["mu"] or []
    _emit("entropy", _meta(tol=tol, max_level=max_level, order=order), result, out,
          (["j", "rho_j", "mu_j"], [[j, r, mu[j] if j < len(mu) else None]
                                    for j, r in enumerate(profile.rho)]))


@main.command("phase")
@common
@click.option("--mu-min", type=float, default=None, help="Lower end of the fallback scan range.")
@click.option("--mu-max", type=float, default=None, help="Upper end of the fallback scan range.")
@_guard
def cmd_phase(config, tol, max_level, out, strict, mu_min, mu_max):
    """Phase classification with the strongest applicable certificate."""
    _check_tol(tol)
    params, model = _load_model(config, None)
    mu_range = None
    if mu_min is not None or mu_max is not None:
        if mu_min is None or mu_max is None or not mu_min < mu_max:
            raise ConfigError("--mu-min and --mu-max must both be given with mu-min < mu-max")
        mu_range = (mu_min, mu_max)
    scan_tol = max(tol, 1e-12)
    report = classify(model, params, mu_range, scan_tol)
    if strict and report.kind == "Undetermined":
        raise Undetermined("phase classification undetermined")
    zeta = report.zeta or ()
    _emit("phase", _meta(tol=scan_tol, mu_range=mu_range), report.to_dict(), out,
          (["j", "zeta_j"], [[j, z] for j, z in enumerate(zeta)]))


@main.command("phase-scan")
@common(out_default="csv")
@click.option("--mu-min", type=float, required=True)
@click.option("--mu-max", type=float, required=True)
@click.option("--steps", type=click.IntRange(1, 1_000_000), default=100, show_default=True)
@_guard
def cmd_phase_scan(config, tol, max_level, out, strict, mu_min, mu_max, steps):
    """Pressure, packing fraction and regime on a grid of chemical potentials (CSV by default)."""
    _check_tol(tol)
    if not mu_min <= mu_max:
        raise ConfigError("--mu-min must not exceed --mu-max")
    params, model = _load_model(config, None)
    if isinstance(model, TableModel):
        raise ConfigError("phase-scan needs a model with a chemical potential")
    grid = [mu_min] if steps == 1 else [mu_min + i * (mu_max - mu_min) / (steps - 1) for i in range(steps)]
    rows = []
    for mu in grid:
        res = pressure(model.with_mu(mu), params, tol, max_level)
        if res.regime_hint == "undetermined":
            if strict:
                raise Undetermined(f"regime undetermined at mu = {mu!r}")
            sigma = math.nan
        else:
            sigma = densities(res).sigma
        rows.append({"mu": mu, "p": res.p, "sigma": sigma, "regime": res.regime_hint})
    header = ["mu", "p", "sigma", "regime"]
    _emit("phase-scan", _regime_meta(tol, max_level), rows, out,
          (header, [[r[k] for k in header] for r in rows]))


@main.command("sample")
@common
@click.option("--level", type=click.IntRange(0, 64), required=True, help="Cube level n.")
@click.option("--replicas", type=click.IntRange(1, None), default=10_000, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
@click.option("--mu", type=float, default=None)
@_guard
def cmd_sample(config, tol, max_level, out, strict, level, replicas, seed, mu):
    """Empirical block densities from exact samples of the level-n cube."""
    params, model = _load_model(config, mu)
    if model.max_level is not None and level > model.max_level:
        raise ConfigError(f"model defines levels up to {model.max_level}, asked for {level}")
    eff = effective_activities(model, params, level)
    stats = sample_stats(eff, level, replicas, seed)
    result = stats.to_dict()
    result["rho_exact"] = list(finite_volume_densities(eff, level).rho)
    rows = [[j, f[0], f[1], v[0], v[1], result["rho_exact"][j]]
            for j, (f, v) in enumerate(zip(stats.rho_fixed, stats.rho_volume))]
    _emit("sample", _meta(seed=seed, replicas=replicas, level=level), result, out,
          (["j", "rho_fixed", "se_fixed", "rho_volume", "se_volume", "rho_exact"], rows))


@main.command("fractal")
@common
@click.option("--level", type=click.IntRange(0, 64), required=True)
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
@click.option("--mu", type=float, default=None)
@_guard
def cmd_fractal(config, tol, max_level, out, strict, level, seed, mu):
    """One sampled configuration exported as cubes in the unit cube."""
    params, model = _load_model(config, mu)
    if model.max_level is not None and level > model.max_level:
        raise ConfigError(f"model defines levels up to {model.max_level}, asked for {level}")
    eff = effective_activities(model, params, level)
    geo = fractal_export(sample_configuration(eff, level, seed), eff)
    rows = [[c["level"], *c["corner"], c["side"]] for c in geo["cubes"]]
    header = ["level"] + [f"corner_{a}" for a in range(params.d)] + ["side"]
    _emit("fractal", _meta(seed=seed, level=level), geo, out, (header, rows))


@main.command("oracle")
@click.option("--d", "dim", type=click.IntRange(1, 5), required=True)
@click.option("--n", "level", type=click.IntRange(0, 30), required=True)
@click.option("--z", "zfile", type=click.Path(), default=None,
              help="JSON list of activities (or a table model document); default all ones.")
@click.option("--out", default="json", show_default=True)
@_guard
def cmd_oracle(dim, level, zfile, out):
    """Exact partition function and count table by enumeration."""
    params = LatticeParams(dim)
    if zfile is None:
        z = [1] * (level + 1)
    else:
        doc = read_document(zfile)
        if isinstance(doc, list):
            z = doc
        else:
            _, model = model_from_dict(doc)
            if not isinstance(model, TableModel):
                raise ConfigError("oracle needs explicit activities")
            z = list(model.z)
        if any(isinstance(x, bool) or not isinstance(x, (int, float, str)) for x in z):
            raise ConfigError("activities must be numbers or 'p/q' strings")
    try:
        z = [Fraction(x) for x in z]
    except (ValueError, ZeroDivisionError):
        raise ConfigError("cannot read activities") from None
    if any(x < 0 for x in z):
        raise ConfigError("activities must be non-negative")
    xi = enumerate_partition(params, level, z)
    table = counts_table(params, level)
    result = {"d": dim, "n": level, "z": [str(x) for x in z],
              "Xi": {"log": xi.log, "rational": str(xi.exact)},
              "counts": [{"N": list(c), "multiplicity": k} for c, k in table]}
    _emit("oracle", _meta(), result, out,
          ([f"N_{j}" for j in range(level + 1)] + ["multiplicity"], [[*c, k] for c, k in table]))


if __name__ == "__main__":
    main()
