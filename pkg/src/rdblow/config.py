"""Experiment configuration: flat key = value files, fully validated.

Schema (one ``key = value`` per line, ``#`` comments, unknown keys warn):

    experiment      simulate | bounds | probability | validate
    hurst           Hurst index in [0.5, 1)
    gamma k delta eta p q m n    model coefficients
    domain          interval | rectangle
    length          interval length            (interval)
    length_x length_y                          (rectangle)
    n_cells         cells per axis (interval; or n_cells_x / n_cells_y)
    n_modes         spectral modes (default: all available)
    datum           phi_multiple (datum_b) | custom (datum_file: CSV x,v)
    datum_b         barrier multiple for phi_multiple
    t_max n_steps   path/time grid
    ensemble_size   replicates
    master_seed     64-bit master seed
    output_dir      artifact directory
    jobs            worker processes (default 1)
    variant_flags   comma set of printed-formula variant toggles
    alpha           weight exponent for the tail probability bound
    eps0 / eps0_fraction / eps0_cap_mode     Young-inequality epsilon policy
    v_max dt_min cfl safety store_fields     solver overrides
    snapshot_times  comma list of snapshot times (simulate)
    n_h_paths n_h_tmax n_h_steps             tail-bound MC controls

Validation collects every violation instead of stopping at the first.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .fbm import HurstParameter, TimeGrid
from .solver import InitialDatum, ModelParams, SolverControls
from .spectral import DomainSpec

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "config_hash"]

_EXPERIMENTS = ("simulate", "bounds", "probability", "validate")

_DEFAULTS: dict[str, str] = {
    "experiment": "validate",
    "hurst": "0.75",
    "gamma": "0.0",
    "k": "0.1",
    "delta": "0.2",
    "eta": "0.5",
    "p": "1.5",
    "q": "2.0",
    "m": "0.0",
    "n": "2.0",
    "domain": "interval",
    "length": "3.0",
    "length_x": "",
    "length_y": "",
    "n_cells": "120",
    "n_cells_x": "",
    "n_cells_y": "",
    "n_modes": "",
    "datum": "phi_multiple",
    "datum_b": "60.0",
    "datum_file": "",
    "t_max": "0.75",
    "n_steps": "1536",
    "ensemble_size": "50",
    "master_seed": "20260810",
    "output_dir": "out",
    "jobs": "1",
    "variant_flags": "",
    "alpha": "1.0",
    "eps0": "",
    "eps0_fraction": "0.5",
    "eps0_cap_mode": "printed",
    "v_max": "1e8",
    "dt_min": "1e-12",
    "cfl": "0.8",
    "safety": "0.1",
    "store_fields": "false",
    "snapshot_times": "",
    "n_h_paths": "200",
    "n_h_tmax": "10.0",
    "n_h_steps": "2048",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description."""

    experiment: str
    model: ModelParams
    domain: DomainSpec
    datum: InitialDatum
    grid: TimeGrid
    n_modes: int
    ensemble_size: int
    master_seed: int
    output_dir: str
    jobs: int
    variant_flags: frozenset[str]
    controls: SolverControls
    alpha: float
    eps0: float | None
    eps0_fraction: float
    eps0_cap_mode: str
    snapshot_times: tuple[float, ...]
    n_h_paths: int
    n_h_tmax: float
    n_h_steps: int
    warnings: tuple[str, ...] = ()
    raw: tuple[tuple[str, str], ...] = ()

    def canonical_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.raw)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.canonical_text().encode()).hexdigest()[:16]


def _parse_lines(text: str) -> tuple[dict[str, str], list[str], list[str]]:
    values: dict[str, str] = {}
    problems: list[str] = []
    warns: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, val = (s.strip() for s in stripped.split("=", 1))
        if not key:
            problems.append(f"line {lineno}: empty key")
            continue
        if key not in _DEFAULTS:
            warns.append(f"line {lineno}: unknown key {key!r} ignored")
            continue
        if key in values:
            warns.append(f"line {lineno}: duplicate key {key!r} overrides earlier value")
        values[key] = val
    return values, problems, warns


def _get_float(values, key, problems) -> float | None:
    try:
        return float(values[key])
    except ValueError:
        problems.append(f"{key}: not a number: {values[key]!r}")
        return None


def _get_int(values, key, problems) -> int | None:
    try:
        return int(values[key])
    except ValueError:
        problems.append(f"{key}: not an integer: {values[key]!r}")
        return None


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigurationError listing every violation."""
    values, problems, warns = _parse_lines(text)
    merged = dict(_DEFAULTS)
    merged.update(values)

    experiment = merged["experiment"]
    if experiment not in _EXPERIMENTS:
        problems.append(f"experiment must be one of {_EXPERIMENTS}, got {experiment!r}")

    floats = {k: _get_float(merged, k, problems)
              for k in ("hurst", "gamma", "k", "delta", "eta", "p", "q", "m", "n",
                        "length", "t_max", "datum_b", "alpha", "v_max", "dt_min",
                        "cfl", "safety", "eps0_fraction", "n_h_tmax")}
    ints = {k: _get_int(merged, k, problems)
            for k in ("n_cells", "n_steps", "ensemble_size", "master_seed", "jobs",
                      "n_h_paths", "n_h_steps")}

    model = None
    if all(floats[k] is not None for k in ("hurst", "gamma", "k", "delta", "eta",
                                           "p", "q", "m", "n")):
        hurst = None
        try:
            hurst = HurstParameter(floats["hurst"])
        except ValueError as exc:
            problems.append(str(exc))
        try:
            # validate the coefficient set even when the Hurst index is bad,
            # so every violation is reported at once
            model = ModelParams(
                gamma=floats["gamma"], k=floats["k"], delta=floats["delta"],
                eta=floats["eta"], p=floats["p"], q=floats["q"], m=floats["m"],
                n=floats["n"], hurst=hurst or HurstParameter(0.75))
        except ConfigurationError as exc:
            problems.extend(exc.violations)
        if hurst is None:
            model = None

    domain = None
    if merged["domain"] == "interval":
        if floats["length"] is not None and ints["n_cells"] is not None:
            try:
                domain = DomainSpec.interval(floats["length"], ints["n_cells"])
            except ValueError as exc:
                problems.append(str(exc))
    elif merged["domain"] == "rectangle":
        side = {"length_x": merged["length_x"] or merged["length"],
                "length_y": merged["length_y"] or merged["length"],
                "n_cells_x": merged["n_cells_x"] or merged["n_cells"],
                "n_cells_y": merged["n_cells_y"] or merged["n_cells"]}
        lx = _get_float(side, "length_x", problems)
        ly = _get_float(side, "length_y", problems)
        nx = _get_int(side, "n_cells_x", problems)
        ny = _get_int(side, "n_cells_y", problems)
        if None not in (lx, ly, nx, ny):
            try:
                domain = DomainSpec.rectangle(lx, ly, nx, ny)
            except ValueError as exc:
                problems.append(str(exc))
    else:
        problems.append(f"domain must be interval or rectangle, got {merged['domain']!r}")

    datum = None
    if merged["datum"] == "phi_multiple":
        if floats["datum_b"] is not None:
            if floats["datum_b"] <= 0:
                problems.append("datum_b must be positive")
            else:
                datum = InitialDatum.multiple_of_phi(floats["datum_b"])
    elif merged["datum"] == "custom":
        if not merged["datum_file"]:
            problems.append("datum = custom requires datum_file")
        else:
            try:
                arr = np.loadtxt(merged["datum_file"], delimiter=",", skiprows=1)
                datum = InitialDatum.custom(arr[:, -1])
            except Exception as exc:
                problems.append(f"datum_file unreadable: {exc}")
    else:
        problems.append(f"datum must be phi_multiple or custom, got {merged['datum']!r}")

    grid = None
    if floats["t_max"] is not None and ints["n_steps"] is not None:
        try:
            grid = TimeGrid(floats["t_max"], ints["n_steps"])
        except ValueError as exc:
            problems.append(str(exc))

    if ints["ensemble_size"] is not None and ints["ensemble_size"] < 1:
        problems.append("ensemble_size must be >= 1")
    if ints["jobs"] is not None and ints["jobs"] < 1:
        problems.append("jobs must be >= 1")
    if merged["eps0_cap_mode"] not in ("printed", "consistent"):
        problems.append("eps0_cap_mode must be printed or consistent")

    n_modes = None
    if domain is not None:
        avail = (domain.n_cells[0] - 1 if domain.dim == 1
                 else (domain.n_cells[0] - 1) * (domain.n_cells[1] - 1))
        if merged["n_modes"]:
            n_modes = _get_int(merged, "n_modes", problems)
            if n_modes is not None and not (1 <= n_modes <= avail):
                problems.append(f"n_modes must be in [1, {avail}]")
        else:
            n_modes = min(avail, 64)

    eps0 = None
    if merged["eps0"]:
        eps0 = _get_float(merged, "eps0", problems)

    snap: tuple[float, ...] = ()
    if merged["snapshot_times"]:
        try:
            snap = tuple(float(s) for s in merged["snapshot_times"].split(","))
        except ValueError:
            problems.append(f"snapshot_times: not a comma list of numbers: "
                            f"{merged['snapshot_times']!r}")

    if problems:
        raise ConfigurationError(
            "invalid configuration:\n  " + "\n  ".join(problems), violations=problems)

    store_fields = merged["store_fields"].lower() in ("1", "true", "yes", "on")
    controls = SolverControls(
        v_max=floats["v_max"], dt_min=floats["dt_min"], cfl=floats["cfl"],
        safety=floats["safety"], store_fields=store_fields)

    raw = tuple(sorted((k, merged[k]) for k in _DEFAULTS))
    return ExperimentConfig(
        experiment=experiment,
        model=model,
        domain=domain,
        datum=datum,
        grid=grid,
        n_modes=n_modes,
        ensemble_size=ints["ensemble_size"],
        master_seed=ints["master_seed"],
        output_dir=merged["output_dir"],
        jobs=ints["jobs"],
        variant_flags=frozenset(
            s.strip() for s in merged["variant_flags"].split(",") if s.strip()),
        controls=controls,
        alpha=floats["alpha"],
        eps0=eps0,
        eps0_fraction=floats["eps0_fraction"],
        eps0_cap_mode=merged["eps0_cap_mode"],
        snapshot_times=snap,
        n_h_paths=ints["n_h_paths"],
        n_h_tmax=floats["n_h_tmax"],
        n_h_steps=ints["n_h_steps"],
        warnings=tuple(warns),
        raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    """Read, parse and validate a config file."""
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def override(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Dataclass-style replace with the raw echo updated for hashing."""
    new = replace(cfg, **kwargs)
    extra = tuple((f"override:{k}", repr(v)) for k, v in sorted(kwargs.items()))
    return replace(new, raw=new.raw + extra)
