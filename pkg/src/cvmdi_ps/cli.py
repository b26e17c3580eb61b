"""Batch front end: config files, subcommands, CSV/JSON tables.

Configs are flat ``key = value`` text files with ``#`` comments; any key
can be overridden on the command line with ``--set key=value`` (overrides
win).  Unknown keys are rejected.  Every result table carries a metadata
preamble with the fully resolved configuration, the library version, the
seed and a timestamp; apart from the timestamp, identical configurations
produce byte-identical tables for any worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

from . import __version__
from .integration import GridSpec, ps_rate, ps_rate_montecarlo, rate_report
from .optimize import (
    NoSecureRangeError,
    OptimizationFailure,
    asymmetric_frontier,
    distance_sweep,
    free_parameters,
    optimal_param_sweep,
)
from .protocol import ProtocolParams

__all__ = ["RunConfig", "ResultTable", "ConfigError", "main"]

COMMANDS = ("rate", "sweep", "frontier", "oracle", "optparams")


class ConfigError(ValueError):
    """A configuration key failed to parse or validate."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(tok) for tok in text.split(","))


@dataclass
class RunConfig:
    """Resolved configuration of one CLI run."""

    # protocol
    scenario: str = "complete_collective"
    detector_model: str = "untrusted"
    tau_a: float = 1.0
    tau_b: float = 1.0
    eps_a: float = 0.0
    eps_b: float = 0.0
    eta: float = 1.0
    s_det: float = 1.0
    sigma_a: float = 2.0
    sigma_b: float = 2.0
    mu: float = 2.0
    beta_rec: float = 1.0
    beta_mode: str = "pointwise"
    # distance shortcuts (take precedence over tau_a/tau_b when set)
    distance_km: float = math.nan
    dist_a_km: float = math.nan
    dist_b_km: float = math.nan
    # grid
    n_a: int = 48
    n_b: int = 48
    n_g: int = 96
    cutoff_sigmas: float = 6.0
    # command-specific
    distances_km: tuple = ()
    alice_km: tuple = ()
    window_km: tuple = field(default_factory=lambda: tuple(float(d) for d in range(10, 21)))
    rate_floor: float = 1e-6
    seed: int = 12345
    n_samples: int = 1_000_000
    symmetric: bool = True
    warm_start: bool = True
    output: str = ""
    format: str = "csv"

    def params(self) -> ProtocolParams:
        p = ProtocolParams(
            tau_a=self.tau_a,
            tau_b=self.tau_b,
            eps_a=self.eps_a,
            eps_b=self.eps_b,
            eta=self.eta,
            s_det=self.s_det,
            detector_model=self.detector_model,
            sigma_a=self.sigma_a,
            sigma_b=self.sigma_b,
            mu=self.mu,
            beta_rec=self.beta_rec,
            beta_mode=self.beta_mode,
            scenario=self.scenario,
        )
        if not math.isnan(self.distance_km):
            p = p.with_total_distance(self.distance_km)
        elif not (math.isnan(self.dist_a_km) and math.isnan(self.dist_b_km)):
            if math.isnan(self.dist_a_km) or math.isnan(self.dist_b_km):
                raise ConfigError("dist_a_km and dist_b_km must be set together")
            p = p.with_link_distances(self.dist_a_km, self.dist_b_km)
        return p

    def grid(self) -> GridSpec:
        return GridSpec(
            n_a=self.n_a, n_b=self.n_b, n_g=self.n_g, cutoff_sigmas=self.cutoff_sigmas
        )

    def metadata(self, command: str) -> dict:
        meta = {
            "command": command,
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            meta[f.name] = value
        return meta


_PARSERS = {float: float, int: int, bool: _parse_bool, str: str, tuple: _parse_float_list}


def _config_from_pairs(pairs: list[tuple[str, str]]) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {"float": float, "int": int, "bool": bool, "str": str, "tuple": tuple}
    config = RunConfig()
    for key, raw in pairs:
        if key not in known:
            raise ConfigError(f"unknown configuration key: {key!r}")
        ftype = types[known[key]] if isinstance(known[key], str) else known[key]
        try:
            value = _PARSERS[ftype](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        setattr(config, key, value)
    return config


def read_config(path: str | None, overrides: list[str]) -> RunConfig:
    """Build a RunConfig from a config file plus --set overrides."""
    pairs: list[tuple[str, str]] = []
    if path:
        try:
            text = open(path, encoding="utf-8").read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = stripped.split("=", 1)
            pairs.append((key.strip(), raw.strip()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        pairs.append((key.strip(), raw.strip()))
    return _config_from_pairs(pairs)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


@dataclass
class ResultTable:
    """Named columns, numeric rows, and the metadata to reproduce them."""

    columns: list
    rows: list
    metadata: dict

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row length does not match column count")

    def to_csv(self) -> str:
        lines = [f"# {k} = {_fmt(v)}" for k, v in self.metadata.items()]
        lines.append(",".join(self.columns))
        lines.extend(",".join(_fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {"metadata": self.metadata, "columns": self.columns, "rows": self.rows},
            indent=2,
        ) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ConfigError(f"format must be 'csv' or 'json', got {fmt!r}")


def cmd_rate(config: RunConfig, threads: int) -> ResultTable:
    rep = rate_report(config.params(), config.grid(), threads)
    return ResultTable(
        columns=["raw_rate", "ps_rate", "ps_mass", "mi_integral", "eve_integral", "n_evals"],
        rows=[[rep.raw, rep.ps, rep.ps_mass, rep.mi_integral, rep.eve_integral, rep.n_evals]],
        metadata=config.metadata("rate"),
    )


def cmd_sweep(config: RunConfig, threads: int) -> ResultTable:
    if not config.distances_km:
        raise ConfigError("sweep requires a non-empty distances_km list")
    rows = distance_sweep(
        config.params(),
        list(config.distances_km),
        symmetric=config.symmetric,
        grid=config.grid(),
        warm_start=config.warm_start,
        threads=threads,
    )
    names = list(free_parameters(config.params()))
    return ResultTable(
        columns=["distance_km", "rate"] + names,
        rows=[[r.distance_km, r.best_rate] + [r.best_params[n] for n in names] for r in rows],
        metadata=config.metadata("sweep"),
    )


def cmd_frontier(config: RunConfig, threads: int) -> ResultTable:
    if not config.alice_km:
        raise ConfigError("frontier requires a non-empty alice_km list")
    rows = asymmetric_frontier(
        config.params(),
        list(config.alice_km),
        rate_floor=config.rate_floor,
        grid=config.grid(),
        threads=threads,
    )
    return ResultTable(
        columns=["alice_km", "max_bob_km"],
        rows=[list(r) for r in rows],
        metadata=config.metadata("frontier"),
    )


def cmd_oracle(config: RunConfig, threads: int) -> ResultTable:
    params, grid = config.params(), config.grid()
    quad = ps_rate(params, grid, threads)
    mc = ps_rate_montecarlo(params, config.n_samples, config.seed, threads)
    z = (quad.value - mc.value) / max(mc.std_err, 1e-300)
    return ResultTable(
        columns=["quad_rate", "mc_rate", "mc_std_err", "z_score"],
        rows=[[quad.value, mc.value, mc.std_err, z]],
        metadata=config.metadata("oracle"),
    )


def cmd_optparams(config: RunConfig, threads: int) -> ResultTable:
    rows = optimal_param_sweep(
        config.params(), list(config.window_km), grid=config.grid(), threads=threads
    )
    columns = [
        "distance_km",
        "sigma_a_ideal",
        "mu_ideal",
        "rate_ideal",
        "sigma_a_realistic",
        "mu_realistic",
        "rate_realistic",
    ]
    return ResultTable(
        columns=columns,
        rows=[[row[c] for c in columns] for row in rows],
        metadata=config.metadata("optparams"),
    )


_DISPATCH = {
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "frontier": cmd_frontier,
    "oracle": cmd_oracle,
    "optparams": cmd_optparams,
}


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("CVMDI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CVMDI_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _error_record(kind: str, exc: Exception) -> str:
    return json.dumps({"error": kind, "message": str(exc)})


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cvmdi-ps",
        description="Post-selected CV MDI QKD key rates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="path to a key = value config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable; overrides win)",
        )
        p.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    args = parser.parse_args(argv)

    try:
        config = read_config(args.config, args.overrides)
        threads = _resolve_threads(args.threads)
        if config.n_samples < 10_000:
            raise ConfigError(f"n_samples must be >= 10^4, got {config.n_samples}")
        table = _DISPATCH[args.command](config, threads)
        text = table.render(config.format)
    except (ConfigError, ValueError) as exc:
        print(_error_record("config", exc), file=sys.stderr)
        return 2
    except (NoSecureRangeError, OptimizationFailure, ArithmeticError, RuntimeError) as exc:
        print(_error_record("numerical", exc), file=sys.stderr)
        return 3

    if config.output:
        with open(config.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
