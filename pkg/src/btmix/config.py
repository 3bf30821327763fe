"""Sectioned ``key = value`` run configuration.

Sections: ``[simulation]``, ``[clustering]``, ``[mle]``, ``[experiment]`` and
``[output]``.  Every section is optional; missing keys take the library
defaults.  Values are validated field by field before anything runs.
"""

from __future__ import annotations

import configparser
import dataclasses
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .experiments import ExperimentGrid, default_grid
from .mle import MleConfig
from .model import SimulationConfig, TheoryRangeWarning
from .spectral import ClusteringParams

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]

FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending ``section.key``."""


def _int(text: str) -> int:
    return int(text, 0) if text.lower().startswith(("0x", "0o", "0b")) else int(text)


def _opt_float(text: str) -> float | None:
    return None if text.lower() in ("", "none") else float(text)


def _tuple(conv):
    def parse(text: str) -> tuple:
        return tuple(conv(p) for p in text.replace(",", " ").split())

    return parse


SCHEMA: dict[str, dict[str, Any]] = {
    "simulation": {"m": _int, "r": _int, "K": _int, "b": float, "epsilon": float, "seed": _int},
    "clustering": {
        "r": _int,
        "method": str,
        "tau": _opt_float,
        "tau_constant": float,
        "kmeans_max_iters": _int,
        "kmeans_tol": float,
    },
    "mle": {"max_iters": _int, "tol": _opt_float, "ridge": float, "box": _opt_float},
    "experiment": {
        "m": _int,
        "n": _int,
        "b": float,
        "b_values": _tuple(float),
        "r_values": _tuple(_int),
        "budgets": _tuple(float),
        "epsilon": float,
        "r_tilde_max": _int,
        "algorithms": _tuple(str),
        "success_threshold": float,
        "trials": _int,
        "seed": _int,
    },
    "output": {"out": str, "threads": _int, "format": str},
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs.  ``experiment`` holds overrides on top of each experiment's defaults."""

    simulation: SimulationConfig | None = None
    clustering: ClusteringParams | None = None
    mle: MleConfig = field(default_factory=MleConfig)
    experiment: dict[str, Any] = field(default_factory=dict)
    out: str | None = None
    threads: int = 1
    format: str = "csv"

    def clustering_params(self) -> ClusteringParams:
        if self.clustering is not None:
            return self.clustering
        if self.simulation is None:
            raise ConfigError("clustering.r: no cluster count given and no [simulation] section to take it from")
        return ClusteringParams(r=self.simulation.r)

    def grid(self, name: str, *, seed: int | None = None, threads: int | None = None) -> ExperimentGrid:
        grid = replace(default_grid(name), **self.experiment, threads=threads or self.threads)
        return replace(grid, seed=seed) if seed is not None else grid

    def to_text(self) -> str:
        sections: list[tuple[str, dict[str, Any]]] = []
        if self.simulation is not None:
            sections.append(("simulation", dataclasses.asdict(self.simulation)))
        if self.clustering is not None:
            sections.append(("clustering", dataclasses.asdict(self.clustering)))
        sections.append(("mle", dataclasses.asdict(self.mle)))
        if self.experiment:
            sections.append(("experiment", self.experiment))
        output: dict[str, Any] = {"threads": self.threads, "format": self.format}
        if self.out is not None:
            output["out"] = self.out
        sections.append(("output", output))
        lines = []
        for name, values in sections:
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
            lines.append("")
        return "\n".join(lines)


def _fmt(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _build(section: str, cls, values: dict[str, Any]):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TheoryRangeWarning)
            return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in values if msg.startswith(k) or f" {k} " in f" {msg} "), None)
        raise ConfigError(f"{section}.{key}: {msg}" if key else f"{section}: {msg}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    parsed: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        schema = SCHEMA.get(section)
        if schema is None:
            raise ConfigError(f"{section}: unknown section (expected one of {', '.join(SCHEMA)})")
        parsed[section] = {}
        for key, raw in cp[section].items():
            if key not in schema:
                raise ConfigError(f"{section}.{key}: unknown key")
            try:
                parsed[section][key] = schema[key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: cannot parse {raw.strip()!r} ({exc})") from exc

    simulation = None
    if "simulation" in parsed:
        missing = {"m", "r", "K", "b", "epsilon"} - parsed["simulation"].keys()
        if missing:
            raise ConfigError(f"simulation.{sorted(missing)[0]}: required key missing")
        simulation = _build("simulation", SimulationConfig, parsed["simulation"])

    clustering = None
    if "clustering" in parsed:
        values = dict(parsed["clustering"])
        if "r" not in values:
            if simulation is None:
                raise ConfigError("clustering.r: required when there is no [simulation] section")
            values["r"] = simulation.r
        clustering = _build("clustering", ClusteringParams, values)

    mle = _build("mle", MleConfig, parsed.get("mle", {}))

    experiment = parsed.get("experiment", {})
    if experiment:
        _build("experiment", ExperimentGrid, experiment)

    output = parsed.get("output", {})
    threads = output.get("threads", 1)
    if threads < 1:
        raise ConfigError("output.threads: must be >= 1")
    fmt = output.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"output.format: must be one of {FORMATS}, got {fmt!r}")
    return RunConfig(simulation, clustering, mle, experiment, output.get("out"), threads, fmt)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, str(path))

