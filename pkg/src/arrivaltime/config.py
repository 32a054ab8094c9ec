"""Flat dotted-key configuration (TOML syntax), overrides and run manifests."""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Any

import tomli

from . import __version__
from .fields import Bohmian, BohmLike
from .trajectories import IntegratorSettings
from .wavepacket import PacketParams

AUTO = "auto"

DEFAULTS: dict[str, Any] = {
    "packet.a": 1.0,
    "packet.b": 1.0,
    "packet.c": 0.5,
    "packet.k": 2.0,
    "packet.x1": 5.0,
    "field.kind": "bohmian",
    "field.lambda": 0.0,
    "field.lambda_factor": 0.0,
    "run.n": 20000,
    "run.seed": 12345,
    "run.workers": 1,
    "run.event_log": False,
    "integrator.rel_tol": 1e-9,
    "integrator.abs_tol": 1e-10,
    "integrator.max_step": AUTO,
    "integrator.event_tol": 1e-10,
    "grid.t_max": AUTO,
    "grid.n_points": 201,
    "scan.t_max": AUTO,
    "scan.t_points": 2001,
    "scan.plane_points": 201,
    "scan.multiples": [0.5, 2.0],
    "scan.run_ensembles": False,
    "scan.n": 20000,
    "currents.times": [1.0, 1.88, 5.0],
    "currents.n_points": 101,
    "currents.half_width": 5.0,
    "currents.lambda_factor": 0.5,
    "verify.n_points": 100,
    "verify.seed": 2024,
}

# keys written into manifests but not part of the experiment
META_KEYS = ("meta.version", "meta.command")

FIELD_KINDS = ("bohmian", "bohm-like")


class ConfigError(ValueError):
    pass


def _flatten(table: dict, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _line_of(text: str, key: str) -> int | None:
    leaf = re.escape(key.split(".")[-1])
    full = re.escape(key)
    pattern = re.compile(rf"^\s*({full}|{leaf})\s*=")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return lineno
    return None


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(value, str) and value == AUTO and default == AUTO:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default == AUTO:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported value {value!r}")


def resolve(values: dict[str, Any], source: str = "", origin: str = "<config>") -> dict[str, Any]:
    """Merge ``values`` over the defaults, rejecting unknown keys and bad types."""
    cfg = dict(DEFAULTS)
    for key, value in values.items():
        if key in META_KEYS:
            continue
        if key not in DEFAULTS:
            line = _line_of(source, key) if source else None
            where = f"{origin}:{line}: " if line else f"{origin}: "
            raise ConfigError(f"{where}unknown key {key!r}")
        try:
            cfg[key] = _coerce(key, value)
        except ConfigError as exc:
            line = _line_of(source, key) if source else None
            where = f"{origin}:{line}: " if line else f"{origin}: "
            raise ConfigError(f"{where}{exc}") from None
    validate(cfg)
    return cfg


def validate(cfg: dict[str, Any]) -> None:
    if cfg["field.kind"] not in FIELD_KINDS:
        raise ConfigError(f"field.kind must be one of {FIELD_KINDS}, got {cfg['field.kind']!r}")
    if cfg["field.kind"] == "bohm-like" and cfg["field.lambda"] <= 0 and cfg["field.lambda_factor"] <= 0:
        raise ConfigError("bohm-like field needs field.lambda > 0 or field.lambda_factor > 0")
    if cfg["field.lambda"] < 0 or cfg["field.lambda_factor"] < 0:
        raise ConfigError("lambda values must be non-negative")
    if cfg["run.n"] < 1:
        raise ConfigError("run.n must be at least 1")
    if cfg["run.workers"] < 1:
        raise ConfigError("run.workers must be at least 1")
    if cfg["grid.n_points"] < 2:
        raise ConfigError("grid.n_points must be at least 2 (empty time grid)")
    for key in ("grid.t_max", "scan.t_max", "integrator.max_step"):
        if cfg[key] != AUTO and cfg[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("integrator.rel_tol", "integrator.abs_tol", "integrator.event_tol", "currents.half_width"):
        if cfg[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("scan.t_points", "scan.plane_points", "currents.n_points", "verify.n_points"):
        if cfg[key] < 2:
            raise ConfigError(f"{key} must be at least 2")
    try:
        packet_params(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load(path: str | Path | None, overrides: list[str] = ()) -> dict[str, Any]:
    """Read a config file (or start from defaults) and apply ``key=value`` overrides."""
    values: dict[str, Any] = {}
    source = ""
    origin = "<defaults>"
    if path is not None:
        origin = str(path)
        source = Path(path).read_text()
        try:
            values = _flatten(tomli.loads(source))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{origin}: {exc}") from None
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
    return resolve(values, source, origin)


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, value


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps(cfg: dict[str, Any], command: str | None = None) -> str:
    """Serialise a resolved config as flat dotted keys; loads back to the same dict."""
    lines = [f'meta.version = "{__version__}"']
    if command:
        lines.append(f'meta.command = "{command}"')
    lines += [f"{key} = {_format(cfg[key])}" for key in DEFAULTS]
    return "\n".join(lines) + "\n"


def packet_params(cfg: dict[str, Any]) -> PacketParams:
    return PacketParams(cfg["packet.a"], cfg["packet.b"], cfg["packet.c"], cfg["packet.k"], cfg["packet.x1"])


def integrator_settings(cfg: dict[str, Any]) -> IntegratorSettings:
    params = packet_params(cfg)
    overrides = {
        "rel_tol": cfg["integrator.rel_tol"],
        "abs_tol": cfg["integrator.abs_tol"],
        "event_tol": cfg["integrator.event_tol"],
    }
    if cfg["grid.t_max"] != AUTO:
        overrides["t_max"] = cfg["grid.t_max"]
    if cfg["integrator.max_step"] != AUTO:
        overrides["max_step"] = cfg["integrator.max_step"]
    return IntegratorSettings.for_packet(params, **overrides)


def field_kind(cfg: dict[str, Any], lambda_crit: float | None = None):
    """Field from config; ``field.lambda_factor`` is relative to the threshold."""
    if cfg["field.kind"] == "bohmian":
        return Bohmian()
    if cfg["field.lambda_factor"] > 0:
        if lambda_crit is None:
            raise ConfigError("field.lambda_factor needs the threshold lambda_crit")
        return BohmLike(cfg["field.lambda_factor"] * lambda_crit)
    return BohmLike(cfg["field.lambda"])
