"""Flat ``name = value`` configuration files."""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .model import ClaimLaw, ExponentialClaims, ModelError, ModelParams, UniformClaims


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


MODEL_KEYS = {"lambda", "claim", "eta1", "eta2", "q", "k", "a", "period"}
INT_KEYS = {"n", "alpha_grid", "paths", "seed"}
FLOAT_KEYS = {"delta", "epsilon", "horizon", "x0"}
KNOWN = MODEL_KEYS | INT_KEYS | FLOAT_KEYS
REQUIRED = MODEL_KEYS - {"period"}


@dataclass
class RunConfig:
    params: ModelParams
    settings: dict = field(default_factory=dict)
    source: str = "<default>"

    def get(self, key: str, default=None):
        return self.settings.get(key, default)


def parse_claim(text: str) -> ClaimLaw:
    """``exponential mu=1.0`` or ``uniform min=0.0 max=2.0``."""
    parts = shlex.split(text)
    if not parts:
        raise ConfigError("claim law is empty")
    kind, args = parts[0].lower(), {}
    for item in parts[1:]:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"claim argument {item!r} is not name=value")
        try:
            args[name] = float(value)
        except ValueError:
            raise ConfigError(f"claim argument {name!r} is not a number: {value!r}") from None
    allowed = {"exponential": {"mu"}, "uniform": {"min", "max"}}
    if kind not in allowed:
        raise ConfigError(f"unknown claim law {kind!r}; use exponential or uniform")
    extra = set(args) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown {kind} claim argument {sorted(extra)[0]!r}")
    try:
        if kind == "exponential":
            return ExponentialClaims(args.get("mu", 1.0))
        return UniformClaims(args.get("min", 0.0), args.get("max", 2.0))
    except ModelError as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str, source: str = "<string>") -> RunConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        name, value = name.strip().lower(), value.strip()
        if not sep or not name:
            raise ConfigError(f"{source}:{lineno}: expected 'name = value'")
        if name not in KNOWN:
            raise ConfigError(f"{source}:{lineno}: unknown key {name!r}")
        if name in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {name!r}")
        values[name] = value
    missing = sorted(REQUIRED - set(values))
    if missing:
        raise ConfigError(f"{source}: missing key {missing[0]!r}")

    def number(name, cast):
        try:
            return cast(values[name])
        except ValueError:
            raise ConfigError(f"{source}: {name} = {values[name]!r} is not a valid number") from None

    try:
        params = ModelParams(
            lam=number("lambda", float),
            claims=parse_claim(values["claim"]),
            eta1=number("eta1", float),
            eta2=number("eta2", float),
            q=number("q", float),
            k=number("k", float),
            a=number("a", float),
            period=number("period", float) if "period" in values else 1.0,
        )
    except ModelError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    settings = {}
    for name in values:
        if name in INT_KEYS:
            settings[name] = number(name, int)
        elif name in FLOAT_KEYS:
            settings[name] = number(name, float)
    return RunConfig(params, settings, source)


def default_text() -> str:
    return resources.files(__package__).joinpath("data/default.cfg").read_text()


def load(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return parse_text(default_text(), "<default>")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_text(text, str(p))
