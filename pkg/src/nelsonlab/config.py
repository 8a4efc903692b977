"""Sectioned key-value run configuration with dotted overrides and a canonical hash."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import presets
from .grid import (
    IDENTITY,
    Confining,
    Constant,
    Gaussian,
    Grid,
    Plateau,
    PowerMass,
    ScalarIdentity,
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if key:
            where.append(key)
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line, self.key = line, key


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


FIELD_KEYS = ("A", "a", "c", "m", "V", "rho")

SCHEMA = {
    "run": {"preset": str, "seed": int, "workers": int, "out": str},
    "grid": {"d": int, "R": float, "N": int},
    "coefficients": {**{k: str for k in FIELD_KEYS}, "q": float, "mu": float, "delta": float, "b0": float,
                     "V_shift": float, "C0": float, "C1": float},
    "sampler": {"dt": float, "T": float, "T_grid": _floats, "M": int, "lam": float, "fk_dt": float,
                "fk_t": float, "fk_M": int, "fk_radius": float},
    "kernel": {"t_grid": _floats, "dense_cap": int},
    "fock": {"n_modes": int, "n_max": int, "n_part": int, "cap": int},
    "gamma": {"q": float, "full_modes": _bool},
}

# knobs that change scheduling or file placement but never a result
NOT_HASHED = {("run", "workers"), ("run", "out")}


def parse_field(text: str, matrix: bool = False):
    """``kind:arg,arg`` field syntax, e.g. ``power:1,2`` or ``plateau:0.8,1.25``."""
    kind, _, args = text.strip().partition(":")
    kind = kind.strip().lower()
    vals = _floats(args) if args.strip() else []
    if kind == "identity":
        return IDENTITY
    makers = {
        "constant": Constant,
        "power": PowerMass,
        "confining": Confining,
        "gaussian": Gaussian,
        "plateau": Plateau,
    }
    if kind not in makers:
        raise ValueError(f"unknown field kind {kind!r}")
    f = makers[kind](*vals)
    return ScalarIdentity(f) if matrix else f


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict, repr=False)

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    @property
    def preset_name(self) -> str:
        return self.get("run", "preset", "harmonic-1d")

    @property
    def seed(self) -> int:
        return int(self.get("run", "seed", self.preset().seed))

    @property
    def workers(self) -> int:
        return int(self.get("run", "workers", 1))

    def canonical(self) -> str:
        body = {s: {k: v for k, v in sorted(kv.items()) if (s, k) not in NOT_HASHED}
                for s, kv in sorted(self.values.items())}
        body.setdefault("run", {})["preset"] = self.preset_name
        body = {s: kv for s, kv in body.items() if kv}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def preset(self) -> presets.Preset:
        """The named preset with grid, coefficient and setting overrides applied."""
        try:
            p = presets.get(self.preset_name)
        except KeyError as e:
            raise ConfigError(str(e.args[0]), self.lines.get(("run", "preset")), "run.preset") from None
        grid = p.grid
        g = self.values.get("grid", {})
        if g:
            try:
                grid = Grid(g.get("d", grid.d), g.get("R", grid.R), g.get("N", grid.N))
            except (ValueError, TypeError) as e:
                raise ConfigError(str(e), None, "grid") from None
        changes = {}
        for k, v in self.values.get("coefficients", {}).items():
            if k in FIELD_KEYS:
                try:
                    changes[k] = parse_field(v, matrix=k in ("A", "a"))
                except (ValueError, TypeError) as e:
                    raise ConfigError(str(e), self.lines.get(("coefficients", k)), f"coefficients.{k}") from None
            else:
                changes[k] = v
        spec = p.spec.replace(**changes) if changes else p.spec
        settings = dict(p.settings)
        for sec in ("sampler", "kernel", "fock", "gamma"):
            settings.update(self.values.get(sec, {}))
        if "seed" in self.values.get("run", {}):
            settings["seed"] = self.values["run"]["seed"]
        out = presets.Preset(p.name, grid, spec, p.confining, settings, p.bound_fit, dict(p.rate_targets))
        lam = settings.get("lam")
        if lam is not None and spec.delta is not None and not 1 / (spec.delta + 1) < lam < 1:
            raise ConfigError(f"lambda={lam} outside (1/(delta+1), 1)", self.lines.get(("sampler", "lam")),
                              "sampler.lam")
        return out


def _coerce(section: str, key: str, raw: str, line=None):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", line, section)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line, f"{section}.{key}")
    try:
        return SCHEMA[section][key](raw.strip())
    except ValueError as e:
        raise ConfigError(f"bad value {raw!r}: {e}", line, f"{section}.{key}") from None


def _line_numbers(text: str) -> dict:
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            out[(section, None)] = i
        elif "=" in s and section and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip())] = i
    return out


def parse_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e.message.splitlines()[0]}", getattr(e, "lineno", None)) from None
    lines = _line_numbers(text)
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), section)
        for key, raw in cp.items(section):
            values.setdefault(section, {})[key] = _coerce(section, key, raw, lines.get((section, key)))
    return RunConfig(values, lines)


def load(path=None, overrides=(), seed=None, workers=None, out=None) -> RunConfig:
    """Read ``path`` (optional), then apply ``--set`` overrides and explicit flags."""
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", None, str(path)) from None
    cfg = parse_text(text)
    for item in overrides:
        key, eq, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not eq or not dot:
            raise ConfigError(f"override {item!r} is not section.key=value", None, item)
        cfg.values.setdefault(section, {})[name] = _coerce(section, name, raw)
    for sec, key, val in (("run", "seed", seed), ("run", "workers", workers), ("run", "out", out)):
        if val is not None:
            cfg.values.setdefault(sec, {})[key] = val
    cfg.preset()  # validate references early
    return cfg
