"""Experiment configuration: INI sections per command, typed and validated."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

COMMANDS = ("dos-scan", "verify-duality", "verify-deformation", "covariance-report",
            "grassmann-selftest", "region-report", "bounds-report")

U64_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key when known."""

    def __init__(self, message: str, key: str | None = None, section: str | None = None):
        super().__init__(message)
        self.key = key
        self.section = section

    def to_json(self) -> dict:
        return {"error": "config", "message": str(self), "section": self.section, "key": self.key}


# --------------------------------------------------------------- value parsers

def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s):
    try:
        return int(str(s).strip())
    except ValueError:
        pass
    # accept integral floats such as "1e5"
    f = float(s)
    if f != int(f):
        raise ValueError("must be an integer")
    return int(f)


def _bool(s):
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be a boolean")


def _list(parse):
    def p(s):
        if isinstance(s, (list, tuple)):
            return [parse(x) for x in s]
        items = [x.strip() for x in str(s).split(",") if x.strip()]
        if not items:
            raise ValueError("must be a nonempty list")
        return [parse(x) for x in items]
    return p


def _choice(*opts):
    def p(s):
        s = str(s).strip()
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s
    return p


def _optional(parse):
    def p(s):
        if s is None or str(s).strip().lower() in ("", "none"):
            return None
        return parse(s)
    return p


def _seed(s):
    v = _int(s)
    if not 0 <= v <= U64_MAX:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return v


# ---------------------------------------------------------------- schema

def _pos(v):
    return v > 0


def _ge1(v):
    return v >= 1


def _in_band(v):
    return abs(v) < 2


def _all(pred):
    return lambda vs: all(pred(v) for v in vs)


# key: (parser, default, predicate or None, message)
_COMMON = {
    "seed": (_seed, 42, None, ""),
}

SCHEMA: dict[str, dict] = {
    "dos-scan": {
        "W": (_list(_float), [2.0, 4.0], _all(_ge1), "W values must be >= 1"),
        "L": (_list(_int), [16, 32], _all(_ge1), "L values must be >= 1"),
        "E": (_list(_float), [0.5, 1.0, 1.5], None, ""),
        "eps": (_float, 0.05, _pos, "eps must be > 0"),
        "samples": (_list(_int), [20], _all(_ge1), "samples must be >= 1"),
        "method": (_choice("eigen", "stochastic"), "eigen", None, ""),
        "probes": (_int, 64, _ge1, "probes must be >= 1"),
        "eta": (_float, 0.0, lambda v: v >= 0, "eta must be >= 0"),
        "tolerance": (_float, 0.05, _pos, "tolerance must be > 0"),
        "identity_samples": (_int, 2, lambda v: v >= 0, "identity_samples must be >= 0"),
        "identity_max_L": (_int, 32, _ge1, "identity_max_L must be >= 1"),
    },
    "verify-duality": {
        "L": (_int, 2, _ge1, "L must be >= 1"),
        "W": (_float, 1.0, _ge1, "W must be >= 1"),
        "E": (_float, 1.0, None, ""),
        "eps": (_float, 1.0, _pos, "eps must be > 0 (pole on the real axis)"),
        "samples": (_int, 100000, _ge1, "samples must be >= 1"),
        "direct_samples": (_int, 20000, _ge1, "direct_samples must be >= 1"),
        "derivative_samples": (_int, 200000, _ge1, "derivative_samples must be >= 1"),
        "fd_step": (_float, 1e-3, _pos, "fd_step must be > 0"),
        "restrict_sites": (_int, 2, _ge1, "restrict_sites must be >= 1"),
    },
    "verify-deformation": {
        "L": (_int, 4, _ge1, "L must be >= 1"),
        "W": (_float, 2.0, _ge1, "W must be >= 1"),
        "E": (_float, 1.0, lambda v: _in_band(v) and v != 0, "need 0 < |E| < 2"),
        "samples": (_int, 100000, _ge1, "samples must be >= 1"),
        "direct_samples": (_int, 20000, _ge1, "direct_samples must be >= 1"),
        "eps_list": (_list(_float), [0.4, 0.2, 0.1],
                     lambda v: len(v) == 3 and all(x > 0 for x in v),
                     "eps_list needs three positive values"),
        "mixture": (_bool, True, None, ""),
    },
    "covariance-report": {
        "L": (_int, 128, _ge1, "L must be >= 1"),
        "W": (_float, 8.0, _ge1, "W must be >= 1"),
        "E": (_float, 1.0, _in_band, "need |E| < 2"),
        "kind": (_choice("C", "B"), "C", None, ""),
        "rate_fraction": (_float, 0.9, _pos, "rate_fraction must be > 0"),
        "grid_L": (_list(_int), [2, 4, 8, 16, 32], _all(_ge1), "grid_L values must be >= 1"),
        "grid_W": (_list(_float), [1.0, 2.0, 4.0, 8.0], _all(_ge1), "grid_W values must be >= 1"),
        "grid_E": (_list(_float), [0.5, 1.0, 1.5], _all(_in_band), "grid_E values need |E| < 2"),
        "schur_L": (_int, 8, _ge1, "schur_L must be >= 1"),
        "schur_W": (_float, 4.0, _ge1, "schur_W must be >= 1"),
        "schur_subsets": (_int, 200, _ge1, "schur_subsets must be >= 1"),
        "interp_L": (_int, 8, _ge1, "interp_L must be >= 1"),
        "interp_W": (_float, 2.0, _ge1, "interp_W must be >= 1"),
        "alpha": (_float, 0.5, lambda v: 0 < v < 1, "alpha must lie in (0, 1)"),
    },
    "grassmann-selftest": {
        "trials": (_int, 100, _ge1, "trials must be >= 1"),
        "n_max": (_int, 6, lambda v: 1 <= v <= 6, "n_max must lie in 1..6"),
        "minor_n_max": (_int, 4, lambda v: 1 <= v <= 5, "minor_n_max must lie in 1..5"),
        "sdet_trials": (_int, 50, _ge1, "sdet_trials must be >= 1"),
        "potential_points": (_int, 1000, _ge1, "potential_points must be >= 1"),
        "ibp_samples": (_int, 200000, _ge1, "ibp_samples must be >= 1"),
        "hs_samples": (_int, 100000, lambda v: v >= 1000, "hs_samples must be >= 1000"),
    },
    "region-report": {
        "L": (_list(_int), [4, 16], _all(_ge1), "L values must be >= 1"),
        "W": (_list(_float), [2.0, 8.0], _all(_ge1), "W values must be >= 1"),
        "E": (_float, 1.0, lambda v: _in_band(v) and v != 0, "need 0 < |E| < 2"),
        "nu": (_float, 0.5, lambda v: 0 < v < 1, "nu must lie in (0, 1)"),
        "delta": (_optional(_float), None, lambda v: v is None or v > 0, "delta must be > 0"),
        "samples": (_int, 100000, _ge1, "samples must be >= 1"),
        "mixture": (_bool, True, None, ""),
    },
    "bounds-report": {
        "trials": (_int, 1000, _ge1, "trials must be >= 1"),
        "n_max": (_int, 16, _ge1, "n_max must be >= 1"),
        "L": (_int, 4, _ge1, "L must be >= 1"),
        "W": (_float, 2.0, _ge1, "W must be >= 1"),
        "E": (_float, 1.0, lambda v: _in_band(v) and v != 0, "need 0 < |E| < 2"),
        "bl_L": (_int, 4, _ge1, "bl_L must be >= 1"),
        "bl_W": (_float, 1.0, _ge1, "bl_W must be >= 1"),
        "bl_lambdas": (_list(_float), [0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 2.0, 5.0],
                       _all(lambda v: v >= 0), "bl_lambdas must be >= 0"),
        "bl_samples": (_int, 100000, _ge1, "bl_samples must be >= 1"),
        "scaling_Ls": (_list(_int), [8, 12, 16, 24, 32, 48], _all(_ge1), "scaling_Ls must be >= 1"),
    },
}


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 42
    source: str = ""

    def echo(self) -> dict:
        return {"command": self.command, "seed": self.seed, "params": dict(self.params)}


def _parse_value(section, key, raw, spec):
    parse, _default, pred, msg = spec
    try:
        v = parse(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}", key, section) from None
    if pred is not None and not pred(v):
        raise ConfigError(f"[{section}] {key}: {msg}", key, section)
    return v


def _validate_cross(command, params):
    if command == "dos-scan":
        if len(params["W"]) != len(params["L"]):
            raise ConfigError("[dos-scan] W and L lists must have equal length", "L", command)
        if len(params["samples"]) not in (1, len(params["W"])):
            raise ConfigError("[dos-scan] samples must be one value or one per (W, L)",
                              "samples", command)
    if command == "region-report" and len(params["W"]) != len(params["L"]):
        raise ConfigError("[region-report] W and L lists must have equal length", "L", command)
    if command == "verify-duality" and params["restrict_sites"] > params["L"] ** 2:
        raise ConfigError("[verify-duality] restrict_sites exceeds the site count",
                          "restrict_sites", command)


def load_config(command: str, text: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the command's section of ``text``, then ``overrides``.

    Every section must name a known command and every key must be in that
    command's schema.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw: dict = {}
    if text:
        cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unparseable config: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]", None, sec)
            allowed = set(SCHEMA[sec]) | set(_COMMON)
            for key in cp[sec]:
                if key not in allowed:
                    raise ConfigError(f"[{sec}] unknown key {key!r}", key, sec)
        if cp.has_section(command):
            raw = dict(cp[command])
    schema = {**SCHEMA[command], **_COMMON}
    params = {}
    for key, spec in schema.items():
        if key in raw:
            params[key] = _parse_value(command, key, raw[key], spec)
        else:
            params[key] = spec[1]
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in schema:
            raise ConfigError(f"unknown override {key!r}", key, command)
        params[key] = _parse_value(command, key, val, schema[key])
    _validate_cross(command, params)
    seed = params.pop("seed")
    return ExperimentConfig(command, params, seed, text or "")
