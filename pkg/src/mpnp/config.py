"""Run configuration: INI-style files with strict key checking.

Blocks:

    [params]   d_plus d_minus m_plus m_minus epsilon v0
               trap_m  |  nu delta big_l      (derive M from the potential)
    [run1d]    variant (delta|multiscale|cq) n_cells delta big_l nu t_final
               dt_rule sigma manufactured
    [run2d]    n_cells epsilon t_final dt_rule cx cy radius snap_zeta
               snap_alpha x_plus_in x_minus_in y_plus_in y_minus_in sigma v0
               scheme output_every
    [sweep]    epsilon delta n dt mode
    [output]   directory

dt_rule is "c*h" or "c*h^2" (also accepts plain numbers as absolute dt).
Unknown keys are rejected with the offending name.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field

from .params import LJPotentialSpec, PhysicalParams, compute_trap_m


class ConfigError(ValueError):
    pass


_KNOWN = {
    "params": {"d_plus", "d_minus", "m_plus", "m_minus", "epsilon", "v0",
               "trap_m", "nu", "delta", "big_l"},
    "run1d": {"variant", "n_cells", "delta", "big_l", "nu", "t_final",
              "dt_rule", "sigma", "manufactured"},
    "run2d": {"n_cells", "epsilon", "t_final", "dt_rule", "cx", "cy",
              "radius", "snap_zeta", "snap_alpha", "x_plus_in", "x_minus_in",
              "y_plus_in", "y_minus_in", "sigma", "v0", "scheme",
              "output_every"},
    "sweep": {"epsilon", "delta", "n", "dt", "mode"},
    "output": {"directory"},
}

_DT_RULE = re.compile(
    r"^\s*([0-9.eE+-]+)\s*(?:\*\s*h\s*(?:\^|\*\*)?\s*(2)?)?\s*$")


def parse_dt_rule(text: str):
    """(coefficient, power) so that dt = coefficient * h**power."""
    m = _DT_RULE.match(text)
    if not m:
        raise ConfigError(f"cannot parse dt_rule {text!r}")
    coef = float(m.group(1))
    if "h" not in text:
        return coef, 0
    return coef, 2 if m.group(2) else 1


def _floats(text):
    return [float(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]


def _ints(text):
    return [int(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]


@dataclass
class RunConfig:
    params: dict = field(default_factory=dict)
    run1d: dict = field(default_factory=dict)
    run2d: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw_text: str = ""

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            text = fh.read()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        cfg = cls(raw_text=text)
        for section in parser.sections():
            if section not in _KNOWN:
                raise ConfigError(f"unknown config section [{section}]")
            bucket = getattr(cfg, section)
            for key, value in parser.items(section):
                if key not in _KNOWN[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                bucket[key] = value
        return cfg

    # ---- typed accessors -------------------------------------------------

    def physical_params(self) -> PhysicalParams:
        p = self.params
        kw = {}
        for key in ("d_plus", "d_minus", "m_plus", "m_minus", "epsilon", "v0"):
            if key in p:
                kw[key] = float(p[key])
        if "trap_m" in p:
            kw["trap_m"] = float(p["trap_m"])
            self.trap_m_overridden = "nu" in p or "delta" in p
        elif "nu" in p and "delta" in p:
            spec = LJPotentialSpec(nu=float(p["nu"]), delta=float(p["delta"]),
                                   big_l=float(p.get("big_l", 1.0)))
            kw["trap_m"] = compute_trap_m(spec)
        try:
            return PhysicalParams(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_values(self, key, cast=float):
        if key not in self.sweep:
            return None
        return (_ints if cast is int else _floats)(self.sweep[key])

    def digest(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]

    def resolved(self) -> dict:
        return {"params": dict(self.params), "run1d": dict(self.run1d),
                "run2d": dict(self.run2d), "sweep": dict(self.sweep),
                "output": dict(self.output)}

    def to_json(self) -> str:
        return json.dumps(self.resolved(), indent=2, sort_keys=True)
