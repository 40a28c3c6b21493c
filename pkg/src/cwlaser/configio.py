"""Configuration files: strict YAML parsing and serialization.

Schema (all keys optional unless noted):

    laser:
      r0: 0.0            # complex: number, {re, im}, or {abs, phase}
      rL: {abs: 0.3, phase: 0.0}
      epsilon: 5.0e-3
      sections:          # required, non-empty list
        - length: 1.0
          kappa: 3.96
          d: {re: -0.275, im: 0.0}
          alpha_h: 5.0
          gain: {model: linear, slope: 2.145}
          rho: 0.44      # affine: number or {value, slope}
          gamma: 90.0
          omega_r: -20.0
          current: 6.757e-3
          lifetime: 359.0
          n_floor: 0.0
    scenario:
      task: simulate     # simulate | spectrum | critical | reduce |
                         # compare | verify | sweep
      out: results
      seed: 0
      options: {...}     # task specific, passed through

Parsing is strict: duplicate keys and unknown keys are errors carrying the
offending line number.
"""

from __future__ import annotations

import cmath
import sys
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .params import Affine, LaserConfig, SectionParams, validate

TASKS = ("simulate", "spectrum", "critical", "reduce", "compare",
         "verify", "sweep")


@dataclass
class Scenario:
    """What to run: a task name plus its options, output dir, and seed."""

    task: str = "simulate"
    out: str = "out"
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; "
                              f"expected one of {', '.join(TASKS)}")
        self.seed = int(self.seed)


class _LocatedDict(dict):
    """Mapping that remembers the source line of each key."""

    def __init__(self):
        super().__init__()
        self.lines = {}

    def line(self, key):
        return self.lines.get(key, "?")


class _StrictLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    out = _LocatedDict()
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(
                f"duplicate key {key!r} at line {key_node.start_mark.line + 1}"
                f" (first occurrence at line {out.lines[key]})")
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _take(mapping, key, default=None):
    if isinstance(mapping, _LocatedDict):
        mapping.lines.pop(key, None)
    return mapping.pop(key, default)


def _reject_unknown(mapping, where):
    if not isinstance(mapping, dict) or not mapping:
        return
    key = next(iter(mapping))
    line = mapping.line(key) if isinstance(mapping, _LocatedDict) else "?"
    raise ConfigError(f"unknown key {key!r} in {where} (line {line})")


def _as_complex(value, where):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, dict):
        d = dict(value)
        if "re" in d or "im" in d:
            re = float(d.pop("re", 0.0))
            im = float(d.pop("im", 0.0))
            if d:
                raise ConfigError(f"{where}: unexpected keys {sorted(d)} "
                                  "next to re/im")
            return complex(re, im)
        if "abs" in d:
            mag = float(d.pop("abs"))
            ph = float(d.pop("phase", 0.0))
            if d:
                raise ConfigError(f"{where}: unexpected keys {sorted(d)} "
                                  "next to abs/phase")
            return mag * cmath.exp(1j * ph)
    raise ConfigError(f"{where}: expected a number, {{re, im}}, or "
                      f"{{abs, phase}}, got {value!r}")


def _as_affine(value, where):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return Affine(float(value))
    if isinstance(value, dict):
        d = dict(value)
        try:
            out = Affine(float(d.pop("value")), float(d.pop("slope", 0.0)))
        except KeyError:
            raise ConfigError(f"{where}: affine coefficient needs a "
                              "'value' key") from None
        if d:
            raise ConfigError(f"{where}: unexpected keys {sorted(d)}")
        return out
    raise ConfigError(f"{where}: expected a number or {{value, slope}}, "
                      f"got {value!r}")


def _parse_section(raw, k):
    where = f"sections[{k}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {raw!r}")
    kw = {}
    for key in ("length", "kappa", "alpha_h", "current", "lifetime",
                "n_floor"):
        val = _take(raw, key)
        if val is not None:
            kw[key] = float(val)
    d = _as_complex(_take(raw, "d"), f"{where}.d")
    if d is not None:
        kw["d"] = d
    gain = _take(raw, "gain")
    if gain is not None:
        if not isinstance(gain, dict):
            raise ConfigError(f"{where}.gain: expected {{model, slope}}")
        g = dict(gain)
        model = g.pop("model", "linear")
        slope = g.pop("slope", None)
        if g:
            raise ConfigError(f"{where}.gain: unexpected keys {sorted(g)}")
        kw["gain_model"] = str(model)
        if slope is not None:
            kw["gain_slope"] = float(slope)
    for key in ("rho", "gamma", "omega_r"):
        val = _as_affine(_take(raw, key), f"{where}.{key}")
        if val is not None:
            kw[key] = val
    _reject_unknown(raw, where)
    return SectionParams(**kw)


def parse_config_text(text: str, source: str = "<string>"):
    """Parse a configuration document; returns (LaserConfig, Scenario)."""
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if doc is None:
        raise ConfigError(f"{source}: no sections defined (empty file)")
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    laser = _take(doc, "laser")
    if laser is None or not isinstance(laser, dict):
        raise ConfigError(f"{source}: no sections defined "
                          "(missing 'laser' block)")
    raw_sections = _take(laser, "sections")
    if not raw_sections:
        raise ConfigError(f"{source}: no sections defined")
    if not isinstance(raw_sections, list):
        raise ConfigError(f"{source}: 'sections' must be a list")
    sections = tuple(_parse_section(s, k) for k, s in enumerate(raw_sections))
    cfg_kw = {}
    for key in ("r0", "rL"):
        val = _as_complex(_take(laser, key), f"laser.{key}")
        if val is not None:
            cfg_kw[key] = val
    eps = _take(laser, "epsilon")
    if eps is not None:
        cfg_kw["epsilon"] = float(eps)
    _reject_unknown(laser, "laser")
    config = LaserConfig(sections=sections, **cfg_kw)

    scen_raw = _take(doc, "scenario")
    _reject_unknown(doc, source)
    if scen_raw is None:
        scenario = Scenario()
    else:
        if not isinstance(scen_raw, dict):
            raise ConfigError(f"{source}: 'scenario' must be a mapping")
        kw = {}
        for key in ("task", "out"):
            val = _take(scen_raw, key)
            if val is not None:
                kw[key] = str(val)
        seed = _take(scen_raw, "seed")
        if seed is not None:
            kw["seed"] = int(seed)
        opts = _take(scen_raw, "options")
        if opts is not None:
            if not isinstance(opts, dict):
                raise ConfigError(f"{source}: scenario.options must be "
                                  "a mapping")
            kw["options"] = dict(opts)
        _reject_unknown(scen_raw, "scenario")
        scenario = Scenario(**kw)
    return config, scenario


def parse_config(path, print_warnings: bool = True):
    """Load a configuration file; prints validation warnings to stderr."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    config, scenario = parse_config_text(text, source=str(path))
    if print_warnings:
        for diag in validate(config):
            print(f"{path}: {diag}", file=sys.stderr)
    return config, scenario


def _complex_repr(z: complex):
    return {"re": float(z.real), "im": float(z.imag)}


def _affine_repr(a: Affine):
    if a.slope == 0.0:
        return float(a.value)
    return {"value": float(a.value), "slope": float(a.slope)}


def serialize_config(config: LaserConfig, scenario: Scenario | None = None) -> str:
    """Emit a document that parse_config_text maps back to equal objects."""
    sections = []
    for s in config.sections:
        sections.append({
            "length": float(s.length),
            "kappa": float(s.kappa),
            "d": _complex_repr(s.d),
            "alpha_h": float(s.alpha_h),
            "gain": {"model": s.gain_model, "slope": float(s.gain_slope)},
            "rho": _affine_repr(s.rho),
            "gamma": _affine_repr(s.gamma),
            "omega_r": _affine_repr(s.omega_r),
            "current": float(s.current),
            "lifetime": float(s.lifetime),
            "n_floor": float(s.n_floor),
        })
    doc = {"laser": {
        "r0": _complex_repr(config.r0),
        "rL": _complex_repr(config.rL),
        "epsilon": float(config.epsilon),
        "sections": sections,
    }}
    if scenario is not None:
        doc["scenario"] = {"task": scenario.task, "out": scenario.out,
                           "seed": scenario.seed,
                           "options": scenario.options}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def fig1_config_path():
    """Path of the shipped two-section reference configuration."""
    from importlib.resources import files
    return files("cwlaser.data").joinpath("fig1.cfg")
