"""Experiment configuration: a sectioned ``key = value`` file (INI syntax).

Every key is declared in :data:`SCHEMA`; unknown sections or keys are errors,
so a typo in a sweep never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

EXPERIMENTS = ("solve", "mms", "green-decay", "neumann-sweep", "k-independence", "energy",
               "lift-check", "truncation", "oscillation")

OUTPUT_ROOT_ENV = "ELLIPTICLAB_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Parse or validation failure; ``where`` is a line reference or a field path."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


# --- value parsers ---------------------------------------------------------------
def _floats(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(s):
        vals = tuple(float(t) for t in s.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        if n is None and not vals:
            raise ValueError("expected at least one number")
        return vals
    return parse


def _ints(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(s):
        vals = tuple(int(t) for t in s.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} integers, got {len(vals)}")
        if n is None and not vals:
            raise ValueError("expected at least one integer")
        return vals
    return parse


def _choice(*options) -> Callable[[str], str]:
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s
    return parse


def _words(s):
    return tuple(s.replace(",", " ").split())


def _optional(parse):
    def inner(s):
        return None if s.strip().lower() in ("", "auto", "none") else parse(s)
    return inner


# section -> key -> (parser, default raw string)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "experiment": {"name": (_choice(*EXPERIMENTS), None)},
    "mesh": {
        "origin": (_floats(3), "0 0 0"),
        "extent": (_floats(3), "1 1 1"),
        "divisions": (_ints(3), "16 16 16"),
        "mask": (_choice("none", "l_shape", "cube_hole"), "none"),
    },
    "coefficients": {
        "pattern": (_choice("identity", "checkerboard", "sphere_inclusion", "rotated_aniso"), "identity"),
        "gamma_lo": (float, "1"),
        "gamma_hi": (float, "100"),
        "block": (float, "0.125"),
        "center": (_floats(3), "0.5 0.5 0.5"),
        "radius": (float, "0.25"),
        "gamma_in": (float, "10"),
        "gamma_out": (float, "1"),
        "axis": (_floats(3), "0 0 1"),
        "angle": (float, "0"),
        "lambdas": (_floats(3), "1 1 1"),
        "k": (float, "1"),
        "k_variation": (_choice("none", "sine", "step"), "none"),
        "k_amplitude": (float, "1"),
        "b": (_optional(_floats(3)), "none"),
        "b_tilde": (_optional(_floats(3)), "none"),
        "c": (_optional(float), "none"),
        "table": (_optional(str), "none"),
        "source": (complex, "1"),
    },
    "estimator": {
        "x0": (_optional(_floats(3)), "auto"),
        "r": (float, "0.25"),
        "alpha": (float, "0.5"),
        "p": (float, "2"),
        "bc": (_choice("dirichlet", "neumann"), "dirichlet"),
        "region": (_choice("interior", "boundary"), "interior"),
        "r_min": (_optional(float), "auto"),
        "r_max": (_optional(float), "auto"),
        "k_list": (_floats(), "1"),
        "pole": (_optional(_floats(3)), "auto"),
        "probe": (_optional(_floats(3)), "auto"),
        "radii": (_floats(), "0.5 1 2"),
        "h": (float, "0.0625"),
        "max_nodes": (int, "2000000"),
        "T": (float, "0.1"),
        "steps": (_ints(), "64 128 256"),
        "mesh_sequence": (_ints(), "8 16 32"),
        "contrasts": (_optional(_floats()), "none"),
        "q": (float, "2"),
        "r_o": (_optional(float), "auto"),
    },
    "solver": {
        "method": (_choice("bicgstab", "dense"), "bicgstab"),
        "tol": (float, "1e-10"),
        "max_iter": (int, "20000"),
        "preconditioner": (_choice("none", "jacobi"), "jacobi"),
    },
    "output": {
        "directory": (str, "out"),
        "formats": (_words, "csv"),
    },
}


@dataclass
class ExperimentConfig:
    values: Dict[str, Dict[str, object]]
    raw: Dict[str, Dict[str, str]]
    source: str = "<defaults>"

    def __getitem__(self, path: str):
        section, key = path.split(".", 1)
        return self.values[section][key]

    @property
    def name(self) -> str:
        return self.values["experiment"]["name"]

    def digest(self) -> str:
        """SHA-256 of the normalised raw configuration (sections and keys sorted)."""
        canon = "\n".join(f"{s}.{k}={self.raw[s][k]}" for s in sorted(self.raw) for k in sorted(self.raw[s]))
        return hashlib.sha256(canon.encode()).hexdigest()

    def output_dir(self) -> Path:
        d = Path(self.values["output"]["directory"])
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not d.is_absolute():
            d = Path(root) / d
        return d


def _read_text(text: str, source: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}", "key outside any [section]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}", f"duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}", f"duplicate key {exc.section}.{exc.option}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}", f"cannot parse line {line.strip()!r}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_overrides(items: Sequence[str]) -> Dict[str, Dict[str, str]]:
    out: Dict[str, Dict[str, str]] = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError("--set", f"expected section.key=value, got {item!r}")
        path, value = item.split("=", 1)
        section, key = path.strip().split(".", 1)
        out.setdefault(section, {})[key] = value.strip()
    return out


def load_config(path=None, overrides: Sequence[str] = (), experiment: Optional[str] = None,
                text: Optional[str] = None) -> ExperimentConfig:
    """Parse, merge ``--set`` overrides and validate against :data:`SCHEMA`."""
    source = "<string>" if path is None else str(path)
    raw: Dict[str, Dict[str, str]] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(source, f"cannot read config ({exc.strerror})") from None
    if text is not None:
        raw = _read_text(text, source)
    for section, kv in parse_overrides(overrides).items():
        raw.setdefault(section, {}).update(kv)
    if experiment is not None:
        raw.setdefault("experiment", {})["name"] = experiment

    for section, kv in raw.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key in kv:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")

    values: Dict[str, Dict[str, object]] = {}
    resolved: Dict[str, Dict[str, str]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        resolved[section] = {}
        for key, (parse, default) in keys.items():
            s = raw.get(section, {}).get(key, default)
            if s is None:
                raise ConfigError(f"{section}.{key}", "required key is missing")
            try:
                values[section][key] = parse(s)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", f"invalid value {s!r} ({exc})") from None
            resolved[section][key] = s.strip()
    cfg = ExperimentConfig(values, resolved, source)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Semantic checks that must hold before any solve starts."""
    v = cfg.values
    name = cfg.name
    if any(d < 1 for d in v["mesh"]["divisions"]):
        raise ConfigError("mesh.divisions", "must be >= 1 per axis")
    if any(e <= 0 for e in v["mesh"]["extent"]):
        raise ConfigError("mesh.extent", "must be > 0 per axis")
    if v["coefficients"]["k"] == 0 and v["coefficients"]["k_variation"] == "none":
        raise ConfigError("coefficients.k", "k must be nonzero (the operator requires k != 0)")
    if any(k == 0 for k in v["estimator"]["k_list"]):
        raise ConfigError("estimator.k_list", "k = 0 is not admissible")
    if not 0 < v["estimator"]["alpha"] < 1:
        raise ConfigError("estimator.alpha", "must lie in (0, 1)")
    if not v["estimator"]["p"] > 1.5:
        raise ConfigError("estimator.p", "must exceed n/2 = 1.5")
    if not v["estimator"]["q"] > 1.5:
        raise ConfigError("estimator.q", "must exceed n/2 = 1.5")
    if v["estimator"]["r"] <= 0:
        raise ConfigError("estimator.r", "must be positive")
    if any(s < 1 for s in v["estimator"]["steps"]):
        raise ConfigError("estimator.steps", "must be >= 1")
    if v["solver"]["tol"] <= 0:
        raise ConfigError("solver.tol", "must be positive")
    if v["solver"]["max_iter"] < 1:
        raise ConfigError("solver.max_iter", "must be >= 1")
    for fmt in v["output"]["formats"]:
        if fmt not in ("csv", "vtk", "mtx"):
            raise ConfigError("output.formats", f"unknown format {fmt!r}")
    if name == "mms":
        if v["coefficients"]["pattern"] != "identity" or v["coefficients"]["table"] is not None:
            raise ConfigError("coefficients.pattern", "mms uses the manufactured sine for gamma = I")
        if any(v["coefficients"][key] is not None for key in ("b", "b_tilde", "c")):
            raise ConfigError("coefficients.b", "mms does not support lower-order terms")
        if v["coefficients"]["k_variation"] != "none":
            raise ConfigError("coefficients.k_variation", "mms needs a constant k")
        if v["mesh"]["origin"] != (0.0, 0.0, 0.0) or v["mesh"]["extent"] != (1.0, 1.0, 1.0):
            raise ConfigError("mesh.extent", "mms runs on the unit cube")
        if v["mesh"]["mask"] != "none":
            raise ConfigError("mesh.mask", "mms runs on the unmasked unit cube")
    if name in ("lift-check", "neumann-sweep", "k-independence") and v["coefficients"]["k_variation"] != "none":
        raise ConfigError("coefficients.k_variation", f"{name} needs a constant k")
    if name == "truncation":
        for R in v["estimator"]["radii"]:
            n = 2 * R / v["estimator"]["h"]
            if R <= 0 or abs(n - round(n)) > 1e-9 * max(n, 1):
                raise ConfigError("estimator.radii", f"2R/h must be a positive integer (R={R})")
    out = cfg.output_dir()
    probe = out
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if not os.access(probe, os.W_OK):
        raise ConfigError("output.directory", f"{out} is not writable")
