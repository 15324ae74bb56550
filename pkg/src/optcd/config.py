"""Experiment configuration files.

An INI-style file with these sections (all optional except ``[model]``)::

    [model]
    family = IIDNormalShift          # IIDNormalShift | IIDExponentialRate | AR1CorrShift
                                     # | IIDBernoulli | MixturePost
    params = 0, 1, 1                 # positional family parameters
    x0 = 0
    stationary_start = false         # AR1CorrShift only
    base = IIDNormalShift            # MixturePost: family of pre-change law and components
    components = [[0, 0.5, 1], [0, 1.5, 1]]
    probs = 0.5, 0.5

    [pair]
    id = M6                          # M1..M8, e.g. M5(r=0)

    [run]
    N = 60
    targets = 20, 40                 # generalized ARL0 targets to calibrate
    c = 2.0                          # skip calibration and use this coefficient
    reps = 100000                    # Monte Carlo repetitions (per change point)
    calibration_reps = 200000
    seed = 1
    tolerance = 0.1                  # absolute calibration tolerance
    eval_pairs = M5(r=0), M6         # pairs whose ARL0/GARL/J are reported
    identity = false                 # also report the identity GARL estimator

    [grid]
    ny = 512
    nx = 257
    ...                              # any GridSpec field

    [detectors]
    tc = cusum(4.4823)
    ramp = cusum_ramp(6.39, -1/60)
    opt = optimal("out/limits_M6_40.txt")

    [output]
    dir = out
    save_grid = auto                 # true | false | auto

Unknown sections or keys are rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from ._expr import evaluate
from .limits.grid import GridSpec
from .models import FAMILIES, MixturePost, ObservationModel, make_model
from .weights import WeightedPair, parse_pair


class ConfigError(ValueError):
    pass


SCHEMA = {
    "model": {"family", "params", "x0", "stationary_start", "base", "components", "probs"},
    "pair": {"id"},
    "run": {"n", "targets", "c", "reps", "calibration_reps", "seed", "tolerance", "eval_pairs", "identity"},
    "grid": {f.name for f in fields(GridSpec)},
    "detectors": None,  # free-form names
    "output": {"dir", "save_grid"},
}


@dataclass
class ExperimentConfig:
    model: ObservationModel
    pair: Optional[WeightedPair] = None
    N: int = 60
    targets: list = field(default_factory=list)
    c: Optional[float] = None
    reps: int = 100_000
    calibration_reps: int = 200_000
    seed: int = 0
    tolerance: Optional[float] = None
    eval_pairs: list = field(default_factory=list)
    identity: bool = False
    grid: GridSpec = field(default_factory=GridSpec)
    detectors: list = field(default_factory=list)  # (name, spec string)
    out_dir: Path = Path("out")
    save_grid: str = "auto"
    source: str = "<string>"
    base_dir: Path = Path(".")


def _line_index(text: str) -> dict:
    """Map (section, key) to the 1-based line where it appears."""
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            where[(section, None)] = i
            continue
        if line[:1].isspace():
            continue  # continuation line
        m = re.match(r"([^=:]+)[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), i)
    return where


def _split_list(text: str) -> list:
    val = evaluate(f"[{text}]") if not text.strip().startswith("[") else evaluate(text)
    return val if isinstance(val, list) else [val]


def _split_specs(text: str) -> list[str]:
    """Split ``"M5(r=0), M6"`` at top-level commas."""
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _model(sec) -> ObservationModel:
    family = sec.get("family", "").strip()
    if not family:
        raise ValueError("model family is required")
    params = _split_list(sec["params"]) if "params" in sec else []
    kwargs = {}
    if "x0" in sec:
        kwargs["x0"] = float(evaluate(sec["x0"]))
    if family == "MixturePost":
        base = sec.get("base", "").strip()
        if base not in FAMILIES:
            raise ValueError(f"MixturePost needs base = one of {sorted(FAMILIES)}")
        pre = make_model(base, params, **kwargs)
        comps = tuple(make_model(base, list(c), **kwargs) for c in evaluate(sec["components"]))
        probs = tuple(float(p) for p in _split_list(sec["probs"]))
        return MixturePost(pre, comps, probs)
    for key in ("base", "components", "probs"):
        if key in sec:
            raise ValueError(f"{key} only applies to MixturePost")
    if "stationary_start" in sec:
        kwargs["stationary_start"] = _bool(sec["stationary_start"])
    return make_model(family, params, **kwargs)


def parse_config(text: str, source: str = "<string>", base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Parse config text; any problem raises ConfigError naming the line."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)

    def where(section, key=None):
        return f"{source}:{lines.get((section, key), '?')}"

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{where(section)}: unknown section [{section}]; "
                              f"expected one of {sorted(SCHEMA)}")
        allowed = SCHEMA[section]
        if allowed is None:
            continue
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError(f"{where(section, key)}: unknown key {key!r} in [{section}]; "
                                  f"allowed: {sorted(allowed)}")
    if "model" not in cp:
        raise ConfigError(f"{source}: missing [model] section")

    def convert(section, key, fn):
        try:
            return fn(cp[section][key])
        except (ValueError, TypeError, KeyError, SyntaxError) as exc:
            raise ConfigError(f"{where(section, key)}: bad value for {section}.{key}: {exc}") from None

    try:
        model = _model(cp["model"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where('model')}: {exc}") from None

    cfg = ExperimentConfig(model=model, source=source, base_dir=base_dir or Path("."))
    if "pair" in cp and "id" in cp["pair"]:
        cfg.pair = convert("pair", "id", parse_pair)
    run = cp["run"] if "run" in cp else {}
    num = lambda s: float(evaluate(s))  # noqa: E731
    integer = lambda s: int(evaluate(s))  # noqa: E731
    if "n" in run:
        cfg.N = convert("run", "n", integer)
        if cfg.N < 1:
            raise ConfigError(f"{where('run', 'n')}: N must be at least 1")
    if "targets" in run:
        cfg.targets = convert("run", "targets", lambda s: [float(v) for v in _split_list(s)])
    if "c" in run:
        cfg.c = convert("run", "c", num)
    for key, attr in (("reps", "reps"), ("calibration_reps", "calibration_reps"), ("seed", "seed")):
        if key in run:
            setattr(cfg, attr, convert("run", key, integer))
    if "tolerance" in run:
        cfg.tolerance = convert("run", "tolerance", num)
    if "eval_pairs" in run:
        cfg.eval_pairs = convert("run", "eval_pairs", lambda s: [parse_pair(p) for p in _split_specs(s)])
    if "identity" in run:
        cfg.identity = convert("run", "identity", _bool)
    if "grid" in cp:
        kw = {}
        for key in cp["grid"]:
            kw[key] = convert("grid", key, lambda s: None if s.strip().lower() == "none" else evaluate(s))
        try:
            cfg.grid = GridSpec(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where('grid')}: {exc}") from None
    if "detectors" in cp:
        cfg.detectors = [(name, cp["detectors"][name].strip()) for name in cp["detectors"]]
    if "output" in cp:
        out = cp["output"]
        if "dir" in out:
            cfg.out_dir = Path(out["dir"].strip())
        if "save_grid" in out:
            val = out["save_grid"].strip().lower()
            if val not in ("auto", "true", "false"):
                raise ConfigError(f"{where('output', 'save_grid')}: save_grid must be auto, true or false")
            cfg.save_grid = val
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file {path} not found") from None
    return parse_config(text, source=str(path), base_dir=path.parent)
