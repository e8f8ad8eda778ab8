"""Experiment configuration files.

The format is INI-style: one ``key = value`` per line, grouped in the
sections below. Values are typed on read (int, float, bool, comma lists),
so the file itself stays flat.

    [instance]            generator name plus its keyword parameters
    name = sc-sc-quadratic
    lam = 1.0

    [algorithm]           learner or meta-learner plus its parameters
    name = ogda

    [run]
    T = 100
    seed = 7
    out = results          optional; CLI --out and OMMO_OUTPUT_DIR also work
    checkpoints = auto

    [verify]
    suites = linalg, projections

    [tolerance]           optional overrides, e.g. saddle = 1e-8
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..functions import INSTANCE_NAMES

ALGORITHM_NAMES = ("ogda", "ommns", "agda", "online-vi", "lra", "constant", "mmflh")
CHECKPOINT_MODES = ("auto", "all", "final", "dyadic")
TOLERANCE_KEYS = ("saddle",)
SECTIONS = ("instance", "algorithm", "run", "verify", "tolerance")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


def parse_value(text: str):
    """Best-effort typed value: bool, int, float, comma list, or string."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "none" if v is None else str(v)


@dataclass
class ExperimentConfig:
    instance: str
    algorithm: str
    T: int
    seed: int = 0
    instance_params: dict = field(default_factory=dict)
    algorithm_params: dict = field(default_factory=dict)
    out: str | None = None
    checkpoints: object = "auto"
    suites: tuple = ()
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.instance not in INSTANCE_NAMES:
            raise ConfigError(f"unknown instance {self.instance!r}; known: {', '.join(INSTANCE_NAMES)}")
        if self.algorithm not in ALGORITHM_NAMES:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; known: {', '.join(ALGORITHM_NAMES)}")
        if not isinstance(self.T, int) or isinstance(self.T, bool) or self.T < 3:
            raise ConfigError(f"T must be an integer >= 3, got {self.T!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        cp = self.checkpoints
        if isinstance(cp, str) and cp not in CHECKPOINT_MODES:
            raise ConfigError(f"checkpoints must be one of {CHECKPOINT_MODES} or a list of rounds")
        if isinstance(cp, int) and not isinstance(cp, bool):
            self.checkpoints = cp = [cp]
        if isinstance(cp, list) and not all(isinstance(t, int) and 1 <= t <= self.T for t in cp):
            raise ConfigError("checkpoint rounds must be integers in 1..T")
        unknown = set(self.tolerances) - set(TOLERANCE_KEYS)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        from .suites import SUITES  # late import: suites pull in the whole library
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown verification suites: {bad}")
        if self.instance == "dyne" and self.algorithm == "mmflh":
            raise ConfigError("mmflh needs the cumulative saddle point in advance; "
                              "the adaptive dyne sequence cannot provide it")

    def with_params(self, **changes) -> "ExperimentConfig":
        """Copy with top-level fields or instance/algorithm parameters replaced."""
        top = {k: changes.pop(k) for k in list(changes) if k in ("T", "seed", "out", "checkpoints")}
        inst = dict(self.instance_params)
        alg = dict(self.algorithm_params)
        for k, v in changes.items():
            if k.startswith("algorithm."):
                alg[k.split(".", 1)[1]] = v
            else:
                inst[k.removeprefix("instance.")] = v
        return ExperimentConfig(self.instance, self.algorithm, top.get("T", self.T),
                                top.get("seed", self.seed), inst, alg, top.get("out", self.out),
                                top.get("checkpoints", self.checkpoints), self.suites,
                                dict(self.tolerances))

    def to_text(self) -> str:
        lines = ["[instance]", f"name = {self.instance}"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.instance_params.items()]
        lines += ["", "[algorithm]", f"name = {self.algorithm}"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.algorithm_params.items()]
        lines += ["", "[run]", f"T = {self.T}", f"seed = {self.seed}",
                  f"checkpoints = {format_value(self.checkpoints)}"]
        if self.out:
            lines.append(f"out = {self.out}")
        if self.suites:
            lines += ["", "[verify]", f"suites = {format_value(list(self.suites))}"]
        if self.tolerances:
            lines += ["", "[tolerance]"]
            lines += [f"{k} = {format_value(v)}" for k, v in self.tolerances.items()]
        return "\n".join(lines) + "\n"


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    if not cp.has_section(name):
        return {}
    return {k: parse_value(v) for k, v in cp.items(name)}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (T, L0, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    extra = set(cp.sections()) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    inst = _section(cp, "instance")
    alg = _section(cp, "algorithm")
    run = _section(cp, "run")
    ver = _section(cp, "verify")
    tol = _section(cp, "tolerance")
    for sec, d in (("instance", inst), ("algorithm", alg)):
        if "name" not in d:
            raise ConfigError(f"[{sec}] needs a name")
    if "T" not in run:
        raise ConfigError("[run] needs T")
    unknown = set(run) - {"T", "seed", "out", "checkpoints"}
    if unknown:
        raise ConfigError(f"unknown [run] keys: {sorted(unknown)}")
    suites = ver.get("suites", ())
    suites = tuple(suites) if isinstance(suites, list) else ((suites,) if suites else ())
    return ExperimentConfig(
        instance=str(inst.pop("name")), algorithm=str(alg.pop("name")), T=run["T"],
        seed=run.get("seed", 0), instance_params=inst, algorithm_params=alg,
        out=None if run.get("out") is None else str(run["out"]),
        checkpoints=run.get("checkpoints", "auto"), suites=suites, tolerances=tol)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text)
