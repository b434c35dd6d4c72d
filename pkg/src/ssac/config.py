"""Run configuration: a sectioned key = value text file.

Sections are ``[env]``, ``[safety_index]``, ``[learner]`` and ``[run]``. Missing
keys take defaults; unknown keys are errors. Hazards are written as
``x y radius`` triples separated by ``;``. Tuples are space-separated.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

from .env import EnvConfig, Hazard
from .learner import LearnerConfig
from .nn import ConfigurationError
from .safety import SafetyIndexParams


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"
    eval_interval: int = 0
    eval_episodes: int = 10
    checkpoint_interval: int = 0
    feasibility_states: int = 2000
    feasibility_grid: int = 21

    def __post_init__(self):
        if self.eval_interval < 0 or self.eval_episodes < 0 or self.checkpoint_interval < 0:
            raise ConfigurationError("run intervals and episode counts must be non-negative")
        if self.feasibility_states < 1 or self.feasibility_grid < 3:
            raise ConfigurationError("feasibility_states >= 1 and feasibility_grid >= 3 required")


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    safety_index: SafetyIndexParams = field(default_factory=SafetyIndexParams)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        if self.env.reset_margin < self.safety_index.d_min:
            raise ConfigurationError(
                f"env.reset_margin ({self.env.reset_margin}) must be >= safety_index.d_min "
                f"({self.safety_index.d_min}) so that resets start in the safe set"
            )

    def to_text(self) -> str:
        return to_text(self)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, run=replace(self.run, seed=int(seed)))


SECTIONS = {"env": EnvConfig, "safety_index": SafetyIndexParams, "learner": LearnerConfig, "run": RunSection}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple) and value and isinstance(value[0], Hazard):
        return "; ".join(f"{h.x!r} {h.y!r} {h.radius!r}" for h in value)
    if isinstance(value, tuple):
        return " ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(name: str, default, text: str):
    text = text.strip()
    if name == "hazards":
        hazards = []
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            parts = chunk.split()
            if len(parts) != 3:
                raise ValueError(f"hazard needs 'x y radius', got {chunk!r}")
            hazards.append(Hazard(*map(float, parts)))
        return tuple(hazards)
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        kind = int if default and isinstance(default[0], int) else float
        return tuple(kind(p) for p in text.replace(",", " ").split())
    return text


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return lineno
        elif current == section and key is not None:
            name = line.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return lineno
    return None


def _where(source: str, text: str, section: str, key: str | None = None) -> str:
    line = _line_of(text, section, key)
    return f"{source}:{line}" if line else source


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` maps dotted keys (``learner.m_pi``) to strings."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from exc

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigurationError(f"override {dotted!r}: expected section.key with section in {sorted(SECTIONS)}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{_where(source, text, section)}: unknown section [{section}]")

    built = {}
    for section, cls in SECTIONS.items():
        defaults = {f.name: getattr(cls(), f.name) for f in fields(cls)}
        kwargs = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                loc = _where(source, text, section, key)
                if key not in defaults:
                    raise ConfigurationError(f"{loc}: unknown key '{key}' in [{section}]")
                try:
                    kwargs[key] = _parse_value(key, defaults[key], raw)
                except ValueError as exc:
                    raise ConfigurationError(f"{loc}: bad value for {section}.{key}: {exc}") from exc
        try:
            built[section] = cls(**kwargs)
        except (ConfigurationError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{_where(source, text, section)}: [{section}] {exc}") from exc
    return RunConfig(**built)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path), overrides)


def to_text(config: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(config, section)
        lines.append(f"[{section}]")
        lines += [f"{f.name} = {_format_value(getattr(obj, f.name))}" for f in fields(obj)]
        lines.append("")
    return "\n".join(lines)


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        out[key.strip()] = value.strip()
    return out
