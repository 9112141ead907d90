"""Flat ``section.key = value`` configuration files and command-line overrides.

Sections map onto dataclasses: ``trainer`` -> TrainConfig, ``synth`` -> SynthConfig,
``lsr`` -> LsrConfig, ``sweep`` -> SweepConfig. Blank lines and ``#`` comments are
ignored. Tuples are comma separated, ``none`` clears optional values.
"""

from dataclasses import dataclass, fields, replace

from .baselines import LsrConfig
from .data import SynthConfig
from .errors import ConfigError
from .trainer import TrainConfig


@dataclass(frozen=True)
class SweepConfig:
    seeds: tuple = (0, 1, 2, 3, 4)
    sigmas: tuple = (0.0, 0.05, 0.1)


SECTIONS = {"trainer": TrainConfig, "synth": SynthConfig, "lsr": LsrConfig, "sweep": SweepConfig}
# keys whose value may be ``none``
OPTIONAL = {"trainer.tau", "synth.segment_labels"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class Settings:
    trainer: TrainConfig = TrainConfig()
    synth: SynthConfig = SynthConfig()
    lsr: LsrConfig = LsrConfig()
    sweep: SweepConfig = SweepConfig()


def _number(tok):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def _parse_value(key, default, raw):
    raw = raw.strip()
    if raw.lower() in ("none", "null") and key in OPTIONAL:
        return None
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        if isinstance(default, int) or (default is None and key == "trainer.tau"):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple) or default is None:
            return tuple(_number(t) for t in raw.split(",") if t.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def defaults():
    """Ordered (key, default) pairs for every accepted key."""
    out = []
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            out.append((f"{section}.{f.name}", f.default))
    return out


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def read_pairs(path):
    """Parse a config file into (key, raw value) pairs."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            pairs.append((key.strip(), val))
    return pairs


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, val = text.split("=", 1)
    return key.strip(), val


def build_settings(pairs=(), base=None):
    """Apply (key, raw) pairs in order on top of ``base`` (defaults if omitted)."""
    settings = base or Settings()
    known = dict(defaults())
    updates = {s: {} for s in SECTIONS}
    for key, raw in pairs:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        section, name = key.split(".", 1)
        updates[section][name] = _parse_value(key, known[key], raw)
    try:
        parts = {s: replace(getattr(settings, s), **updates[s]) for s in SECTIONS}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    parts["trainer"].validate()
    return Settings(**parts)


def load_settings(path=None, overrides=()):
    pairs = read_pairs(path) if path else []
    pairs.extend(parse_override(o) for o in overrides)
    return build_settings(pairs)


def format_settings(settings):
    lines = []
    for section in SECTIONS:
        obj = getattr(settings, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"
