"""Scenario settings files.

Flat ``Section.key = value`` lines, ``#`` starts a comment. Unknown keys are
rejected, omitted keys keep their defaults, and every error names its line.
Speeds accept a ``km/h`` or ``m/s`` suffix and are stored in m/s.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

KMH = 1000.0 / 3600.0


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class World:
    width: float = 1000.0
    height: float = 1000.0
    time_step: float = 0.1
    duration: float = 43200.0
    seed: int = 1


@dataclass
class Nodes:
    count: int = 41
    v_min: float = 1.0 * KMH
    v_max: float = 2.0 * KMH
    range: float = 25.0
    bitrate: float = 1e8
    buffer_capacity: int = 0  # 0 = unbounded


@dataclass
class Board:
    cells: int = 100
    credits: int = 100
    stationary: bool = False


@dataclass
class Mix:
    count: int = 10
    max_mixers: int = 3
    batch_threshold: int = 0
    strict_reply: bool = False


@dataclass
class Traffic:
    pairs: int = 20
    payload_size: int = 1024
    start: float = 0.0
    write_interval: float = 300.0
    read_lag: float = 60.0
    poll_interval: float = 120.0


@dataclass
class Routing:
    mode: str = "direct"


@dataclass
class Scenario:
    name: str = "custom"


@dataclass
class ScenarioConfig:
    scenario: Scenario = field(default_factory=Scenario)
    world: World = field(default_factory=World)
    nodes: Nodes = field(default_factory=Nodes)
    board: Board = field(default_factory=Board)
    mix: Mix = field(default_factory=Mix)
    traffic: Traffic = field(default_factory=Traffic)
    routing: Routing = field(default_factory=Routing)

    @property
    def normal_count(self) -> int:
        return self.nodes.count - 1 - self.mix.count

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()

    def with_seed(self, seed: int) -> "ScenarioConfig":
        # deep copy: callers may tweak sections of the result without touching self
        cfg = copy.deepcopy(self)
        cfg.world.seed = seed
        return cfg


_SECTIONS = {f.name.capitalize(): f.name for f in dataclasses.fields(ScenarioConfig)}
_SPEED_KEYS = {("nodes", "v_min"), ("nodes", "v_max")}


def _section_types(section: str) -> dict[str, type]:
    cls = type(getattr(ScenarioConfig(), section))
    return typing.get_type_hints(cls)


def _convert(raw: str, typ: type, speed: bool) -> object:
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        scale = 1.0
        if speed:
            for suffix, factor in (("km/h", KMH), ("m/s", 1.0)):
                if raw.endswith(suffix):
                    raw, scale = raw[: -len(suffix)].strip(), factor
                    break
        return float(raw) * scale
    return raw


def validate(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    """Return ``(dotted key, message)`` for every range violation."""
    bad = []

    def need(ok: bool, key: str, msg: str):
        if not ok:
            bad.append((key, msg))

    w, n, b, m, t = cfg.world, cfg.nodes, cfg.board, cfg.mix, cfg.traffic
    for key in ("width", "height", "time_step", "duration"):
        need(getattr(w, key) > 0, f"World.{key}", "must be positive")
    need(n.count >= 1, "Nodes.count", "must be positive")
    need(n.v_min > 0, "Nodes.v_min", "must be positive")
    need(n.v_max >= n.v_min, "Nodes.v_max", "must be >= Nodes.v_min")
    need(n.range > 0, "Nodes.range", "must be positive")
    need(n.bitrate > 0, "Nodes.bitrate", "must be positive")
    need(n.buffer_capacity >= 0, "Nodes.buffer_capacity", "must be >= 0")
    need(b.cells >= 1, "Board.cells", "must be >= 1")
    need(b.credits >= 0, "Board.credits", "must be >= 0")
    need(m.count >= 0, "Mix.count", "must be >= 0")
    need(n.count >= 1 + m.count, "Mix.count", "Nodes.count must be >= 1 + Mix.count")
    need(0 <= m.max_mixers <= 3, "Mix.max_mixers", "must be in 0..3")
    need(m.batch_threshold >= 0, "Mix.batch_threshold", "must be >= 0")
    need(not m.strict_reply or m.count >= 1, "Mix.strict_reply", "strict replies need at least one mixer")
    need(t.pairs >= 0, "Traffic.pairs", "must be >= 0")
    need(t.pairs == 0 or cfg.normal_count >= 2, "Traffic.pairs", "pairs need at least two normal nodes")
    need(t.pairs <= max(cfg.normal_count * (cfg.normal_count - 1), 0), "Traffic.pairs", "more pairs than distinct normal-node couples")
    need(t.payload_size >= 0, "Traffic.payload_size", "must be >= 0")
    need(t.start >= 0, "Traffic.start", "must be >= 0")
    for key in ("write_interval", "poll_interval"):
        need(getattr(t, key) > 0, f"Traffic.{key}", "must be positive")
    need(t.read_lag >= 0, "Traffic.read_lag", "must be >= 0")
    need(cfg.routing.mode in ("direct", "epidemic"), "Routing.mode", "must be 'direct' or 'epidemic'")
    return bad


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    cfg = ScenarioConfig()
    lines_of: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'Section.key = value', got {line!r}", lineno, source)
        lhs, raw = (s.strip() for s in line.split("=", 1))
        if lhs.count(".") != 1:
            raise ConfigError(f"key {lhs!r} must look like Section.key", lineno, source)
        sec_name, key = lhs.split(".")
        section = _SECTIONS.get(sec_name.capitalize())
        if section is None:
            raise ConfigError(f"unknown section {sec_name!r}", lineno, source)
        types = _section_types(section)
        if key not in types:
            raise ConfigError(f"unknown key {lhs!r}", lineno, source)
        if not raw:
            raise ConfigError(f"missing value for {lhs}", lineno, source)
        try:
            value = _convert(raw, types[key], (section, key) in _SPEED_KEYS)
        except ValueError as exc:
            raise ConfigError(f"{lhs}: {exc}", lineno, source) from None
        setattr(getattr(cfg, section), key, value)
        lines_of[f"{section.capitalize()}.{key}"] = lineno
    problems = validate(cfg)
    if problems:
        key, msg = problems[0]
        raise ConfigError(f"{key} out of range: {msg}", lines_of.get(key), source)
    return cfg


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", None, str(path)) from None
    return parse_config_text(text, str(path))


def serialize(cfg: ScenarioConfig) -> str:
    out = []
    for sec in dataclasses.fields(cfg):
        obj = getattr(cfg, sec.name)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{sec.name.capitalize()}.{f.name} = {v!r}" if isinstance(v, float)
                       else f"{sec.name.capitalize()}.{f.name} = {v}")
    return "\n".join(out) + "\n"


BUNDLED = ("scenario1", "scenario2")


def bundled_path(name: str):
    if name not in BUNDLED:
        raise KeyError(name)
    return resources.files("pbbsim") / "scenarios" / f"{name}.ini"


def bundled(name: str) -> ScenarioConfig:
    ref = bundled_path(name)
    return parse_config_text(ref.read_text(encoding="utf-8"), f"{name}.ini")
