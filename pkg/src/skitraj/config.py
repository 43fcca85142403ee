"""INI run configuration."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .bbox import BBox
from .errors import ConfigError, InvalidParams
from .features import DetectorParams
from .geometry import RansacParams
from .optflow import FlowParams
from .render import RenderStyle
from .tracker import MosseConfig


@dataclass(frozen=True)
class PipelineConfig:
    input: Path
    output: Path
    init_box: BBox | None = None
    tracker: str = "mosse"  # "mosse" or "trackfile:<path>"
    camera: str = "estimate"  # "estimate" or "homfile:<path>"
    k: float = 0.9
    sharpen: bool = False
    graphics: tuple[BBox, ...] = ()
    fps: float = 30.0
    render: bool = True
    detector: DetectorParams = field(default_factory=DetectorParams)
    flow: FlowParams = field(default_factory=FlowParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    mosse: MosseConfig = field(default_factory=MosseConfig)
    style: RenderStyle = field(default_factory=RenderStyle)

    @property
    def trackfile(self) -> Path | None:
        return Path(self.tracker.split(":", 1)[1]) if self.tracker.startswith("trackfile:") else None

    @property
    def homfile(self) -> Path | None:
        return Path(self.camera.split(":", 1)[1]) if self.camera.startswith("homfile:") else None

    def check(self) -> None:
        """Paths and bounds that must hold before a run starts."""
        if not 0.0 <= self.k <= 1.0:
            raise ConfigError(f"k must be in [0, 1], got {self.k}")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        if not Path(self.input).is_dir():
            raise ConfigError(f"input directory not found: {self.input}")
        if self.tracker != "mosse" and self.trackfile is None:
            raise ConfigError(f"unknown tracker {self.tracker!r} (use mosse or trackfile:<path>)")
        if self.camera != "estimate" and self.homfile is None:
            raise ConfigError(f"unknown camera source {self.camera!r} (use estimate or homfile:<path>)")
        for p in (self.trackfile, self.homfile):
            if p is not None and not p.is_file():
                raise ConfigError(f"file not found: {p}")
        if self.tracker == "mosse" and self.init_box is None:
            raise ConfigError("the mosse tracker needs init_box")


def _rect(s: str) -> BBox:
    vals = [float(v) for v in s.replace(" ", "").split(",")]
    if len(vals) != 4:
        raise ValueError(f"expected x,y,w,h, got {s!r}")
    return BBox(*vals)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _section(cp, name, cls, conv=None):
    """Build dataclass cls from an INI section, converting by the default's type."""
    if not cp.has_section(name):
        return cls()
    sec = cp[name]
    known = {f.name: f for f in fields(cls)}
    kw = {}
    default = cls()
    for key, raw in sec.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        if conv and key in conv:
            kw[key] = conv[key](raw)
            continue
        cur = getattr(default, key)
        if isinstance(cur, bool):
            kw[key] = _bool(raw)
        elif isinstance(cur, int):
            kw[key] = int(raw)
        elif isinstance(cur, float):
            kw[key] = float(raw)
        elif isinstance(cur, tuple):
            kw[key] = tuple(int(v) for v in raw.split(","))
        else:
            kw[key] = raw
    return cls(**kw)


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Parse an INI run config; relative paths resolve against the config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent
    return config_from_parser(cp, base, overrides)


def config_from_parser(cp: configparser.ConfigParser, base: Path, overrides: dict | None = None) -> PipelineConfig:
    def rel(p: str) -> Path:
        q = Path(p).expanduser()
        return q if q.is_absolute() else base / q

    def source(v: str) -> str:
        kind, sep, p = v.partition(":")
        return f"{kind}:{rel(p)}" if sep else v

    if not cp.has_section("run"):
        raise ConfigError("config needs a [run] section")
    run = dict(cp["run"])
    run.update(overrides or {})
    try:
        for key in ("input", "output"):
            if key not in run:
                raise ConfigError(f"[run] needs {key}")
        cfg = PipelineConfig(
            input=rel(run.pop("input")),
            output=rel(run.pop("output")),
            init_box=_rect(run.pop("init_box")) if "init_box" in run else None,
            tracker=source(run.pop("tracker", "mosse")),
            camera=source(run.pop("camera", "estimate")),
            k=float(run.pop("k", 0.9)),
            sharpen=_bool(run.pop("sharpen", "false")),
            graphics=tuple(_rect(s) for s in run.pop("graphics", "").split(";") if s.strip()),
            fps=float(run.pop("fps", 30.0)),
            render=_bool(run.pop("render", "true")),
            detector=_section(cp, "detector", DetectorParams),
            flow=_section(cp, "flow", FlowParams),
            ransac=_section(cp, "ransac", RansacParams),
            mosse=_section(cp, "mosse", MosseConfig),
            style=_section(cp, "render", RenderStyle),
        )
        if run:
            raise ConfigError(f"[run] unknown keys: {', '.join(sorted(run))}")
    except (ValueError, TypeError, InvalidParams) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    cfg.check()
    return cfg
