"""Run configuration: TOML parsing, validation and CSV record I/O."""

from __future__ import annotations

import csv
import io
import math
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .functionals import FunctionalRecord


@dataclass(frozen=True)
class GridConfig:
    n1: int = 64
    n2: int = 64


@dataclass(frozen=True)
class PhysicsConfig:
    M0: float = 1.0
    n: int = 1
    delta: float = 0.25
    tau: float = 0.1
    taus: tuple = (0.1, 0.05, 0.025, 0.0125)
    C0_cal: float = 1.0
    epsilon: float = 0.1
    pressure: bool = True
    electric: bool = True


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    t_end: float = 3.0
    monitor_every: int = 10
    dealias: bool = True
    qdd_dt: float = 1e-6
    qdd_dt_late: float = 1e-5
    qdd_switch: float = 0.01
    horizon: float = 0.5
    workers: int = 1
    tolerance_scale: float = 1.0


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "modal-perturbation"
    amplitude: float = 0.05
    modes: tuple = ((1, 0), (0, 1))
    phase_amplitude: float = 0.0
    phase_modes: tuple = ()
    band: int = 3
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    preset: str = ""
    dump_fields: bool = False


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


SECTIONS = {
    "grid": GridConfig,
    "physics": PhysicsConfig,
    "integrator": IntegratorConfig,
    "initial": InitialConfig,
    "output": OutputConfig,
}
KINDS = ("ground", "modal-perturbation", "random-band-limited")
PRESETS = ("", "run-sl", "run-qdd", "relax-sweep", "check-inequalities", "decay", "balance")

_LOCATION = re.compile(r"\(at line (\d+), column (\d+)\)")
_HEADER = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=]+?)\s*=")


def _fail(key: str, rule: str):
    raise ValidationError(f"{key} must be {rule}")


def _coerce(section: str, name: str, default, value):
    key = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            _fail(key, "a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(key, "an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(key, "a number")
        if not math.isfinite(value):
            _fail(key, "finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            _fail(key, "a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            _fail(key, "a list")
        if name in ("modes", "phase_modes"):
            out = []
            for item in value:
                if not (isinstance(item, list) and len(item) == 2 and all(isinstance(j, int) and not isinstance(j, bool) for j in item)):
                    _fail(key, "a list of [j1, j2] integer pairs")
                out.append((item[0], item[1]))
            return tuple(out)
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            _fail(key, "a list of numbers")
        return tuple(float(x) for x in value)
    raise AssertionError(key)


def _validate(cfg: RunConfig) -> None:
    g, p, i, ini = cfg.grid, cfg.physics, cfg.integrator, cfg.initial
    for name in ("n1", "n2"):
        n = getattr(g, name)
        if n < 8 or n % 2:
            _fail(f"grid.{name}", "an even integer >= 8")
    for key, value in (("physics.M0", p.M0), ("physics.tau", p.tau), ("physics.delta", p.delta),
                       ("physics.C0_cal", p.C0_cal), ("physics.epsilon", p.epsilon),
                       ("integrator.dt", i.dt), ("integrator.t_end", i.t_end),
                       ("integrator.qdd_dt", i.qdd_dt), ("integrator.qdd_dt_late", i.qdd_dt_late),
                       ("integrator.horizon", i.horizon)):
        if not value > 0:
            _fail(key, "> 0")
    if p.n < 1:
        _fail("physics.n", ">= 1")
    if not p.delta < p.M0:
        _fail("physics.delta", "< physics.M0")
    if not p.taus or any(not t > 0 for t in p.taus):
        _fail("physics.taus", "a nonempty list of values > 0")
    if any(b >= a for a, b in zip(p.taus, p.taus[1:])):
        _fail("physics.taus", "strictly decreasing")
    if i.monitor_every < 1:
        _fail("integrator.monitor_every", ">= 1")
    if i.workers < 1:
        _fail("integrator.workers", ">= 1")
    if i.qdd_switch < 0:
        _fail("integrator.qdd_switch", ">= 0")
    if i.tolerance_scale < 0:
        _fail("integrator.tolerance_scale", ">= 0")
    if i.dt > i.t_end:
        _fail("integrator.dt", "<= integrator.t_end")
    if ini.kind not in KINDS:
        _fail("initial.kind", "one of " + ", ".join(KINDS))
    if ini.amplitude < 0:
        _fail("initial.amplitude", ">= 0")
    if ini.band < 1:
        _fail("initial.band", ">= 1")
    if ini.seed < 0:
        _fail("initial.seed", ">= 0")
    limit = (g.n1 / 3, g.n2 / 3)
    for key, modes in (("initial.modes", ini.modes), ("initial.phase_modes", ini.phase_modes)):
        for j1, j2 in modes:
            if (j1, j2) == (0, 0):
                _fail(key, "free of the zero mode")
            if abs(j1) > limit[0] or abs(j2) > limit[1]:
                _fail(key, "inside the dealiased band |j_i| <= n_i/3")
    if ini.kind == "random-band-limited" and (ini.band > limit[0] or ini.band > limit[1]):
        _fail("initial.band", "inside the dealiased band")
    if cfg.output.preset not in PRESETS:
        _fail("output.preset", "one of " + ", ".join(p for p in PRESETS if p))


def _key_at(text: str, line: int) -> str:
    """Dotted name of the key or table defined on ``line`` (1-based)."""
    lines = text.splitlines()
    section = ""
    for raw in lines[: line - 1]:
        h = _HEADER.match(raw)
        if h:
            section = h.group(1).strip()
    target = lines[line - 1] if line - 1 < len(lines) else ""
    h = _HEADER.match(target)
    if h:
        return h.group(1).strip()
    k = _KEY.match(target)
    name = k.group(1).strip() if k else target.strip()
    return f"{section}.{name}" if section else name


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text; omitted keys take their defaults."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = _LOCATION.search(msg)
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        if "(at end of document)" in msg:
            line = max(1, len(text.splitlines()))
            msg = msg.replace("(at end of document)", "")
        msg = _LOCATION.sub("", msg).strip()
        if "overwrite" in msg and line is not None:
            msg = f"duplicate key {_key_at(text, line)!r}"
        raise ParseError(msg, line, col) from None
    parts = {}
    for section, value in data.items():
        if section not in SECTIONS:
            raise ValidationError(f"unknown section [{section}]")
        if not isinstance(value, dict):
            raise ValidationError(f"{section} must be a section")
        cls = SECTIONS[section]
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        kwargs = {}
        for name, raw in value.items():
            if name not in known:
                raise ValidationError(f"unknown key {section}.{name}")
            kwargs[name] = _coerce(section, name, getattr(defaults, name), raw)
        parts[section] = cls(**kwargs)
    cfg = RunConfig(**parts)
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("config is not valid UTF-8") from exc
    return parse_config(text)


# ------------------------------------------------------------------- records
def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_record_csv(records: Iterable[FunctionalRecord], path: str | Path) -> Path:
    """Write records with full 17-significant-digit precision."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FunctionalRecord.columns())
        for r in records:
            w.writerow([_fmt(x) for x in r.as_row()])
    return path


def read_record_csv(path: str | Path) -> list[FunctionalRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != FunctionalRecord.columns():
        raise ValueError(f"{path}: unexpected header")
    return [FunctionalRecord(*[float(x) for x in row]) for row in rows[1:]]


def write_table_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> Path:
    """Generic CSV writer; floats use 17 significant digits."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if isinstance(x, float) else x for x in row])
    path.write_text(buf.getvalue())
    return path
