"""Experiment configuration: an INI-style file with line-numbered errors.

configparser drops line numbers once a file is read, so the small grammar is
parsed here directly: ``[section]`` headers, ``key = value`` lines and ``#``
comments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _int(v):
    return int(v, 10)


def _floats(v):
    items = [x.strip() for x in v.split(",") if x.strip()]
    if not items:
        raise ValueError("empty list")
    return [_float(x) for x in items]


def _str(v):
    if not v:
        raise ValueError("empty value")
    return v


# section -> key -> (parser, default)
SCHEMA = {
    "complex": {
        "base": (_str, None),
        "weights": (_floats, None),
    },
    "group": {
        "kind": (_str, "lattice"),
        "rank": (_int, None),
        "order": (_int, None),
    },
    "morse": {
        "pattern": (_str, "none"),
        "c": (_int, 1),
        "alpha": (_float, (math.sqrt(5.0) - 1.0) / 2.0),
        "amplitude": (_float, 0.3),
        "path": (_str, None),
    },
    "run": {
        "s": (_float, 1.0),
        "t_list": (_floats, [1.0]),
        "window_radius": (_int, 0),
        "cheb_eps": (_float, 1e-8),
        "folner_kmin": (_int, 10),
        "folner_kmax": (_int, 10),
        "ker_tol": (_float, 1e-8),
        "rank_tol": (_float, 1e-10),
        "seed": (_int, 0),
        "output": (_str, "out"),
        "tol": (_float, 1e-6),
        "samples": (_int, 64),
        "pairs": (_int, 100),
        "op_radius": (_int, 1),
    },
}

PATTERNS = ("none", "invariant_zigzag", "quasiperiodic", "file")


@dataclass
class ExperimentConfig:
    complex: dict
    group: dict
    morse: dict
    run: dict
    source_dir: Path = field(default_factory=Path.cwd)
    lines: dict = field(default_factory=dict)  # "section.key" -> line number

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.source_dir / p

    @property
    def folner_range(self) -> range:
        r = self.run
        return range(min(r["folner_kmin"], r["folner_kmax"]), r["folner_kmax"] + 1)


def _error(lineno, msg):
    where = f"line {lineno}: " if lineno else ""
    return ConfigError(f"{where}{msg}")


def parse_config(text: str, source_dir: Path | None = None) -> ExperimentConfig:
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    lines: dict[str, int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise _error(lineno, f"malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise _error(lineno, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise _error(lineno, f"expected 'key = value', got {line!r}")
        if section is None:
            raise _error(lineno, "key outside of any section")
        key, val = (x.strip() for x in line.split("=", 1))
        name = f"{section}.{key}"
        if key not in SCHEMA[section]:
            raise _error(lineno, f"unknown key {name}")
        if name in lines:
            raise _error(lineno, f"duplicate key {name} (first set on line {lines[name]})")
        parser, _ = SCHEMA[section][key]
        try:
            values[section][key] = parser(val)
        except ValueError as exc:
            raise _error(lineno, f"{name}: invalid value {val!r} ({exc})") from None
        lines[name] = lineno
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            values[section].setdefault(key, default)
    cfg = ExperimentConfig(
        values["complex"], values["group"], values["morse"], values["run"],
        source_dir or Path.cwd(), lines,
    )
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig):
    at = lambda name: cfg.lines.get(name)
    if cfg.complex["base"] is None:
        raise _error(None, "complex.base is required")
    g = cfg.group
    if g["kind"] not in ("lattice", "cyclic"):
        raise _error(at("group.kind"), f"group.kind must be lattice or cyclic, got {g['kind']!r}")
    if g["kind"] == "cyclic":
        if g["rank"] is not None:
            raise _error(at("group.rank"), "group.rank is not allowed with group.kind = cyclic")
        if g["order"] is None or g["order"] < 1:
            raise _error(at("group.order"), "group.order >= 1 is required for a cyclic group")
    else:
        if g["order"] is not None:
            raise _error(at("group.order"), "group.order is not allowed with group.kind = lattice")
        if g["rank"] is not None and g["rank"] < 1:
            raise _error(at("group.rank"), "group.rank must be >= 1")
    m = cfg.morse
    if m["pattern"] not in PATTERNS:
        raise _error(at("morse.pattern"), f"morse.pattern must be one of {', '.join(PATTERNS)}")
    if m["pattern"] == "file" and m["path"] is None:
        raise _error(at("morse.pattern"), "morse.path is required for morse.pattern = file")
    r = cfg.run
    checks = [
        ("s", r["s"] >= 0, "must be >= 0"),
        ("t_list", all(t >= 0 for t in r["t_list"]), "entries must be >= 0"),
        ("window_radius", r["window_radius"] >= 0, "must be >= 0 (0 = automatic)"),
        ("cheb_eps", r["cheb_eps"] > 0, "must be > 0"),
        ("folner_kmin", r["folner_kmin"] >= 0, "must be >= 0"),
        ("folner_kmax", r["folner_kmax"] >= 1, "must be >= 1"),
        ("ker_tol", 0 < r["ker_tol"] < 1, "must lie in (0, 1)"),
        ("rank_tol", 0 < r["rank_tol"] < 1, "must lie in (0, 1)"),
        ("tol", r["tol"] >= 0, "must be >= 0"),
        ("samples", r["samples"] >= 16, "must be >= 16"),
        ("pairs", r["pairs"] >= 1, "must be >= 1"),
        ("op_radius", r["op_radius"] >= 0, "must be >= 0"),
        ("seed", r["seed"] >= 0, "must be >= 0"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise _error(at(f"run.{key}"), f"run.{key} {msg}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path} is not valid UTF-8") from None
    return parse_config(text, path.resolve().parent)
