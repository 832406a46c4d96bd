"""Sectioned key-value stage configs with ``include`` directives and line-numbered errors.

A line ``include other.conf`` (outside or inside a section) splices in
another file, resolved relative to the including file.  Later values win,
so a small stage file can include a shared base and override a few keys.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

_INCLUDE = re.compile(r"^\s*include\s+(\S.*?)\s*$")
_SECTION = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_OPTION = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


class ConfigError(ValueError):
    def __init__(self, message: str, file: str | Path | None = None, line: int | None = None):
        where = f"{file}:{line}: " if file is not None and line is not None else f"{file}: " if file else ""
        super().__init__(where + message)
        self.file = str(file) if file is not None else None
        self.line = line


def _expand(path: Path, seen: tuple[Path, ...] = ()) -> list[tuple[str, Path, int]]:
    path = path.resolve()
    if path in seen:
        raise ConfigError("include cycle", path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path) from None
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        m = _INCLUDE.match(line)
        if m:
            target = (path.parent / m.group(1)).resolve()
            if not target.exists():
                raise ConfigError(f"included file {m.group(1)!r} not found", path, n)
            out.extend(_expand(target, seen + (path,)))
        else:
            out.append((line, path, n))
    return out


@dataclass
class Config:
    sections: dict[str, dict[str, str]]
    locations: dict[tuple[str, str], tuple[str, int]] = field(default_factory=dict)
    source: Path | None = None

    # ------------------------------------------------------------- access
    def has(self, section: str, key: str | None = None) -> bool:
        if key is None:
            return section in self.sections
        return key in self.sections.get(section, {})

    def where(self, section: str, key: str | None = None):
        if key is not None and (section, key) in self.locations:
            return self.locations[(section, key)]
        return (str(self.source) if self.source else None, None)

    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        f, n = self.where(section, key)
        return ConfigError(message, f, n)

    def get(self, section: str, key: str, default=..., kind=str):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            if default is ...:
                raise self.error(f"missing required key [{section}] {key}", section)
            return default
        try:
            if kind is bool:
                low = raw.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(raw)
                return low in ("1", "true", "yes", "on")
            if kind is list:
                return [v for v in re.split(r"[,\s]+", raw.strip()) if v]
            return kind(raw.strip())
        except ValueError:
            raise self.error(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}", section, key) from None

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = str(value)
        self.locations[(section, key)] = ("<override>", 0)

    def section(self, name: str) -> dict[str, str]:
        return dict(self.sections.get(name, {}))

    def copy(self) -> "Config":
        return Config({s: dict(v) for s, v in self.sections.items()}, dict(self.locations), self.source)

    # ------------------------------------------------------------- identity
    def canonical(self) -> str:
        """Order-, comment- and formatting-independent rendering of every value."""
        def canon(v: str):
            v = v.strip()
            low = v.lower()
            if low in ("true", "yes", "on"):
                return True
            if low in ("false", "no", "off"):
                return False
            try:
                return repr(float(v))
            except ValueError:
                return v

        body = {s: {k: canon(v) for k, v in sorted(kv.items())} for s, kv in sorted(self.sections.items())}
        return json.dumps(body, sort_keys=True, ensure_ascii=False)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]


def parse_config(lines: list[tuple[str, Path, int]], source: Path | None = None) -> Config:
    cp = configparser.ConfigParser(interpolation=None, strict=False, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    text = "\n".join(line for line, _, _ in lines)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        lineno = getattr(e, "lineno", None)
        if lineno is None and getattr(e, "errors", None):
            lineno = e.errors[0][0]
        if lineno is not None and 1 <= lineno <= len(lines):
            _, f, n = lines[lineno - 1]
            msg = str(e).splitlines()[0]
            raise ConfigError(msg.split(": ", 1)[0] if "line" in msg else msg, f, n) from None
        raise ConfigError(str(e), source) from None
    locations = {}
    cur = None
    for line, f, n in lines:
        m = _SECTION.match(line)
        if m:
            cur = m.group(1).strip()
            continue
        m = _OPTION.match(line)
        if m and cur is not None:
            locations[(cur, m.group(1).strip())] = (str(f), n)
    sections = {s: dict(cp[s]) for s in cp.sections()}
    return Config(sections, locations, source)


def load_config(path: str | Path) -> Config:
    path = Path(path)
    return parse_config(_expand(path), path)
