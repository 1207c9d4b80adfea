"""Versioned, line-oriented text configuration files.

One format serves environment profiles, tool specs, recipe declarations
and the workaround registry.  Grammar:

    version = 1
    [section-kind section-name]
    key = value
    key = value        # keys may repeat; order is preserved

Blank lines and lines starting with '#' are ignored.  The version line
must appear before the first section.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigFormatError

FORMAT_VERSION = 1


@dataclass
class ConfigSection:
    kind: str
    name: str
    entries: list[tuple[str, str]] = field(default_factory=list)

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def get_all(self, key: str) -> list[str]:
        return [v for k, v in self.entries if k == key]


@dataclass
class ConfigDocument:
    version: int
    sections: list[ConfigSection]

    def find(self, kind: str, name: str | None = None) -> list[ConfigSection]:
        return [
            s for s in self.sections
            if s.kind == kind and (name is None or s.name == name)
        ]


def parse_config(text: str, source: str = "<string>") -> ConfigDocument:
    version = None
    sections: list[ConfigSection] = []
    current: ConfigSection | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            parts = line[1:-1].split(None, 1)
            if not parts:
                raise ConfigFormatError(f"{source}:{lineno}: empty section header")
            kind = parts[0]
            name = parts[1].strip() if len(parts) > 1 else ""
            current = ConfigSection(kind=kind, name=name)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigFormatError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key != "version":
                raise ConfigFormatError(
                    f"{source}:{lineno}: 'version = N' must precede the first section"
                )
            try:
                version = int(value)
            except ValueError:
                raise ConfigFormatError(f"{source}:{lineno}: bad version {value!r}") from None
            continue
        current.entries.append((key, value))
    if version is None:
        raise ConfigFormatError(f"{source}: missing 'version =' header")
    if version > FORMAT_VERSION:
        raise ConfigFormatError(f"{source}: unsupported config version {version}")
    return ConfigDocument(version=version, sections=sections)


def load_config(path: str | Path) -> ConfigDocument:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def dump_config(doc: ConfigDocument) -> str:
    lines = [f"version = {doc.version}", ""]
    for section in doc.sections:
        header = f"[{section.kind} {section.name}]" if section.name else f"[{section.kind}]"
        lines.append(header)
        for key, value in section.entries:
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
