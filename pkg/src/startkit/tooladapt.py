"""Declarative adapters around external tools.

A tool is never invoked until the adapter has located it and verified
its setup, repairing as needed.  The escalation is bounded and always
ordered: probe, then one setup pass, then one repair pass.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from enum import Enum

from .cleanroom import ShellSession
from .configfile import ConfigDocument
from .errors import DuplicateTool, UnknownTool


@dataclass(frozen=True)
class ToolSpec:
    name: str
    probe_command: str                      # may reference {path}
    expected_probe_pattern: str             # glob over the first stdout line
    search_locations: tuple[str, ...]       # checked in order; "PATH" means the session PATH
    setup_steps: tuple[str, ...] = ()
    repair_steps: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.search_locations:
            raise ValueError(f"tool {self.name!r} has no search locations")

    @classmethod
    def from_section(cls, section) -> "ToolSpec":
        return cls(
            name=section.name,
            probe_command=section.get("probe", "{path} --version") or "",
            expected_probe_pattern=section.get("expect", "*") or "*",
            search_locations=tuple(section.get_all("search")),
            setup_steps=tuple(section.get_all("setup")),
            repair_steps=tuple(section.get_all("repair")),
        )


class ToolState(Enum):
    Ready = "ready"
    RepairedThenReady = "repaired-then-ready"
    Unavailable = "unavailable"


@dataclass
class ToolStatus:
    state: ToolState
    evidence: list[tuple[str, str]] = field(default_factory=list)

    @property
    def usable(self) -> bool:
        return self.state in (ToolState.Ready, ToolState.RepairedThenReady)


@dataclass
class LocationReport:
    found: bool
    location: str | None            # directory, or "PATH"
    executable: str | None          # full path to the tool
    searched: list[str] = field(default_factory=list)


@dataclass
class ToolHandle:
    spec: ToolSpec


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, ToolHandle] = {}

    def register(self, spec: ToolSpec) -> ToolHandle:
        if spec.name in self._tools:
            raise DuplicateTool(f"tool {spec.name!r} already registered")
        handle = ToolHandle(spec)
        self._tools[spec.name] = handle
        return handle

    def lookup(self, name: str) -> ToolHandle:
        try:
            return self._tools[name]
        except KeyError:
            raise UnknownTool(f"no tool named {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self._tools)

    def load(self, doc: ConfigDocument) -> list[ToolHandle]:
        return [self.register(ToolSpec.from_section(s)) for s in doc.find("tool")]


def locate(session: ShellSession, tool: ToolHandle) -> LocationReport:
    """Find the first search location holding an executable for the tool."""
    spec = tool.spec
    searched: list[str] = []
    for loc in spec.search_locations:
        searched.append(loc)
        if loc == "PATH":
            result = session.execute(f"command -v '{spec.name}'")
            if result.exit_code == 0:
                path = result.stdout_text().strip()
                return LocationReport(True, "PATH", path, searched)
        else:
            candidate = f"{loc.rstrip('/')}/{spec.name}"
            result = session.execute(f"test -x '{candidate}'")
            if result.exit_code == 0:
                return LocationReport(True, loc, candidate, searched)
    return LocationReport(False, None, None, searched)


def _probe(session: ShellSession, tool: ToolHandle, executable: str) -> tuple[bool, str]:
    spec = tool.spec
    cmd = spec.probe_command.format(path=executable, name=spec.name)
    result = session.execute(cmd)
    first_line = result.stdout_text().splitlines()[0] if result.stdout else ""
    ok = result.exit_code == 0 and fnmatch.fnmatchcase(
        first_line, spec.expected_probe_pattern)
    return ok, first_line


def ensure(session: ShellSession, tool: ToolHandle) -> ToolStatus:
    """Locate, probe, and if needed set up and repair the tool.

    Escalation order is fixed: probe, setup, re-probe, repair, re-probe.
    At most one setup and one repair pass are attempted; anything deeper
    is a broken-system failure for the fault engine.
    """
    spec = tool.spec
    evidence: list[tuple[str, str]] = []
    report = locate(session, tool)
    if not report.found:
        evidence.append(("locate", f"not found; searched {', '.join(report.searched)}"))
        return ToolStatus(ToolState.Unavailable, evidence)
    evidence.append(("locate", f"{report.executable} via {report.location}"))

    ok, banner = _probe(session, tool, report.executable)
    evidence.append(("probe", banner if ok else f"mismatch: {banner!r}"))
    if ok:
        return ToolStatus(ToolState.Ready, evidence)

    repaired = False
    for phase, steps in (("setup", spec.setup_steps), ("repair", spec.repair_steps)):
        for step in steps:
            cmd = step.format(path=report.executable, name=spec.name)
            result = session.execute(cmd)
            evidence.append((phase, f"{cmd} -> exit {result.exit_code}"))
        if steps:
            ok, banner = _probe(session, tool, report.executable)
            evidence.append(("probe", banner if ok else f"mismatch: {banner!r}"))
            if ok:
                repaired = True
                break
    if repaired:
        return ToolStatus(ToolState.RepairedThenReady, evidence)
    return ToolStatus(ToolState.Unavailable, evidence)
