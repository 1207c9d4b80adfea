"""Failure classification and the broken-system recovery ladder.

Failures fall into three classes: transient (come back later), user
action (the user's own input failed; report the tool's diagnostic and
stop) and broken system (the managed distribution is misconfigured; try
to recover without bothering the user).  Broken-system failures walk a
fixed ladder: cached solution, registered workarounds, fallback chain
alternatives, and finally a gated workspace repair.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import logging
import os
import re
import shutil
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .cleanroom import CommandResult, ShellSession
from .configfile import ConfigDocument
from .errors import CacheUnwritable, CaseNotClear, JournalWriteFailed

log = logging.getLogger(__name__)


class ErrorClass(Enum):
    Transient = "transient"
    UserAction = "user-action"
    SystemBroken = "system-broken"


@dataclass(frozen=True)
class ConfigKey:
    release: str
    configuration: str
    platform: str

    def __post_init__(self):
        if not (self.release and self.configuration and self.platform):
            raise ValueError("config key components must be non-empty")

    def as_text(self) -> str:
        return f"{self.release}/{self.configuration}/{self.platform}"


@dataclass
class FailureEvent:
    step_id: str
    tool: str | None
    result: CommandResult
    resource_key: str | None = None
    config_key: ConfigKey | None = None
    user_input: str | None = None    # path/name of user-authored input, if any

    def first_error_line(self) -> str:
        for text in (self.result.stderr_text(), self.result.stdout_text()):
            for line in text.splitlines():
                if line.strip():
                    return line.strip()
        return ""


# -- classification ------------------------------------------------------------

@dataclass
class ClassificationRules:
    """Sandbox- or site-supplied hints for the classifier."""

    transient_resource_patterns: tuple[str, ...] = ("credentials/*", "*token*")
    transient_output_patterns: tuple[str, ...] = ("*no credential*", "*unreachable*",
                                                  "*token missing*")
    transient_hints: dict[str, str] = field(default_factory=dict)


DEFAULT_RULES = ClassificationRules()


def classify(event: FailureEvent, rules: ClassificationRules | None = None) -> ErrorClass:
    """Map a failure to exactly one error class.

    Anything unclassifiable defaults to SystemBroken so the recovery
    ladder gets a chance; if the ladder fails, the original evidence is
    surfaced unmodified.
    """
    rules = rules or DEFAULT_RULES
    first = event.first_error_line().lower()
    if event.resource_key and any(
            fnmatch.fnmatchcase(event.resource_key, p)
            for p in rules.transient_resource_patterns):
        return ErrorClass.Transient
    if any(fnmatch.fnmatchcase(first, p) for p in rules.transient_output_patterns):
        return ErrorClass.Transient
    if event.user_input is not None:
        return ErrorClass.UserAction
    return ErrorClass.SystemBroken


def resource_key_from_output(result: CommandResult) -> str | None:
    """Tools report broken resources as 'MISSING <key>' / 'BADHASH <key>' /
    'LOCKED <key>' lines; the first such line names the failing resource."""
    for text in (result.stdout_text(), result.stderr_text()):
        for line in text.splitlines():
            m = re.match(r"\s*(MISSING|BADHASH|LOCKED)\s+(\S+)", line)
            if m:
                return m.group(2)
    return None


# -- problem signatures --------------------------------------------------------

_PATH_RE = re.compile(r"(?:/[\w.+-]+)+/([\w.+-]+)")
_TS_RE = re.compile(r"\b\d{4}-\d{2}-\d{2}[T ]?\d{2}:\d{2}:\d{2}(?:\.\d+)?\b"
                    r"|\b\d{2}:\d{2}:\d{2}\b")
_PID_RE = re.compile(r"\b(pid[=:]?\s*)\d+\b|\[\d+\]")


def canonicalize_error_line(line: str) -> str:
    line = _PATH_RE.sub(lambda m: m.group(1), line)
    line = _TS_RE.sub("<TIME>", line)
    line = _PID_RE.sub(lambda m: (m.group(1) or "") + "<PID>", line)
    return line.strip()


def problem_signature(event: FailureEvent) -> str:
    """Stable hash over the failure's identifying evidence."""
    basis = json.dumps([
        event.tool or "",
        event.result.exit_code,
        canonicalize_error_line(event.first_error_line()),
        event.resource_key or "",
    ])
    return hashlib.sha256(basis.encode()).hexdigest()[:24]


# -- workarounds ---------------------------------------------------------------

@dataclass(frozen=True)
class Workaround:
    key_pattern: str          # release/configuration/platform glob, per component
    match: str                # substring of the first error line; "*" matches any event
    actions: tuple[str, ...]  # command templates run in the session
    description: str
    name: str = ""

    def __post_init__(self):
        if not self.actions:
            raise ValueError("workaround needs at least one action")
        if not self.description:
            raise ValueError("workaround needs a description")

    def key_matches(self, key: ConfigKey) -> bool:
        parts = self.key_pattern.split("/")
        if len(parts) != 3:
            return False
        actual = (key.release, key.configuration, key.platform)
        return all(fnmatch.fnmatchcase(a, p) for a, p in zip(actual, parts))

    def event_matches(self, event: FailureEvent) -> bool:
        if self.match == "*":
            return True
        return self.match in event.first_error_line() or (
            event.resource_key is not None and self.match in event.resource_key)

    @property
    def preventive(self) -> bool:
        return self.match == "*"


def load_workarounds(doc: ConfigDocument) -> list[Workaround]:
    entries = []
    for section in doc.find("workaround"):
        entries.append(Workaround(
            name=section.name,
            key_pattern=section.get("key", "*/*/*") or "*/*/*",
            match=section.get("match", "*") or "*",
            actions=tuple(section.get_all("action")),
            description=section.get("description", "") or "",
        ))
    # Exact keys sort before wildcard keys; registry order breaks ties.
    def specificity(pair):
        idx, wa = pair
        return (wa.key_pattern.count("*"), idx)
    return [wa for _, wa in sorted(enumerate(entries), key=specificity)]


def lookup_workarounds(registry: list[Workaround], key: ConfigKey,
                       event: FailureEvent) -> list[Workaround]:
    return [wa for wa in registry
            if not wa.preventive and wa.key_matches(key) and wa.event_matches(event)]


# -- fallback chains -----------------------------------------------------------

@dataclass(frozen=True)
class AlternativeResource:
    location: str              # directory holding the same resource layout


@dataclass(frozen=True)
class AlternativeSource:
    query: str                 # command template producing the resource


@dataclass(frozen=True)
class AcceptDefault:
    value: str                 # content written to the resource destination


Alternative = AlternativeResource | AlternativeSource | AcceptDefault


@dataclass(frozen=True)
class FallbackChain:
    alternatives: tuple[Alternative, ...]

    def __post_init__(self):
        defaults = [i for i, a in enumerate(self.alternatives)
                    if isinstance(a, AcceptDefault)]
        if len(defaults) > 1:
            raise ValueError("at most one AcceptDefault per chain")
        if defaults and defaults[0] != len(self.alternatives) - 1:
            raise ValueError("AcceptDefault must be the last alternative")


# -- solution cache ------------------------------------------------------------

@dataclass
class SolutionRecord:
    signature: str
    kind: str          # workaround | alternative_resource | alternative_source |
                       # accept_default | repair
    payload: str       # enough to replay (workaround name, location, ...)
    hit_count: int = 1
    last_used: float = 0.0


class SolutionCache:
    """File-backed map from problem signature to the fix that worked.

    Single writer, atomic replace.  A corrupt file is quarantined aside
    and never fatal.
    """

    HEADER = "startkit-solutions v1"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: dict[str, SolutionRecord] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            lines = self.path.read_text().splitlines()
            if not lines or lines[0] != self.HEADER:
                raise ValueError("bad header")
            for line in lines[1:]:
                if not line.strip():
                    continue
                sig, kind, hits, used, payload = line.split("\t", 4)
                self._records[sig] = SolutionRecord(sig, kind, payload,
                                                    int(hits), float(used))
        except (ValueError, OSError) as exc:
            quarantine = self.path.with_suffix(self.path.suffix + ".corrupt")
            try:
                self.path.replace(quarantine)
            except OSError:
                pass
            log.warning("solution cache unreadable (%s); quarantined to %s",
                        exc, quarantine)
            self._records = {}

    def _flush(self) -> None:
        lines = [self.HEADER]
        for rec in self._records.values():
            lines.append("\t".join([rec.signature, rec.kind, str(rec.hit_count),
                                    repr(rec.last_used), rec.payload]))
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        try:
            tmp.write_text("\n".join(lines) + "\n")
            tmp.replace(self.path)
        except OSError as exc:
            raise CacheUnwritable(str(exc)) from exc

    def lookup(self, signature: str) -> SolutionRecord | None:
        return self._records.get(signature)

    def record(self, signature: str, kind: str, payload: str) -> SolutionRecord:
        rec = self._records.get(signature)
        if rec and rec.kind == kind and rec.payload == payload:
            rec.hit_count += 1
        else:
            rec = SolutionRecord(signature, kind, payload)
            self._records[signature] = rec
        rec.last_used = time.time()
        try:
            self._flush()
        except CacheUnwritable as exc:
            log.warning("solution not cached: %s", exc)
        return rec


# -- workspace repair ----------------------------------------------------------

@dataclass(frozen=True)
class RepairCase:
    name: str
    path_glob: str             # resource key pattern the case covers
    content_pattern: str       # regex the broken file's content must match
    action: str                # "remove" | "restore:<source template>"
    description: str


@dataclass
class RepairReport:
    case: str
    mutations: list[str]
    journal: Path


def repair_workspace(root: Path, resource_key: str, cases: list[RepairCase],
                     journal_path: Path, context: dict[str, str]) -> RepairReport:
    """Apply a registered repair, journaling every mutation first.

    Repairs run only on an exact case match: the resource must match the
    case's path pattern and its content the case's content pattern.
    Anything less clear is refused with zero mutations.
    """
    target = root / resource_key
    for case in cases:
        if not fnmatch.fnmatchcase(resource_key, case.path_glob):
            continue
        if not target.exists():
            continue
        try:
            content = target.read_text(errors="replace")
        except OSError:
            continue
        if not re.search(case.content_pattern, content):
            continue
        return _apply_repair(case, target, journal_path, context)
    raise CaseNotClear(f"no registered repair case matches {resource_key!r}")


def _apply_repair(case: RepairCase, target: Path, journal_path: Path,
                  context: dict[str, str]) -> RepairReport:
    mutations: list[str] = []
    backup = target.with_name(target.name + ".repaired")

    def journal(line: str) -> None:
        try:
            with open(journal_path, "a") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise JournalWriteFailed(str(exc)) from exc

    if case.action == "remove":
        journal(f"MOVE {target} {backup}")
        target.replace(backup)
        mutations.append(f"moved {target} -> {backup}")
    elif case.action.startswith("restore:"):
        source = Path(case.action[len("restore:"):].format(**context))
        journal(f"MOVE {target} {backup}")
        target.replace(backup)
        mutations.append(f"moved {target} -> {backup}")
        journal(f"COPY {source} {target}")
        shutil.copy2(source, target)
        mutations.append(f"copied {source} -> {target}")
    else:
        raise CaseNotClear(f"repair case {case.name!r} has unknown action")
    return RepairReport(case=case.name, mutations=mutations, journal=journal_path)


# -- outcome & engine ----------------------------------------------------------

@dataclass
class Outcome:
    resolved: bool
    how: str = ""
    default_value: str | None = None
    attempts: list[str] = field(default_factory=list)
    root_cause: str | None = None

    @property
    def resolved_with_default(self) -> bool:
        return self.resolved and self.default_value is not None


@dataclass
class ResourceSpec:
    """Where a resource lives relative to the site root."""
    key: str
    relpath: str


class FaultEngine:
    """Owns the recovery ladder for one site/config."""

    def __init__(
        self,
        config_key: ConfigKey,
        site_root: str | Path,
        workarounds: list[Workaround] | None = None,
        chains: list[tuple[str, FallbackChain]] | None = None,  # (resource glob, chain)
        cache: SolutionCache | None = None,
        repair_cases: list[RepairCase] | None = None,
        rules: ClassificationRules | None = None,
        journal_path: str | Path | None = None,
    ):
        self.config_key = config_key
        self.site_root = Path(site_root)
        self.workarounds = workarounds or []
        self.chains = chains or []
        self.cache = cache
        self.repair_cases = repair_cases or []
        self.rules = rules or DEFAULT_RULES
        self.journal_path = Path(journal_path) if journal_path else \
            self.site_root / "repair.journal"

    # ladder pieces ----------------------------------------------------------

    def preventive_workarounds(self) -> list[Workaround]:
        return [wa for wa in self.workarounds
                if wa.preventive and wa.key_matches(self.config_key)]

    def chain_for(self, resource_key: str | None) -> FallbackChain | None:
        if resource_key is None:
            return None
        for pattern, chain in self.chains:
            if fnmatch.fnmatchcase(resource_key, pattern):
                return chain
        return None

    def transient_hint(self, event: FailureEvent) -> str:
        if event.resource_key:
            for pattern, hint in self.rules.transient_hints.items():
                if fnmatch.fnmatchcase(event.resource_key, pattern):
                    return hint
        return ""

    def _context(self) -> dict[str, str]:
        return {"site": str(self.site_root), "release": self.config_key.release,
                "mode": self.config_key.configuration}

    def _resource_dest(self, resource_key: str) -> Path:
        return self.site_root / self.config_key.release / resource_key

    # attempt executors ------------------------------------------------------

    def _try_workaround(self, session: ShellSession, wa: Workaround) -> bool:
        ctx = self._context()
        for action in wa.actions:
            result = session.execute(action.format(**ctx))
            if result.exit_code != 0:
                return False
        return True

    def _try_alternative(self, session: ShellSession, alt: Alternative,
                         resource_key: str | None) -> tuple[bool, str, str]:
        """Returns (ok, kind, payload)."""
        ctx = self._context()
        if isinstance(alt, AlternativeResource):
            if resource_key is None:
                return False, "alternative_resource", alt.location
            src = Path(alt.location.format(**ctx)) / self.config_key.release / resource_key
            dest = self._resource_dest(resource_key)
            if not src.is_file():
                return False, "alternative_resource", alt.location
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copy2(src, dest)
            return True, "alternative_resource", alt.location
        if isinstance(alt, AlternativeSource):
            result = session.execute(alt.query.format(**ctx))
            ok = result.exit_code == 0 and (
                resource_key is None or self._resource_dest(resource_key).exists())
            return ok, "alternative_source", alt.query
        if isinstance(alt, AcceptDefault):
            if resource_key is None:
                return True, "accept_default", alt.value
            dest = self._resource_dest(resource_key)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_text(alt.value)
            return True, "accept_default", alt.value
        return False, "unknown", ""

    def _replay_cached(self, session: ShellSession, rec: SolutionRecord,
                       resource_key: str | None) -> bool:
        if rec.kind == "workaround":
            wa = next((w for w in self.workarounds if w.name == rec.payload), None)
            return wa is not None and self._try_workaround(session, wa)
        if rec.kind == "alternative_resource":
            ok, _, _ = self._try_alternative(
                session, AlternativeResource(rec.payload), resource_key)
            return ok
        if rec.kind == "alternative_source":
            ok, _, _ = self._try_alternative(
                session, AlternativeSource(rec.payload), resource_key)
            return ok
        if rec.kind == "accept_default":
            ok, _, _ = self._try_alternative(
                session, AcceptDefault(rec.payload), resource_key)
            return ok
        if rec.kind == "repair":
            try:
                repair_workspace(self.site_root / self.config_key.release,
                                 resource_key or "", self.repair_cases,
                                 self.journal_path, self._context())
                return True
            except (CaseNotClear, JournalWriteFailed):
                return False
        return False

    # the ladder -------------------------------------------------------------

    def resolve(self, session: ShellSession, event: FailureEvent,
                chain: FallbackChain | None = None) -> Outcome:
        """Walk the ladder: cache, workarounds, chain alternatives, repair.

        Stops at the first success and records the winning resolution in
        the cache so the same problem is fixed faster next time.
        """
        attempts: list[str] = []
        sig = problem_signature(event)
        key = event.config_key or self.config_key
        resource_key = event.resource_key
        chain = chain if chain is not None else self.chain_for(resource_key)

        if self.cache is not None:
            rec = self.cache.lookup(sig)
            if rec is not None:
                attempts.append(f"cache:{rec.kind}:{rec.payload}")
                if self._replay_cached(session, rec, resource_key):
                    self.cache.record(sig, rec.kind, rec.payload)
                    return Outcome(True, how=f"cached {rec.kind} ({rec.payload})",
                                   default_value=rec.payload
                                   if rec.kind == "accept_default" else None,
                                   attempts=attempts)

        for wa in lookup_workarounds(self.workarounds, key, event):
            attempts.append(f"workaround:{wa.name}")
            if self._try_workaround(session, wa):
                if self.cache is not None:
                    self.cache.record(sig, "workaround", wa.name)
                return Outcome(True, how=f"workaround {wa.name} ({wa.description})",
                               attempts=attempts)

        if chain is not None:
            for alt in chain.alternatives:
                ok, kind, payload = self._try_alternative(session, alt, resource_key)
                attempts.append(f"{kind}:{payload}")
                if ok:
                    if self.cache is not None:
                        self.cache.record(sig, kind, payload)
                    if isinstance(alt, AcceptDefault):
                        log.warning("accepted default for %s; hoping for the best",
                                    resource_key)
                        return Outcome(True, how="accepted default",
                                       default_value=alt.value, attempts=attempts)
                    return Outcome(True, how=f"{kind} {payload}", attempts=attempts)

        if resource_key is not None and self.repair_cases:
            attempts.append("repair")
            try:
                report = repair_workspace(self.site_root / key.release, resource_key,
                                          self.repair_cases, self.journal_path,
                                          self._context())
                if self.cache is not None:
                    self.cache.record(sig, "repair", report.case)
                return Outcome(True, how=f"workspace repair ({report.case})",
                               attempts=attempts)
            except CaseNotClear:
                pass
            except JournalWriteFailed as exc:
                attempts.append(f"repair-refused:{exc}")

        root = self._root_cause(event)
        return Outcome(False, attempts=attempts, root_cause=root)

    def _root_cause(self, event: FailureEvent) -> str:
        # A transient cause hiding behind a tool failure is named
        # directly rather than only the tool's exit status.
        if classify(event, self.rules) is ErrorClass.Transient and event.resource_key:
            return f"transient resource unavailable: {event.resource_key}"
        line = event.first_error_line()
        return line or f"exit code {event.result.exit_code}"
