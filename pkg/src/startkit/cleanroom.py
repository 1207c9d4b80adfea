"""Controlled background shell with a sanitized environment.

The kit never runs task commands in the caller's shell.  Instead it
spawns a POSIX shell as a child process, wired up through pipes, and
frames every command with a unique sentinel line so that output and exit
status can be captured reliably.  The environment handed to the shell is
either scrubbed of managed settings (non-expert mode) or taken from the
user with only the gaps filled in (expert mode).
"""

from __future__ import annotations

import fnmatch
import logging
import os
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .configfile import ConfigDocument, load_config
from .errors import (
    BadBaseDir,
    CommandTimeout,
    InvalidProfile,
    SessionLost,
    SpawnFailed,
)

log = logging.getLogger(__name__)

DEFAULT_SHELL = "/bin/sh"
DEFAULT_TIMEOUT = 300.0


class ExpertMode(Enum):
    NonExpert = "non-expert"
    Expert = "expert"


@dataclass(frozen=True)
class EnvironmentProfile:
    """What to scrub from, and what to provide to, a session environment."""

    managed_var_patterns: tuple[str, ...]
    managed_path_patterns: tuple[str, ...]
    defaults: dict[str, str] = field(default_factory=dict)
    path_vars: frozenset[str] = frozenset({"PATH"})
    shell: str = DEFAULT_SHELL

    def validate(self, mode: ExpertMode = ExpertMode.NonExpert) -> None:
        if mode is ExpertMode.NonExpert:
            if not self.managed_var_patterns and not self.managed_path_patterns:
                raise InvalidProfile("non-expert profile must manage something")
        for name in self.defaults:
            if _matches_any(name, self.managed_var_patterns) and not self.defaults[name]:
                raise InvalidProfile(f"default for managed variable {name!r} has no value")

    @classmethod
    def from_config(cls, doc: ConfigDocument) -> "EnvironmentProfile":
        sections = doc.find("profile")
        if not sections:
            raise InvalidProfile("config contains no [profile] section")
        section = sections[0]
        return cls(
            managed_var_patterns=tuple(section.get_all("managed_var")),
            managed_path_patterns=tuple(section.get_all("managed_path")),
            defaults={
                k[len("default."):]: v
                for k, v in section.entries
                if k.startswith("default.")
            },
            path_vars=frozenset(section.get_all("path_var") or ["PATH"]),
            shell=section.get("shell", DEFAULT_SHELL) or DEFAULT_SHELL,
        )

    @classmethod
    def load(cls, path: str | Path) -> "EnvironmentProfile":
        return cls.from_config(load_config(path))


@dataclass
class ScrubReport:
    removed_vars: list[str] = field(default_factory=list)
    pruned_path_entries: dict[str, list[str]] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.removed_vars and not self.pruned_path_entries


@dataclass
class CommandResult:
    stdout: bytes
    stderr: bytes
    exit_code: int
    duration: float

    def stdout_text(self) -> str:
        return self.stdout.decode(errors="replace")

    def stderr_text(self) -> str:
        return self.stderr.decode(errors="replace")


def _matches_any(value: str, patterns: tuple[str, ...]) -> bool:
    return any(fnmatch.fnmatchcase(value, p) for p in patterns)


def scrub_environment(
    env: dict[str, str], profile: EnvironmentProfile
) -> tuple[dict[str, str], ScrubReport]:
    """Drop managed variables and managed path-list entries.

    Pure: the input mapping is never modified.  Unmanaged variables and
    their values pass through untouched, in original order.
    """
    profile.validate()
    out: dict[str, str] = {}
    report = ScrubReport()
    for name, value in env.items():
        if _matches_any(name, profile.managed_var_patterns):
            report.removed_vars.append(name)
            continue
        if name in profile.path_vars:
            entries = value.split(":")
            kept = [e for e in entries if not _matches_any(e, profile.managed_path_patterns)]
            pruned = [e for e in entries if _matches_any(e, profile.managed_path_patterns)]
            if pruned:
                report.pruned_path_entries[name] = pruned
            out[name] = ":".join(kept)
        else:
            out[name] = value
    return out, report


def merge_missing(
    user_env: dict[str, str],
    defaults: dict[str, str],
    path_vars: frozenset[str] | set[str] = frozenset({"PATH"}),
) -> dict[str, str]:
    """Fill in only what the user has not set.

    User values always win.  For path-list variables, default entries
    the user lacks are appended after the user's own entries.
    """
    out = dict(user_env)
    for name, default in defaults.items():
        if name not in out:
            out[name] = default
        elif name in path_vars:
            have = out[name].split(":") if out[name] else []
            missing = [e for e in default.split(":") if e and e not in have]
            if missing:
                out[name] = ":".join(have + missing)
    return out


def effective_environment(
    host_env: dict[str, str], profile: EnvironmentProfile, mode: ExpertMode
) -> tuple[dict[str, str], ScrubReport]:
    """The environment a new session actually receives."""
    if mode is ExpertMode.NonExpert:
        scrubbed, report = scrub_environment(host_env, profile)
        return merge_missing(scrubbed, profile.defaults, profile.path_vars), report
    return merge_missing(dict(host_env), profile.defaults, profile.path_vars), ScrubReport()


# -- validation of command results -------------------------------------------

@dataclass
class ValidatorVerdict:
    spec: str
    passed: bool
    evidence: str


@dataclass
class ValidationVerdict:
    checks: list[ValidatorVerdict]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def validate_result(result: CommandResult, validators: list[str]) -> ValidationVerdict:
    """Check a result against a list of small predicate specs.

    Supported specs:
      - ``exit_code == N``
      - ``contains 'TEXT'``        (stdout contains the text)
      - ``line matches 'TEXT'``    (some stdout line contains the text)
      - ``no line matches 'TEXT'`` (no stdout line contains the text)
    """
    import re as _re

    checks: list[ValidatorVerdict] = []
    stdout = result.stdout_text()
    lines = stdout.splitlines()
    for spec in validators:
        spec = spec.strip()
        if m := _re.fullmatch(r"exit_code\s*==\s*(\d+)", spec):
            want = int(m.group(1))
            checks.append(ValidatorVerdict(spec, result.exit_code == want,
                                           f"exit_code={result.exit_code}"))
        elif m := _re.fullmatch(r"contains\s+'(.*)'", spec):
            checks.append(ValidatorVerdict(spec, m.group(1) in stdout, ""))
        elif m := _re.fullmatch(r"no line matches\s+'(.*)'", spec):
            hit = next((ln for ln in lines if m.group(1) in ln), None)
            checks.append(ValidatorVerdict(spec, hit is None, hit or ""))
        elif m := _re.fullmatch(r"line matches\s+'(.*)'", spec):
            hit = next((ln for ln in lines if m.group(1) in ln), None)
            checks.append(ValidatorVerdict(spec, hit is not None, hit or ""))
        else:
            checks.append(ValidatorVerdict(spec, False, "unknown validator spec"))
    return ValidationVerdict(checks)


# -- the session itself -------------------------------------------------------

class _PipeReader(threading.Thread):
    """Drains one pipe of the child shell into a growing buffer."""

    def __init__(self, pipe):
        super().__init__(daemon=True)
        self._pipe = pipe
        self.lock = threading.Condition()
        self.buffer = bytearray()
        self.eof = False

    def run(self):
        fd = self._pipe.fileno()
        while True:
            try:
                chunk = os.read(fd, 65536)
            except OSError:
                chunk = b""
            with self.lock:
                if chunk:
                    self.buffer.extend(chunk)
                else:
                    self.eof = True
                self.lock.notify_all()
            if not chunk:
                return

    def take_all(self) -> bytes:
        with self.lock:
            data = bytes(self.buffer)
            self.buffer.clear()
            return data


class ShellSession:
    """A single controlled shell.  One command in flight at a time."""

    def __init__(
        self,
        profile: EnvironmentProfile,
        mode: ExpertMode = ExpertMode.NonExpert,
        base_dir: str | Path = ".",
        host_env: dict[str, str] | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self.profile = profile
        self.mode = mode
        self.base_dir = Path(base_dir).resolve()
        if not self.base_dir.is_dir():
            raise BadBaseDir(f"base directory does not exist: {self.base_dir}")
        self.timeout = timeout
        self.sentinel_counter = 0
        self.satisfied_steps: set[str] = set()
        host = dict(os.environ) if host_env is None else dict(host_env)
        self.env_snapshot, self.scrub_report = effective_environment(host, profile, mode)
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._spawn()

    # internal ---------------------------------------------------------------

    def _spawn(self) -> None:
        shell = self.profile.shell
        try:
            self._proc = subprocess.Popen(
                [shell],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=str(self.base_dir),
                env=self.env_snapshot,
                start_new_session=True,
            )
        except OSError as exc:
            raise SpawnFailed(f"cannot start shell {shell!r}: {exc}") from exc
        self._nonce = uuid.uuid4().hex
        self._out = _PipeReader(self._proc.stdout)
        self._err = _PipeReader(self._proc.stderr)
        self._out.start()
        self._err.start()

    def _kill(self) -> None:
        if self._proc and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def _respawn(self) -> None:
        self._kill()
        self._spawn()
        self.satisfied_steps.clear()

    @property
    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    # public API -------------------------------------------------------------

    def execute(self, command: str, timeout: float | None = None) -> CommandResult:
        """Run one command in the background shell and capture its result.

        Completion is detected through a per-command sentinel line
        carrying a session nonce, the command counter and ``$?``.  The
        sentinel never appears in the returned output.
        """
        with self._lock:
            return self._execute_locked(command, timeout)

    def _execute_locked(self, command: str, timeout: float | None) -> CommandResult:
        if not self.alive:
            self._respawn()
        deadline = time.monotonic() + (timeout if timeout is not None else self.timeout)
        self.sentinel_counter += 1
        counter = self.sentinel_counter
        mark = f"__SK_{self._nonce}__"
        # Stale output from a previous failed command must not leak in.
        self._out.take_all()
        self._err.take_all()
        # $? is captured before anything else runs so it reflects the
        # user command; the leading \n guarantees the sentinel sits at
        # line start even after unterminated output.
        block = (
            f"{command}\n"
            f"__sk_rc=$?\n"
            f"printf '\\n%s %d %d\\n' '{mark}' {counter} \"$__sk_rc\"\n"
            f"printf '\\n%s %d\\n' '{mark}' {counter} >&2\n"
        )
        log.debug("session %s command %d: %r", self._nonce[:8], counter, command)
        start = time.monotonic()
        try:
            self._proc.stdin.write(block.encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._respawn()
            raise SessionLost("shell died before the command could be sent")

        out_sent = f"\n{mark} {counter} ".encode()
        err_sent = f"\n{mark} {counter}\n".encode()

        stdout, exit_code = self._await_stdout(out_sent, deadline)
        stderr = self._await_stderr(err_sent, deadline)
        duration = time.monotonic() - start
        return CommandResult(stdout=stdout, stderr=stderr, exit_code=exit_code,
                             duration=duration)

    def _await_stdout(self, sentinel: bytes, deadline: float) -> tuple[bytes, int]:
        reader = self._out
        while True:
            with reader.lock:
                buf = bytes(reader.buffer)
                idx = buf.find(sentinel)
                if idx >= 0:
                    rest = buf[idx + len(sentinel):]
                    nl = rest.find(b"\n")
                    if nl >= 0:
                        exit_code = int(rest[:nl])
                        del reader.buffer[: idx + len(sentinel) + nl + 1]
                        return buf[:idx], exit_code
                if reader.eof:
                    break
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self._respawn()
                    raise CommandTimeout(
                        "command did not complete in time; session respawned")
                reader.lock.wait(min(remaining, 0.2))
        self._respawn()
        raise SessionLost("shell exited during command; session respawned")

    def _await_stderr(self, sentinel: bytes, deadline: float) -> bytes:
        reader = self._err
        while True:
            with reader.lock:
                buf = bytes(reader.buffer)
                idx = buf.find(sentinel)
                if idx >= 0:
                    del reader.buffer[: idx + len(sentinel)]
                    return buf[:idx]
                if reader.eof:
                    # Stdout sentinel already arrived; take what we have.
                    return bytes(reader.buffer)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self._respawn()
                    raise CommandTimeout(
                        "stderr sentinel did not arrive in time; session respawned")
                reader.lock.wait(min(remaining, 0.2))

    def reset_to_known_state(self) -> CommandResult:
        """Return the shell to the base directory with no leftover aliases."""
        return self.execute(f"cd '{self.base_dir}'; unalias -a 2>/dev/null; true")

    def environment(self) -> dict[str, str]:
        """The live environment inside the shell, as name -> value."""
        result = self.execute("env")
        env: dict[str, str] = {}
        for line in result.stdout_text().splitlines():
            if "=" in line and not line.startswith(" "):
                name, _, value = line.partition("=")
                env[name] = value
        return env

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self._kill()
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def spawn_session(
    profile: EnvironmentProfile,
    mode: ExpertMode = ExpertMode.NonExpert,
    base_dir: str | Path = ".",
    **kwargs,
) -> ShellSession:
    return ShellSession(profile, mode=mode, base_dir=base_dir, **kwargs)
