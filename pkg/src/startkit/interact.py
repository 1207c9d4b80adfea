"""Bridge to an interactive subprocess: prompt detection and input routing.

The child runs as a distinct process sharing nothing with the kit.  A
reader continuously drains its output into a transcript; the bridge
reaches the at-prompt state when the prompt pattern sits at the start of
the current (unterminated) line and no further output has arrived for a
quiescence window.
"""

from __future__ import annotations

import re
import subprocess
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from .errors import BridgeClosed, LaunchFailed, NotAtPrompt, PromptTimeout

DEFAULT_QUIESCENCE = 0.05
DEFAULT_PROMPT_TIMEOUT = 10.0


@dataclass(frozen=True)
class PromptSpec:
    pattern: str                      # regex; must match the whole prompt line
    quiescence_window: float = DEFAULT_QUIESCENCE

    def __post_init__(self):
        if self.quiescence_window <= 0:
            raise ValueError("quiescence window must be positive")


class PromptDetector:
    """Pure prompt detection over a chunked output stream.

    Feed chunks as they arrive; ``pending`` is true exactly while the
    current line (everything after the last newline) fully matches the
    prompt pattern.  The caller supplies the quiescence timing.
    """

    def __init__(self, spec: PromptSpec):
        self._regex = re.compile(spec.pattern)
        self._current_line = ""

    def feed(self, data: str) -> None:
        if "\n" in data:
            self._current_line = data.rsplit("\n", 1)[1]
        else:
            self._current_line += data

    @property
    def pending(self) -> bool:
        return self._regex.fullmatch(self._current_line) is not None

    @property
    def current_line(self) -> str:
        return self._current_line


class BridgeState(Enum):
    Starting = "starting"
    AtPrompt = "at-prompt"
    Busy = "busy"
    Closed = "closed"


@dataclass
class TranscriptEvent:
    seq: int
    origin: str          # stdout | stderr | input | prompt | status
    text: str


class BridgeHandle:
    """Handle to one interactive child.  Sends are serialized."""

    def __init__(self, argv: list[str], prompt: PromptSpec,
                 env: dict[str, str] | None = None, cwd: str | None = None,
                 prompt_timeout: float = DEFAULT_PROMPT_TIMEOUT,
                 quit_command: str = "quit"):
        self.prompt = prompt
        self.quit_command = quit_command
        self._prompt_timeout = prompt_timeout
        self._lock = threading.Lock()
        self._cond = threading.Condition()
        self._detector = PromptDetector(prompt)
        self._last_output = time.monotonic()
        self._transcript: list[TranscriptEvent] = []
        self._seq = 0
        self.state = BridgeState.Starting
        self.exit_code: int | None = None
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, env=env, cwd=cwd)
        except OSError as exc:
            raise LaunchFailed(f"cannot launch {argv[0]!r}: {exc}") from exc
        self._readers = [
            threading.Thread(target=self._drain, args=(self._proc.stdout, "stdout"),
                             daemon=True),
            threading.Thread(target=self._drain, args=(self._proc.stderr, "stderr"),
                             daemon=True),
        ]
        for t in self._readers:
            t.start()
        self._await_prompt(self._prompt_timeout)

    # internals --------------------------------------------------------------

    def _emit(self, origin: str, text: str) -> TranscriptEvent:
        self._seq += 1
        event = TranscriptEvent(self._seq, origin, text)
        self._transcript.append(event)
        return event

    def _drain(self, pipe, origin: str) -> None:
        import os as _os
        fd = pipe.fileno()
        while True:
            try:
                raw = _os.read(fd, 4096)
            except OSError:
                raw = b""
            chunk = raw.decode(errors="replace")
            with self._cond:
                if chunk:
                    self._emit(origin, chunk)
                    if origin == "stdout":
                        self._detector.feed(chunk)
                    self._last_output = time.monotonic()
                    self._cond.notify_all()
                else:
                    break
        if origin == "stdout":
            self._proc.wait()
            with self._cond:
                if self.state is not BridgeState.Closed:
                    self.exit_code = self._proc.returncode
                    self.state = BridgeState.Closed
                    self._emit("status", f"exited {self.exit_code}")
                self._cond.notify_all()

    def _await_prompt(self, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                if self.state is BridgeState.Closed:
                    raise BridgeClosed(self.exit_code)
                now = time.monotonic()
                if self._detector.pending and \
                        now - self._last_output >= self.prompt.quiescence_window:
                    self.state = BridgeState.AtPrompt
                    self._emit("prompt", self._detector.current_line)
                    return
                if now >= deadline:
                    raise PromptTimeout(
                        f"no prompt matching {self.prompt.pattern!r} "
                        f"within {timeout}s")
                self._cond.wait(0.01)

    # public API -------------------------------------------------------------

    def transcript(self) -> list[TranscriptEvent]:
        with self._cond:
            return list(self._transcript)

    def send_line(self, text: str, timeout: float | None = None) -> str:
        """Deliver one input line; return output up to the next prompt."""
        with self._lock:
            with self._cond:
                if self.state is BridgeState.Closed:
                    raise BridgeClosed(self.exit_code)
                if self.state is not BridgeState.AtPrompt:
                    raise NotAtPrompt(f"bridge is {self.state.value}")
                self.state = BridgeState.Busy
                self._emit("input", text)
                # The consumed prompt line is no longer pending; without
                # this the next await would fire before any output arrives.
                self._detector.feed("\n")
                self._last_output = time.monotonic()
                baseline = self._seq
            try:
                self._proc.stdin.write((text + "\n").encode())
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass
            try:
                self._await_prompt(timeout or self._prompt_timeout)
            except BridgeClosed:
                pass
            with self._cond:
                delta = "".join(
                    e.text for e in self._transcript
                    if e.seq > baseline and e.origin in ("stdout", "stderr"))
                if self.state is BridgeState.AtPrompt:
                    # The echoed prompt is framing, not command output.
                    prompt_line = self._detector.current_line
                    if prompt_line and delta.endswith(prompt_line):
                        delta = delta[: -len(prompt_line)]
                return delta

    def stop(self, timeout: float = 2.0) -> int:
        """Quit cleanly if at the prompt, escalate otherwise.  Idempotent."""
        with self._cond:
            if self.state is BridgeState.Closed:
                return self.exit_code if self.exit_code is not None else -1
            at_prompt = self.state is BridgeState.AtPrompt
        if at_prompt:
            try:
                self._proc.stdin.write((self.quit_command + "\n").encode())
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass
            try:
                self._proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                pass
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        with self._cond:
            self.exit_code = self._proc.returncode
            if self.state is not BridgeState.Closed:
                self.state = BridgeState.Closed
                self._emit("status", f"exited {self.exit_code}")
        return self.exit_code


def start_interactive(argv: list[str], prompt: PromptSpec,
                      **kwargs) -> BridgeHandle:
    return BridgeHandle(argv, prompt, **kwargs)
