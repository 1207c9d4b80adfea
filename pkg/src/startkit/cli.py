"""Scriptable command line interface.

A small function-call command language (run('X'), help(), ...) over the
kit, with a pseudo-shell transcript of every underlying command, an
expert shell escape, and passthrough to the interactive framework when
its prompt is live.
"""

from __future__ import annotations

import re
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, sandbox, scaffold
from .cleanroom import ExpertMode
from .errors import (
    KitError,
    RecipeFailed,
    ScriptNotFound,
    SpawnFailed,
    UserError,
)
from .faults import ErrorClass
from .interact import BridgeHandle, PromptSpec
from .kit import Kit, make_kit

EXIT_OK = 0
EXIT_USER = 1
EXIT_SYSTEM = 2

_CALL_RE = re.compile(r"^\s*(\w+)\s*\(\s*(.*?)\s*\)\s*$")
_ARG_RE = re.compile(r"'([^']*)'|\"([^\"]*)\"|([^,\s]+)")


@dataclass
class CliConfig:
    mode: ExpertMode = ExpertMode.NonExpert
    base_dir: Path = field(default_factory=Path.cwd)
    site: Path | None = None
    sandbox: bool = False
    script_file: Path | None = None
    timeout: float = 300.0


def _parse_call(line: str) -> tuple[str, list[str]] | None:
    m = _CALL_RE.match(line)
    if not m:
        return None
    name, argstr = m.group(1), m.group(2)
    args = []
    if argstr:
        for quoted1, quoted2, bare in _ARG_RE.findall(argstr):
            args.append(quoted1 or quoted2 or bare)
    return name, args


class Cli:
    def __init__(self, config: CliConfig, out=None, in_stream=None):
        self.config = config
        self.out = out or sys.stdout
        self.in_stream = in_stream or sys.stdin
        self.exit_status = EXIT_OK
        self.command_transcript: list[str] = []
        self._bridge: BridgeHandle | None = None
        self.kit = self._make_kit()

    def _make_kit(self) -> Kit:
        site = self.config.site or (self.config.base_dir / ".sbx-site")
        if self.config.sandbox and not (site / sandbox.DEFAULT_RELEASE).is_dir():
            sandbox.make_release(site)
        return make_kit(self.config.base_dir, site, mode=self.config.mode,
                        timeout=self.config.timeout)

    # transcript -------------------------------------------------------------

    def _sink(self, kind: str, payload: str, origin: str) -> None:
        if kind == "command":
            self.command_transcript.append(payload)
            self._print(f"[{origin}] $ {payload}")
        elif kind == "output":
            for line in payload.rstrip("\n").splitlines():
                self._print(f"[{origin}] {line}")
        elif kind in ("log", "status"):
            self._print(f"==> {payload}")

    def _print(self, text: str) -> None:
        print(text, file=self.out)

    # kit functions ----------------------------------------------------------

    def do_help(self, *args) -> None:
        self._print("available commands:")
        for name, doc in sorted(self._commands().items()):
            self._print(f"  {name:<22} {doc}")

    def do_recipes(self, *args) -> None:
        for name, inputs, description in self.kit.recipes.list_recipes():
            defaults = ", ".join(f"{k}={v!r}" for k, v in inputs.items())
            self._print(f"{name}({defaults})  - {description}")

    def catalog_names(self) -> list[str]:
        return [name for name, _, _ in self.kit.recipes.list_recipes()]

    def do_run(self, options: str = "SandboxOptions.txt") -> None:
        result = self.kit.run_recipe("run", {"options": options}, sink=self._sink)
        self._finish(result)

    def do_build(self, package: str = "MyAnalysis") -> None:
        result = self.kit.run_recipe("build", {"package": package}, sink=self._sink)
        self._finish(result)

    def _finish(self, result) -> None:
        if result.success:
            self.exit_status = EXIT_OK
            return
        err = result.error
        if isinstance(err, RecipeFailed) and err.error_class in (
                ErrorClass.UserAction, ErrorClass.Transient):
            self.exit_status = EXIT_USER
        else:
            self.exit_status = EXIT_SYSTEM
        self._print(f"error: {err}")

    def do_new_package(self, name: str, *algorithms: str) -> None:
        manifest = self._release_manifest()
        spec = scaffold.PackageSpec(
            name=name, release=self.kit.release,
            algorithm_names=tuple(algorithms))
        skeleton = scaffold.generate_package(spec, self.kit.base_dir, manifest)
        for f in skeleton.files:
            self._print(f"created {name}/{f.relpath}")

    def do_update_package(self, name: str, release: str, mode: str = "debug") -> None:
        manifest_path = self.kit.site / release / sandbox.MANIFEST_NAME
        if not manifest_path.is_file():
            raise UserError(f"release {release!r} not installed at {self.kit.site}")
        manifest = sandbox.ReleaseManifest.from_text(manifest_path.read_text())
        changes = scaffold.update_package(self.kit.base_dir / name, release, mode,
                                          manifest)
        if changes.empty:
            self._print("already up to date")
        for change in changes.changes:
            self._print(f"updated {change.path} ({change.reason})")

    def do_standalone(self, recipe_name: str, output: str) -> None:
        recipe = self.kit.recipes.lookup(recipe_name)
        script = scaffold.generate_run_script(
            recipe, self.kit.recipes.universe, None, self.kit.profile,
            context=self.kit.context)
        scaffold.write_run_script(self.kit.base_dir / output, script)
        self._print(f"wrote {output}")

    def do_transcript(self, *args) -> None:
        for command in self.command_transcript:
            self._print(command)

    def do_shell(self, *args) -> None:
        if not (hasattr(self.in_stream, "isatty") and self.in_stream.isatty()):
            raise SpawnFailed(
                "no terminal available for an interactive shell "
                "(hint: shell() needs an interactive session)")
        env = dict(self.kit.session.env_snapshot)
        status = subprocess.call([self.kit.profile.shell, "-i"],
                                 cwd=self.kit.base_dir, env=env)
        self._print(f"subshell exited with status {status}")

    def do_interactive(self, *args) -> None:
        program = self.kit.site / self.kit.release / "bin" / "sbx-run"
        self._bridge = BridgeHandle(
            [str(program), "-i"], PromptSpec(re.escape(sandbox.FRAMEWORK_PROMPT)),
            env=self.kit.session.env_snapshot, cwd=str(self.kit.base_dir))
        self._print("framework prompt active; enter 'detach' to return")

    def do_quit(self, *args) -> None:
        raise EOFError

    def _release_manifest(self) -> sandbox.ReleaseManifest:
        manifest_path = self.kit.site / self.kit.release / sandbox.MANIFEST_NAME
        if not manifest_path.is_file():
            raise UserError(
                f"no release installed at {self.kit.site} "
                "(hint: pass --sandbox to create one)")
        return sandbox.ReleaseManifest.from_text(manifest_path.read_text())

    def _commands(self) -> dict[str, str]:
        return {
            "help()": "this catalog",
            "recipes()": "list available recipes and their inputs",
            "run('Options.txt')": "perform all steps necessary to run the framework",
            "build('Package')": "verify and compile a package",
            "new_package('Name')": "generate a skeleton package",
            "update_package('Name', 'release', 'mode')": "update dependencies in place",
            "standalone('recipe', 'out.sh')": "emit a standalone execution script",
            "transcript()": "print commands replayable in a clean login shell",
            "shell()": "start a login shell with the kit environment",
            "interactive()": "attach to the interactive framework",
            "quit()": "leave",
        }

    # the loop ---------------------------------------------------------------

    def banner(self) -> None:
        self._print(f"==>     : welcome to startkit v{__version__}")
        self._print('==> NOTE: enter "help()" to receive help')

    def eval_line(self, line: str) -> None:
        line = line.strip()
        if not line or line.startswith("#"):
            return
        if self._bridge is not None:
            if line == "detach" or self._bridge.state.name == "Closed":
                if self._bridge.state.name != "Closed":
                    self._bridge.stop()
                self._bridge = None
                self._print("detached from framework")
                return
            delta = self._bridge.send_line(line)
            for out_line in delta.rstrip("\n").splitlines():
                self._print(out_line)
            return
        parsed = _parse_call(line)
        if parsed is None:
            self._print(f"error: cannot parse {line!r} "
                        "(commands look like run('X'))")
            self.exit_status = EXIT_USER
            return
        name, args = parsed
        handler = getattr(self, f"do_{name}", None)
        if handler is None:
            self._print(f"error: unknown command {name!r}; try help()")
            self.exit_status = EXIT_USER
            return
        try:
            handler(*args)
        except UserError as exc:
            self._print(f"error: {exc}")
            self.exit_status = EXIT_USER
        except KitError as exc:
            self._print(f"error: {exc}")
            self.exit_status = EXIT_SYSTEM

    def repl(self) -> int:
        self.banner()
        if self.config.script_file is not None:
            script = Path(self.config.script_file)
            if not script.is_file():
                raise ScriptNotFound(f"no script at {script}")
            for line in script.read_text().splitlines():
                try:
                    self.eval_line(line)
                except EOFError:
                    break
            self._cleanup()
            return self.exit_status
        while True:
            prompt = "" if self._bridge else ">>> "
            try:
                self.out.write(prompt)
                self.out.flush()
                line = self.in_stream.readline()
            except KeyboardInterrupt:
                break
            if not line:
                break
            try:
                self.eval_line(line)
            except EOFError:
                break
        self._cleanup()
        return self.exit_status

    def _cleanup(self) -> None:
        if self._bridge is not None:
            self._bridge.stop()
            self._bridge = None
        self.kit.close()


def repl(config: CliConfig) -> int:
    try:
        cli = Cli(config)
    except ScriptNotFound:
        raise
    return cli.repl()
