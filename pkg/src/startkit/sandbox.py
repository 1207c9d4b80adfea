"""A fabricated software ecosystem for desk-scale testing.

Builds deterministic mock release trees containing fake tools (a build
tool, a repository tool, an interactive framework) plus a site-level
validator, and provides fault injection with exact reversal so every
recovery behavior can be exercised reproducibly.
"""

from __future__ import annotations

import hashlib
import stat
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    ReferenceIncomplete,
    ScenarioInapplicable,
    SiteUnwritable,
)
from .faults import (
    AlternativeResource,
    ErrorClass,
    FallbackChain,
)

MANIFEST_NAME = "manifest.txt"
DEFAULT_RELEASE = "sbx-1"
SECOND_RELEASE = "sbx-2"
FRAMEWORK_PROMPT = "ask> "


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- tool scripts -------------------------------------------------------------

_SBX_RUN = r"""#!/bin/sh
# sandbox framework stand-in
here=$(cd "$(dirname "$0")/.." && pwd)
case "$1" in
  --version)
    echo "sbx-run 1.0 (sandbox)"
    exit 0
    ;;
  -i)
    echo "sandbox framework 1.0"
    echo "type quit to exit"
    while :; do
      printf 'ask> '
      if ! read -r line; then exit 0; fi
      [ -n "$SBX_INPUT_LOG" ] && printf '%s\n' "$line" >> "$SBX_INPUT_LOG"
      case "$line" in
        quit) exit 0 ;;
        sleep*) sleep "${line#sleep }" ;;
        "") ;;
        *)
          if printf '%s' "$line" | grep -q '^[0-9+*/() -]*$'; then
            echo $(($line))
          else
            echo "unknown input: $line"
          fi
          ;;
      esac
    done
    ;;
esac
opts="$1"
if [ ! -f "$opts" ]; then
  echo "error: options file not found: $opts" >&2
  exit 1
fi
if [ ! -f "$here/settings/build.settings" ]; then
  echo "MISSING settings/build.settings"
  echo "error: framework settings unavailable" >&2
  exit 2
fi
alg=demo; events=1; output=""
while IFS= read -r line; do
  case "$line" in
    algorithm*=*) alg=$(printf '%s' "${line#*=}" | tr -d ' ') ;;
    events*=*) events=$(printf '%s' "${line#*=}" | tr -d ' ') ;;
    output*=*) output=$(printf '%s' "${line#*=}" | tr -d ' ') ;;
  esac
done < "$opts"
[ -n "$output" ] || output="$alg.out"
sum=$(sha256sum "$opts" | cut -d' ' -f1)
{
  echo "algorithm=$alg"
  echo "events=$events"
  echo "checksum=$sum"
  i=1
  while [ "$i" -le "$events" ]; do
    echo "event $i processed"
    i=$((i + 1))
  done
} > "$output"
echo "wrote $output ($events events)"
exit 0
"""

_SBX_BUILD = r"""#!/bin/sh
# sandbox build tool
case "$1" in
  --version) echo "sbx-build 1.0 (sandbox)"; exit 0 ;;
esac
pkg="$1"; rel="$2"
if [ -f "$rel/locks/build.lock" ]; then
  echo "LOCKED locks/build.lock"
  echo "error: build lock held" >&2
  exit 2
fi
if [ ! -f "$pkg/buildconfig.txt" ]; then
  echo "error: not a package: $pkg" >&2
  exit 1
fi
while IFS= read -r line; do
  case "$line" in
    use\ *)
      dep=$(printf '%s' "$line" | awk '{print $2}')
      if [ ! -f "$rel/deps/$dep.dep" ]; then
        echo "MISSING deps/$dep.dep"
        echo "error: dependency $dep unavailable in release" >&2
        exit 2
      fi
      ;;
  esac
done < "$pkg/buildconfig.txt"
sums=""
for f in "$pkg"/src/*.alg; do
  [ -f "$f" ] || continue
  if ! grep -q '^algorithm ' "$f"; then
    echo "error: $f: syntax error: missing algorithm declaration" >&2
    exit 1
  fi
  sums="$sums $(sha256sum "$f" | cut -d' ' -f1)"
done
{
  echo "built $(basename "$pkg")"
  echo "sources$sums"
} > "$pkg/build.stamp"
echo "build ok: $pkg"
exit 0
"""

_SBX_REPO = r"""#!/bin/sh
# sandbox repository tool
case "$1" in
  --version) echo "sbx-repo 1.0 (sandbox)"; exit 0 ;;
esac
site="${SBX_SITE:?SBX_SITE not set}"
if [ ! -f "$site/credentials/token" ]; then
  echo "MISSING credentials/token"
  echo "error: token missing for repository access" >&2
  exit 3
fi
if [ ! -f "$site/repo/HEAD" ]; then
  echo "error: repository unreachable" >&2
  exit 3
fi
case "$1" in
  checkout) echo "checked out $2" ;;
  *) echo "ok" ;;
esac
exit 0
"""

_SBX_VALIDATE = r"""#!/bin/sh
# sandbox release validator: compares a release tree to its manifest
site="$1"; rel="$2"
tree="$site/$rel"
manifest="$tree/manifest.txt"
if [ ! -f "$manifest" ]; then
  echo "MISSING manifest.txt"
  exit 2
fi
status=0
while IFS= read -r line; do
  case "$line" in
    file\ *)
      relpath=$(printf '%s' "$line" | awk '{print $2}')
      want=$(printf '%s' "$line" | awk '{print $3}')
      if [ ! -f "$tree/$relpath" ]; then
        echo "MISSING $relpath"
        status=2
        break
      fi
      have=$(sha256sum "$tree/$relpath" | cut -d' ' -f1)
      if [ "$have" != "$want" ]; then
        echo "BADHASH $relpath"
        status=2
        break
      fi
      ;;
  esac
done < "$manifest"
[ "$status" -eq 0 ] && echo "release $rel valid"
exit $status
"""

_SANDBOX_OPTIONS = """# sandbox options v1
algorithm = SandboxDemo
events = 5
output = SandboxDemo.out
"""


def release_contents(release: str = DEFAULT_RELEASE) -> dict[str, tuple[str, str]]:
    """Deterministic content for a mock release: relpath -> (content, role)."""
    settings = (
        f"# build settings for {release}\n"
        f"toolchain = sandbox-1.0\n"
        f"targets = all\n"
    )
    paths_cfg = f"# managed path registry for {release}\npaths = ok\n"
    version_suffix = release.rsplit("-", 1)[-1]
    deps = {
        "deps/core.dep": f"core {version_suffix}.0\n",
        "deps/analysis.dep": f"analysis {version_suffix}.1\n",
    }
    contents: dict[str, tuple[str, str]] = {
        "bin/sbx-run": (_SBX_RUN, "tool"),
        "bin/sbx-build": (_SBX_BUILD, "tool"),
        "bin/sbx-repo": (_SBX_REPO, "tool"),
        "settings/build.settings": (settings, "settings"),
        "config/paths.cfg": (paths_cfg, "config"),
        "config/paths.cfg.dist": (paths_cfg, "config"),
        "options/SandboxOptions.txt": (_SANDBOX_OPTIONS, "options"),
    }
    for relpath, content in deps.items():
        contents[relpath] = (content, "dep")
    return contents


@dataclass
class ManifestEntry:
    relpath: str
    sha256: str
    role: str


@dataclass
class ReleaseManifest:
    release: str
    files: list[ManifestEntry] = field(default_factory=list)
    tools: list[tuple[str, str]] = field(default_factory=list)  # (name, probe banner)
    dependency_defaults: dict[str, list[str]] = field(default_factory=dict)
    options_files: list[str] = field(default_factory=list)

    @classmethod
    def from_contents(cls, release: str,
                      contents: dict[str, tuple[str, str]]) -> "ReleaseManifest":
        files = [ManifestEntry(p, _sha256(c.encode()), role)
                 for p, (c, role) in sorted(contents.items())]
        tools = [(Path(p).name, f"{Path(p).name} 1.0 (sandbox)")
                 for p, (_, role) in sorted(contents.items()) if role == "tool"]
        deps = [Path(p).stem for p, (_, role) in sorted(contents.items())
                if role == "dep"]
        version_suffix = release.rsplit("-", 1)[-1]
        dep_defaults = {"algorithm": [f"{d} {version_suffix}.0" if d == "core"
                                      else f"{d} {version_suffix}.1" for d in deps]}
        options = [Path(p).name for p, (_, role) in sorted(contents.items())
                   if role == "options"]
        return cls(release=release, files=files, tools=tools,
                   dependency_defaults=dep_defaults, options_files=options)

    def to_text(self) -> str:
        lines = ["# sandbox release manifest v1", f"release {self.release}"]
        for entry in self.files:
            lines.append(f"file {entry.relpath} {entry.sha256} {entry.role}")
        for name, banner in self.tools:
            lines.append(f"tool {name} {banner}")
        for kind, deps in sorted(self.dependency_defaults.items()):
            for dep in deps:
                lines.append(f"dep {kind} {dep}")
        for opt in self.options_files:
            lines.append(f"options {opt}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ReleaseManifest":
        manifest = cls(release="")
        for line in text.splitlines():
            parts = line.split()
            if not parts or line.startswith("#"):
                continue
            if parts[0] == "release":
                manifest.release = parts[1]
            elif parts[0] == "file":
                manifest.files.append(ManifestEntry(parts[1], parts[2], parts[3]))
            elif parts[0] == "tool":
                manifest.tools.append((parts[1], " ".join(parts[2:])))
            elif parts[0] == "dep":
                manifest.dependency_defaults.setdefault(parts[1], []).append(
                    " ".join(parts[2:]))
            elif parts[0] == "options":
                manifest.options_files.append(parts[1])
        return manifest


def make_release(site_dir: str | Path, release: str = DEFAULT_RELEASE,
                 contents: dict[str, tuple[str, str]] | None = None) -> ReleaseManifest:
    """Install a mock release tree under site_dir.  Idempotent."""
    site = Path(site_dir)
    contents = contents if contents is not None else release_contents(release)
    manifest = ReleaseManifest.from_contents(release, contents)
    tree = site / release
    try:
        tree.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SiteUnwritable(f"cannot create {tree}: {exc}") from exc
    for relpath, (content, _) in contents.items():
        dest = tree / relpath
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(content)
        if relpath.startswith("bin/"):
            dest.chmod(dest.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    (tree / MANIFEST_NAME).write_text(manifest.to_text())
    # Site-level fixtures: validator, credentials, repository marker.
    site_bin = site / "bin"
    site_bin.mkdir(exist_ok=True)
    validator = site_bin / "sbx-validate"
    validator.write_text(_SBX_VALIDATE)
    validator.chmod(validator.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    creds = site / "credentials"
    creds.mkdir(exist_ok=True)
    (creds / "token").write_text("sandbox-token\n")
    repo = site / "repo"
    repo.mkdir(exist_ok=True)
    (repo / "HEAD").write_text("main\n")
    return manifest


def validate_tree(site_dir: str | Path, manifest: ReleaseManifest) -> list[str]:
    """Python-side manifest check; returns a list of problems (empty = valid)."""
    tree = Path(site_dir) / manifest.release
    problems = []
    for entry in manifest.files:
        path = tree / entry.relpath
        if not path.is_file():
            problems.append(f"MISSING {entry.relpath}")
        elif _sha256(path.read_bytes()) != entry.sha256:
            problems.append(f"BADHASH {entry.relpath}")
    return problems


# -- fault injection -----------------------------------------------------------

class Injection(Enum):
    delete_file = "delete_file"
    corrupt_file = "corrupt_file"
    stale_env = "stale_env"
    missing_tool = "missing_tool"
    missing_resource = "missing_resource"


@dataclass(frozen=True)
class FaultScenario:
    name: str
    injection: Injection
    target: str                       # relpath (release scope) or var name
    expected_class: ErrorClass
    recoverable: bool
    scope: str = "release"            # release | site | workspace
    probe: str = ""                   # command template that triggers the failure
    user_input_param: str | None = None
    env_value: str = ""               # for stale_env
    description: str = ""


@dataclass
class InjectionReceipt:
    scenario: str
    injection: Injection
    path: Path | None = None
    original: bytes | None = None     # None means the path did not exist before
    moved_to: Path | None = None
    env_var: str | None = None


def _scope_root(scenario: FaultScenario, site_dir: Path, release: str,
                workspace: Path | None) -> Path:
    if scenario.scope == "site":
        return site_dir
    if scenario.scope == "workspace":
        if workspace is None:
            raise ScenarioInapplicable(f"{scenario.name} needs a workspace")
        return workspace
    return site_dir / release


def inject(scenario: FaultScenario, site_dir: str | Path,
           release: str = DEFAULT_RELEASE, workspace: str | Path | None = None,
           env: dict[str, str] | None = None,
           context: dict[str, str] | None = None) -> InjectionReceipt:
    """Apply one fault to the installed tree (or env).  Exactly reversible."""
    site = Path(site_dir)
    workspace = Path(workspace) if workspace else None
    receipt = InjectionReceipt(scenario.name, scenario.injection)
    target_rel = scenario.target.format(**(context or {})) \
        if "{" in scenario.target else scenario.target

    if scenario.injection is Injection.stale_env:
        if env is None:
            raise ScenarioInapplicable("stale_env needs an env mapping to poison")
        receipt.env_var = scenario.target
        receipt.original = env.get(scenario.target, "").encode() \
            if scenario.target in env else None
        env[scenario.target] = scenario.env_value
        return receipt

    root = _scope_root(scenario, site, release, workspace)
    target = root / target_rel
    receipt.path = target

    if scenario.injection in (Injection.delete_file, Injection.missing_resource):
        if not target.is_file():
            raise ScenarioInapplicable(f"{target} not present to delete")
        receipt.original = target.read_bytes()
        target.unlink()
    elif scenario.injection is Injection.corrupt_file:
        receipt.original = target.read_bytes() if target.is_file() else None
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(f"CORRUPT {scenario.name} pid=99999 "
                          f"held since 2020-01-01 00:00:00\n")
    elif scenario.injection is Injection.missing_tool:
        if not target.is_file():
            raise ScenarioInapplicable(f"{target} not present to hide")
        hidden = target.with_name(target.name + ".hidden")
        target.replace(hidden)
        receipt.moved_to = hidden
    else:
        raise ScenarioInapplicable(f"unknown injection {scenario.injection}")
    return receipt


def revert(receipt: InjectionReceipt, env: dict[str, str] | None = None) -> None:
    """Undo an injection exactly."""
    if receipt.injection is Injection.stale_env:
        if env is not None and receipt.env_var:
            if receipt.original is None:
                env.pop(receipt.env_var, None)
            else:
                env[receipt.env_var] = receipt.original.decode()
        return
    assert receipt.path is not None
    if receipt.moved_to is not None:
        receipt.moved_to.replace(receipt.path)
    elif receipt.original is None:
        receipt.path.unlink(missing_ok=True)
    else:
        receipt.path.parent.mkdir(parents=True, exist_ok=True)
        receipt.path.write_bytes(receipt.original)


def standard_scenarios() -> list[FaultScenario]:
    """The shipped corpus covering every taxonomy branch and ladder rung."""
    validate = "'{site}/bin/sbx-validate' '{site}' '{release}'"
    build = "'{release_dir}/bin/sbx-build' '{workspace}/{package}' '{release_dir}'"
    repo = "'{release_dir}/bin/sbx-repo' checkout demo"
    run_opts = ("test -f '{workspace}/{options}' || "
                "test -f '{release_dir}/options/{options}' || "
                "( echo \"error: options file not found: {options}\" >&2; exit 1 )")
    return [
        FaultScenario(
            "missing-settings", Injection.delete_file, "settings/build.settings",
            ErrorClass.SystemBroken, True, probe=validate,
            description="distribution settings file deleted"),
        FaultScenario(
            "corrupt-settings", Injection.corrupt_file, "settings/build.settings",
            ErrorClass.SystemBroken, True, probe=validate,
            description="distribution settings file corrupted"),
        FaultScenario(
            "missing-dep", Injection.delete_file, "deps/core.dep",
            ErrorClass.SystemBroken, True, probe=validate,
            description="release dependency file deleted"),
        FaultScenario(
            "missing-tool-run", Injection.missing_tool, "bin/sbx-run",
            ErrorClass.SystemBroken, True, probe=validate,
            description="framework launcher missing from release"),
        FaultScenario(
            "stale-paths-config", Injection.corrupt_file, "config/paths.cfg",
            ErrorClass.SystemBroken, True, probe=validate,
            description="path registry drifted from pristine copy"),
        FaultScenario(
            "stale-env", Injection.stale_env, "SBX_RELEASE_ROOT",
            ErrorClass.SystemBroken, True, env_value="/nonexistent/old-release",
            probe=("[ -z \"$SBX_RELEASE_ROOT\" ] || "
                   "[ \"$SBX_RELEASE_ROOT\" = '{release_dir}' ] || "
                   "( echo 'BADENV SBX_RELEASE_ROOT'; exit 2 )"),
            description="residual release pointer in login environment"),
        FaultScenario(
            "missing-token", Injection.missing_resource, "credentials/token",
            ErrorClass.Transient, False, scope="site", probe=repo,
            description="credential token absent"),
        FaultScenario(
            "repo-unreachable", Injection.missing_resource, "repo/HEAD",
            ErrorClass.Transient, False, scope="site", probe=repo,
            description="repository endpoint unreachable"),
        FaultScenario(
            "user-source-error", Injection.corrupt_file,
            "{package}/src/{package}.alg",
            ErrorClass.UserAction, False, scope="workspace", probe=build,
            user_input_param="package",
            description="user algorithm source does not compile"),
        FaultScenario(
            "missing-options", Injection.delete_file, "{options}",
            ErrorClass.UserAction, False, scope="workspace", probe=run_opts,
            user_input_param="options",
            description="user-requested options file does not exist"),
        FaultScenario(
            "stale-lock", Injection.corrupt_file, "locks/build.lock",
            ErrorClass.SystemBroken, True, probe=build,
            description="stale build lock left behind"),
    ]


def remote_fallback_fixture(local_site: str | Path, reference_site: str | Path,
                            release: str = DEFAULT_RELEASE) -> FallbackChain:
    """A chain whose alternative resource points at a fully built reference site."""
    reference = Path(reference_site)
    manifest_path = reference / release / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ReferenceIncomplete(f"no release manifest at {manifest_path}")
    manifest = ReleaseManifest.from_text(manifest_path.read_text())
    problems = validate_tree(reference, manifest)
    if problems:
        raise ReferenceIncomplete(
            f"reference site incomplete: {', '.join(problems)}")
    return FallbackChain((AlternativeResource(str(reference)),))
