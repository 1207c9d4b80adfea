"""Skeleton package generation and in-place dependency updates.

Generation is byte-deterministic: content is a pure function of the
package spec, the release manifest, and the generator version.  Updates
rewrite only the marked generated region of the build config, so user
work outside the markers survives release and compile-mode changes.
"""

from __future__ import annotations

import hashlib
import re
import stat
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__ as GENERATOR_VERSION
from . import recipes as recipes_mod
from .cleanroom import EnvironmentProfile
from .errors import (
    AlreadyExists,
    BadName,
    CyclicConstraints,
    NotAPackage,
    UnknownOverrideKey,
    UnknownRelease,
    UnplannableRecipe,
)
from .sandbox import ReleaseManifest

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")
_GEN_BEGIN = "# >>> generated"
_GEN_END = "# <<< generated"
_KNOWN_OVERRIDES = ("events", "output")


def _template(name: str) -> str:
    return resources.files("startkit.templates").joinpath(name).read_text()


@dataclass(frozen=True)
class PackageSpec:
    name: str
    release: str
    compile_mode: str = "debug"
    author: str = "unknown"
    algorithm_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise BadName(f"bad package name {self.name!r}")
        if not self.algorithm_names:
            object.__setattr__(self, "algorithm_names", (self.name,))

    def spec_hash(self) -> str:
        basis = "|".join([self.name, self.release, self.compile_mode, self.author,
                          ",".join(self.algorithm_names), GENERATOR_VERSION])
        return hashlib.sha256(basis.encode()).hexdigest()[:12]


@dataclass
class ManifestFile:
    relpath: str
    sha256: str
    role: str    # source | header | build-config | options | doc


@dataclass
class SkeletonManifest:
    files: list[ManifestFile]
    generator_version: str
    spec: PackageSpec


@dataclass
class Change:
    path: str
    old_hash: str
    new_hash: str
    reason: str   # dependency-update | mode-update


@dataclass
class ChangeSet:
    changes: list[Change] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.changes


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dependency_lines(spec: PackageSpec, manifest: ReleaseManifest) -> str:
    if manifest.release != spec.release:
        raise UnknownRelease(
            f"manifest describes {manifest.release!r}, not {spec.release!r}")
    deps = manifest.dependency_defaults.get("algorithm", [])
    return "\n".join(f"use {d}" for d in deps)


def render_buildconfig(spec: PackageSpec, manifest: ReleaseManifest) -> str:
    return _template("buildconfig.txt.tmpl").format(
        generator_version=GENERATOR_VERSION,
        spec_hash=spec.spec_hash(),
        package=spec.name,
        author=spec.author,
        release=spec.release,
        compile_mode=spec.compile_mode,
        dependency_lines=_dependency_lines(spec, manifest),
    )


def generate_options(spec: PackageSpec, overrides: dict[str, str] | None = None) -> str:
    """Default job options naming each algorithm, with overrides applied last."""
    overrides = overrides or {}
    for key in overrides:
        if key not in _KNOWN_OVERRIDES:
            raise UnknownOverrideKey(f"unknown options override {key!r}")
    values = {"events": "5", "output": f"{spec.name}.out"}
    values.update(overrides)
    return _template("options.txt.tmpl").format(
        generator_version=GENERATOR_VERSION,
        spec_hash=spec.spec_hash(),
        package=spec.name,
        algorithm_lines="\n".join(f"algorithm = {a}" for a in spec.algorithm_names),
        **values,
    )


def generate_package(spec: PackageSpec, target_dir: str | Path,
                     manifest: ReleaseManifest) -> SkeletonManifest:
    """Create a skeleton package: source stubs, build config, options."""
    root = Path(target_dir) / spec.name
    if root.exists():
        raise AlreadyExists(f"{root} already exists")

    contents: list[tuple[str, str, str]] = []
    for alg in spec.algorithm_names:
        contents.append((
            f"src/{alg}.alg",
            _template("algorithm.alg.tmpl").format(
                generator_version=GENERATOR_VERSION, spec_hash=spec.spec_hash(),
                package=spec.name, algorithm=alg),
            "source",
        ))
    contents.append(("buildconfig.txt", render_buildconfig(spec, manifest),
                     "build-config"))
    contents.append((f"{spec.name}Options.txt", generate_options(spec), "options"))

    files: list[ManifestFile] = []
    root.mkdir(parents=True)
    for relpath, content, role in contents:
        dest = root / relpath
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(content)
        files.append(ManifestFile(relpath, _sha256(content.encode()), role))
    return SkeletonManifest(files=files, generator_version=GENERATOR_VERSION,
                            spec=spec)


def _parse_buildconfig(text: str) -> dict[str, str]:
    fields = {}
    for line in text.splitlines():
        m = re.match(r"(package|author|release|mode)\s+(.*)$", line)
        if m:
            fields[m.group(1)] = m.group(2).strip()
    return fields


def update_package(package_dir: str | Path, new_release: str, new_mode: str,
                   manifest: ReleaseManifest) -> ChangeSet:
    """Rewrite dependency/mode declarations only; user files stay untouched."""
    package_dir = Path(package_dir)
    config_path = package_dir / "buildconfig.txt"
    if not config_path.is_file():
        raise NotAPackage(f"no buildconfig.txt in {package_dir}")
    old_text = config_path.read_text()
    if _GEN_BEGIN not in old_text or _GEN_END not in old_text:
        raise NotAPackage(f"{config_path} has no generated region")
    fields = _parse_buildconfig(old_text)
    if manifest.release != new_release:
        raise UnknownRelease(
            f"manifest describes {manifest.release!r}, not {new_release!r}")

    spec = PackageSpec(
        name=fields.get("package", package_dir.name),
        release=new_release,
        compile_mode=new_mode,
        author=fields.get("author", "unknown"),
    )
    deps = _dependency_lines(spec, manifest)
    region = f"{_GEN_BEGIN} (managed by startkit; edits inside are overwritten)\n" \
             f"release {new_release}\nmode {new_mode}\n{deps}\n{_GEN_END}"
    new_text = re.sub(
        re.escape(_GEN_BEGIN) + r".*?" + re.escape(_GEN_END),
        lambda _m: region, old_text, flags=re.DOTALL)

    changes = ChangeSet()
    if new_text != old_text:
        reason = "mode-update" if fields.get("release") == new_release \
            else "dependency-update"
        changes.changes.append(Change(
            path=str(config_path),
            old_hash=_sha256(old_text.encode()),
            new_hash=_sha256(new_text.encode()),
            reason=reason,
        ))
        config_path.write_text(new_text)
    return changes


def generate_run_script(
    recipe: recipes_mod.Recipe,
    universe: recipes_mod.StepUniverse,
    inputs: dict[str, str] | None,
    profile: EnvironmentProfile,
    context: dict[str, str] | None = None,
) -> str:
    """A standalone script reproducing the recipe's command sequence.

    Standalone scripts assume a cold start: no step is skipped and the
    full environment setup is exported up front.
    """
    try:
        the_plan = recipes_mod.plan(recipe, universe, already_satisfied=set())
    except CyclicConstraints as exc:
        raise UnplannableRecipe(str(exc)) from exc
    values = dict(recipe.inputs)
    values.update(inputs or {})
    subst = {**(context or {}), **values}

    exports = "\n".join(
        f"export {name}='{value}'"
        for name, value in sorted(profile.defaults.items()))
    commands = "\n".join(
        universe.get(entry.step_id).command.format(**subst)
        for entry in the_plan.entries)
    return _template("runscript.sh.tmpl").format(
        generator_version=GENERATOR_VERSION,
        recipe=recipe.name,
        env_exports=exports,
        step_commands=commands,
    )


def write_run_script(path: str | Path, content: str) -> None:
    path = Path(path)
    path.write_text(content)
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
