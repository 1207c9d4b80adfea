import hashlib
import subprocess

import pytest

from startkit import sandbox
from startkit.errors import (
    AlreadyExists,
    BadName,
    NotAPackage,
    UnknownOverrideKey,
    UnknownRelease,
    UnplannableRecipe,
)
from startkit.recipes import Recipe, Step, StepUniverse, make_template
from startkit.scaffold import (
    PackageSpec,
    generate_options,
    generate_package,
    generate_run_script,
    update_package,
    write_run_script,
)


def _file_hashes(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def spec():
    return PackageSpec(name="MyAnalysis", release=sandbox.DEFAULT_RELEASE)


def test_bad_names_rejected():
    for bad in ("", "1abc", "has space", "dash-name", "dot.name"):
        with pytest.raises(BadName):
            PackageSpec(name=bad, release="sbx-1")


def test_generation_is_deterministic(tmp_path, sbx, spec):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_package(spec, a, sbx.manifest)
    generate_package(spec, b, sbx.manifest)
    assert _file_hashes(a / spec.name) == _file_hashes(b / spec.name)


def test_generate_refuses_existing_dir(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    with pytest.raises(AlreadyExists):
        generate_package(spec, tmp_path, sbx.manifest)


def test_manifest_lists_every_file(tmp_path, sbx, spec):
    skeleton = generate_package(spec, tmp_path, sbx.manifest)
    on_disk = _file_hashes(tmp_path / spec.name)
    assert {f.relpath for f in skeleton.files} == set(on_disk)
    for f in skeleton.files:
        assert f.sha256 == on_disk[f.relpath]
    roles = {f.role for f in skeleton.files}
    assert roles == {"source", "build-config", "options"}


def test_generated_package_builds(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    proc = subprocess.run(
        [str(sbx.release_dir / "bin" / "sbx-build"),
         str(tmp_path / spec.name), str(sbx.release_dir)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / spec.name / "build.stamp").is_file()


def test_generate_wrong_release_manifest(tmp_path, sbx):
    other = PackageSpec(name="P", release=sandbox.SECOND_RELEASE)
    with pytest.raises(UnknownRelease):
        generate_package(other, tmp_path, sbx.manifest)


def test_options_overrides_applied(spec):
    text = generate_options(spec, {"events": "9"})
    values = dict(
        tuple(part.strip() for part in line.split("=", 1))
        for line in text.splitlines()
        if "=" in line and not line.startswith("#"))
    assert values["events"] == "9"
    assert values["output"] == "MyAnalysis.out"
    assert values["algorithm"] == "MyAnalysis"


def test_options_unknown_override(spec):
    with pytest.raises(UnknownOverrideKey):
        generate_options(spec, {"nope": "1"})


def test_update_confined_to_generated_region(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    pkg = tmp_path / spec.name
    config = pkg / "buildconfig.txt"
    config.write_text(config.read_text() + "\n# my precious user comment\n")
    before = _file_hashes(pkg)

    second = sandbox.make_release(sbx.site, sandbox.SECOND_RELEASE)
    changes = update_package(pkg, sandbox.SECOND_RELEASE, "opt", second)
    assert len(changes.changes) == 1
    assert changes.changes[0].reason == "dependency-update"

    after = _file_hashes(pkg)
    touched = {p for p in before if before[p] != after.get(p)}
    assert touched == {"buildconfig.txt"}
    new_text = config.read_text()
    assert "# my precious user comment" in new_text
    assert f"release {sandbox.SECOND_RELEASE}" in new_text
    assert "mode opt" in new_text


def test_update_is_idempotent(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    pkg = tmp_path / spec.name
    second = sandbox.make_release(sbx.site, sandbox.SECOND_RELEASE)
    update_package(pkg, sandbox.SECOND_RELEASE, "opt", second)
    again = update_package(pkg, sandbox.SECOND_RELEASE, "opt", second)
    assert again.empty


def test_update_mode_only_reason(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    changes = update_package(tmp_path / spec.name, sbx.release, "opt",
                             sbx.manifest)
    assert changes.changes[0].reason == "mode-update"


def test_update_not_a_package(tmp_path, sbx):
    with pytest.raises(NotAPackage):
        update_package(tmp_path, sbx.release, "opt", sbx.manifest)
    (tmp_path / "buildconfig.txt").write_text("no markers here\n")
    with pytest.raises(NotAPackage):
        update_package(tmp_path, sbx.release, "opt", sbx.manifest)


def test_update_preserves_user_sources(tmp_path, sbx, spec):
    generate_package(spec, tmp_path, sbx.manifest)
    source = tmp_path / spec.name / "src" / "MyAnalysis.alg"
    source.write_text(source.read_text() + "# user tweak\n")
    want = hashlib.sha256(source.read_bytes()).hexdigest()
    second = sandbox.make_release(sbx.site, sandbox.SECOND_RELEASE)
    update_package(tmp_path / spec.name, sandbox.SECOND_RELEASE, "opt", second)
    assert hashlib.sha256(source.read_bytes()).hexdigest() == want


def test_run_script_cold_start_no_skips(profile):
    universe = StepUniverse([
        Step("setup", command="echo setup", shared=True),
        Step("work", command="echo work on {target}"),
    ])
    recipe = Recipe("demo", make_template(["setup"], []), ("work",),
                    inputs={"target": "X"})
    script = generate_run_script(recipe, universe, {"target": "Y"}, profile)
    assert script.startswith("#!/bin/sh")
    assert "set -e" in script
    assert script.index("echo setup") < script.index("echo work on Y")
    for name, value in profile.defaults.items():
        assert f"export {name}='{value}'" in script


def test_run_script_executes_standalone(tmp_path, profile):
    universe = StepUniverse([Step("hello", command="echo hello standalone")])
    recipe = Recipe("hi", make_template([], []), ("hello",))
    script = generate_run_script(recipe, universe, {}, profile)
    path = tmp_path / "run.sh"
    write_run_script(path, script)
    proc = subprocess.run([str(path)], capture_output=True, text=True,
                          env={"PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0
    assert "hello standalone" in proc.stdout


def test_run_script_cycle_unplannable(profile):
    universe = StepUniverse([Step("a", command="true"), Step("b", command="true")])
    recipe = Recipe("bad", make_template([], []), ("a", "b"),
                    constraints=(("a", "b"), ("b", "a")))
    with pytest.raises(UnplannableRecipe):
        generate_run_script(recipe, universe, {}, profile)
