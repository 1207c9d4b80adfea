"""Application assembly: one object wiring all layers together.

The CLI and the local service both sit on top of a Kit, which owns the
session, the tool registry, the built-in recipes and the fault engine,
all configured for a sandbox site.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import recipes as recipes_mod
from . import sandbox, tooladapt
from .cleanroom import EnvironmentProfile, ExpertMode, ShellSession
from .configfile import parse_config
from .faults import (
    ClassificationRules,
    ConfigKey,
    FallbackChain,
    FaultEngine,
    RepairCase,
    SolutionCache,
    load_workarounds,
)

DEFAULT_WORKAROUNDS = """\
version = 1

[workaround restore-paths-config]
key = sbx-*/*/*
match = config/paths.cfg
action = cp '{site}/{release}/config/paths.cfg.dist' '{site}/{release}/config/paths.cfg'
description = restore the pristine path registry shipped with the release

[workaround reset-release-root]
key = */*/*
match = BADENV SBX_RELEASE_ROOT
action = export SBX_RELEASE_ROOT='{site}/{release}'
description = repoint a stale release pointer at the configured release

[workaround normalize-umask]
key = sbx-*/*/*
match = *
action = umask 022
description = normalize the file creation mask before any task
"""

DEFAULT_REPAIR_CASES = [
    RepairCase(
        name="stale-lock",
        path_glob="locks/*.lock",
        content_pattern=r"pid=\d+",
        action="remove",
        description="remove a build lock left behind by a dead process",
    ),
]


def sandbox_profile(site: Path, release: str) -> EnvironmentProfile:
    release_bin = site / release / "bin"
    return EnvironmentProfile(
        managed_var_patterns=("SBX_*",),
        managed_path_patterns=(f"*/{release}/bin", "*/sbx-*/bin"),
        defaults={
            "PATH": f"/usr/bin:/bin:{site}/bin:{release_bin}",
            "SBX_SITE": str(site),
            "SBX_RELEASE": release,
            "HOME": str(Path.home()),
        },
        path_vars=frozenset({"PATH"}),
    )


def builtin_universe() -> recipes_mod.StepUniverse:
    S = recipes_mod.Step
    return recipes_mod.StepUniverse([
        S("setup_env", command="umask 022", shared=True),
        S("validate_release",
          command="'{site}/bin/sbx-validate' '{site}' '{release}'",
          shared=True),
        S("check_options",
          command=("test -f '{options}' || "
                   "test -f '{release_dir}/options/{options}' || "
                   "( echo \"error: options file not found: {options}\" >&2; exit 1 )"),
          user_input_param="options"),
        S("run_framework",
          command=("if test -f '{options}'; then "
                   "'{release_dir}/bin/sbx-run' '{options}'; "
                   "else '{release_dir}/bin/sbx-run' "
                   "'{release_dir}/options/{options}'; fi"),
          requires_tools=("sbx-run",)),
        S("check_package",
          command=("test -f '{package}/buildconfig.txt' || "
                   "( echo \"error: not a package: {package}\" >&2; exit 1 )"),
          user_input_param="package"),
        S("compile",
          command="'{release_dir}/bin/sbx-build' '{package}' '{release_dir}'",
          requires_tools=("sbx-build",),
          produces=("{package}/build.stamp",)),
        S("report", command="echo 'task complete'", always_run=True),
    ])


def builtin_recipes(universe: recipes_mod.StepUniverse) -> recipes_mod.RecipeRegistry:
    registry = recipes_mod.RecipeRegistry(universe)
    template = recipes_mod.make_template(
        init=["setup_env", "validate_release"], finalize=["report"])
    registry.register(recipes_mod.Recipe(
        name="run",
        template=template,
        core_steps=("check_options", "run_framework"),
        inputs={"options": "SandboxOptions.txt"},
        description="perform all steps necessary to run the framework "
                    "on an options file",
    ))
    registry.register(recipes_mod.Recipe(
        name="build",
        template=template,
        core_steps=("check_package", "compile"),
        inputs={"package": "MyAnalysis"},
        description="verify and compile a package against the configured release",
    ))
    return registry


def builtin_tools(site: Path, release: str) -> tooladapt.ToolRegistry:
    registry = tooladapt.ToolRegistry()
    release_bin = str(site / release / "bin")
    for name in ("sbx-run", "sbx-build", "sbx-repo"):
        registry.register(tooladapt.ToolSpec(
            name=name,
            probe_command="'{path}' --version",
            expected_probe_pattern=f"{name} * (sandbox)",
            search_locations=(release_bin, "PATH"),
        ))
    return registry


@dataclass
class Kit:
    site: Path
    release: str
    mode: ExpertMode
    base_dir: Path
    session: ShellSession
    tools: tooladapt.ToolRegistry
    recipes: recipes_mod.RecipeRegistry
    engine: FaultEngine
    profile: EnvironmentProfile
    last_result: recipes_mod.RecipeResult | None = field(default=None, repr=False)

    @property
    def context(self) -> dict[str, str]:
        return {
            "site": str(self.site),
            "release": self.release,
            "release_dir": str(self.site / self.release),
            "workspace": str(self.base_dir),
        }

    def run_recipe(self, name: str, inputs: dict[str, str] | None = None,
                   sink=None) -> recipes_mod.RecipeResult:
        recipe = self.recipes.lookup(name)
        result = recipes_mod.run_recipe(
            self.session, recipe, inputs, self.engine,
            self.recipes.universe, tools=self.tools, context=self.context,
            sink=sink or (lambda *a: None))
        self.last_result = result
        return result

    def close(self) -> None:
        self.session.close()


def make_kit(
    base_dir: str | Path,
    site: str | Path,
    release: str = sandbox.DEFAULT_RELEASE,
    mode: ExpertMode = ExpertMode.NonExpert,
    compile_mode: str = "debug",
    host_env: dict[str, str] | None = None,
    chains: list[tuple[str, FallbackChain]] | None = None,
    cache_path: str | Path | None = None,
    timeout: float = 300.0,
) -> Kit:
    site = Path(site).resolve()
    base_dir = Path(base_dir).resolve()
    profile = sandbox_profile(site, release)
    session = ShellSession(profile, mode=mode, base_dir=base_dir,
                           host_env=host_env, timeout=timeout)
    state_dir = site / ".startkit"
    state_dir.mkdir(parents=True, exist_ok=True)
    engine = FaultEngine(
        config_key=ConfigKey(release, compile_mode, sys.platform),
        site_root=site,
        workarounds=load_workarounds(parse_config(DEFAULT_WORKAROUNDS)),
        chains=chains or [],
        cache=SolutionCache(cache_path or state_dir / "solutions.cache"),
        repair_cases=list(DEFAULT_REPAIR_CASES),
        rules=ClassificationRules(
            transient_hints={"credentials/*": "renew your access token and retry",
                             "repo/*": "repository unreachable; retry later"}),
        journal_path=state_dir / "repair.journal",
    )
    universe = builtin_universe()
    return Kit(
        site=site, release=release, mode=mode, base_dir=base_dir,
        session=session, tools=builtin_tools(site, release),
        recipes=builtin_recipes(universe), engine=engine, profile=profile,
    )
