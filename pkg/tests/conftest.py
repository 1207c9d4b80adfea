import pytest

from startkit import sandbox
from startkit.cleanroom import EnvironmentProfile, ExpertMode, ShellSession
from startkit.kit import make_kit


@pytest.fixture
def profile():
    return EnvironmentProfile(
        managed_var_patterns=("SBX_*", "ATLAS_*"),
        managed_path_patterns=("*/sbx/*", "*/atlas/*"),
        defaults={"PATH": "/usr/bin:/bin", "HOME": "/tmp"},
        path_vars=frozenset({"PATH"}),
    )


@pytest.fixture
def session(profile, tmp_path):
    s = ShellSession(profile, ExpertMode.NonExpert, tmp_path,
                     host_env={"PATH": "/usr/bin:/bin"}, timeout=30.0)
    yield s
    s.close()


class SandboxEnv:
    """One installed local site, one reference site, and a work directory."""

    def __init__(self, root):
        self.root = root
        self.site = root / "site"
        self.reference = root / "reference"
        self.work = root / "work"
        self.work.mkdir()
        self.manifest = sandbox.make_release(self.site)
        sandbox.make_release(self.reference)
        self.release = sandbox.DEFAULT_RELEASE
        self.release_dir = self.site / self.release

    def chain(self):
        return sandbox.remote_fallback_fixture(self.site, self.reference)

    def chains(self):
        chain = self.chain()
        return [("settings/*", chain), ("deps/*", chain), ("bin/*", chain)]

    def kit(self, **kwargs):
        kwargs.setdefault("chains", self.chains())
        kwargs.setdefault("timeout", 30.0)
        return make_kit(self.work, self.site, **kwargs)

    def context(self):
        return {
            "site": str(self.site),
            "release": self.release,
            "release_dir": str(self.release_dir),
            "workspace": str(self.work),
            "package": "MyAnalysis",
            "options": "SandboxOptions.txt",
        }


@pytest.fixture
def sbx(tmp_path):
    return SandboxEnv(tmp_path)


@pytest.fixture
def scenarios():
    return {s.name: s for s in sandbox.standard_scenarios()}
