"""Exception hierarchy for the kit.

Errors are split by audience: user errors (bad input, missing files the
user named) exit with status 1, system errors (broken environment,
unusable shell) exit with status 2.
"""


class KitError(Exception):
    """Base class for all kit errors."""


class UserError(KitError):
    """The user asked for something that cannot be done as asked."""


class SystemError_(KitError):
    """The environment or a managed resource is broken."""


# -- cleanroom ---------------------------------------------------------------

class SpawnFailed(SystemError_):
    pass


class BadBaseDir(UserError):
    pass


class SessionLost(SystemError_):
    """The background shell died mid-command. A fresh shell was respawned."""


class CommandTimeout(SystemError_):
    """A command did not complete in time; the session was respawned."""


class InvalidProfile(UserError):
    pass


# -- tooladapt ---------------------------------------------------------------

class DuplicateTool(UserError):
    pass


class UnknownTool(UserError):
    pass


# -- recipes -----------------------------------------------------------------

class OverlappingPhases(UserError):
    pass


class CyclicConstraints(UserError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cyclic step constraints: " + " -> ".join(self.cycle))


class UnknownStep(UserError):
    pass


class InputInvalid(UserError):
    pass


class RecipeFailed(KitError):
    def __init__(self, step_id, error_class, message, result=None):
        self.step_id = step_id
        self.error_class = error_class
        self.result = result
        super().__init__(f"step '{step_id}' failed ({error_class.name}): {message}")


class DuplicateRecipe(UserError):
    pass


class UnknownRecipe(UserError):
    pass


# -- faults ------------------------------------------------------------------

class RegistryUnreadable(SystemError_):
    pass


class CaseNotClear(KitError):
    """Workspace repair refused: the diagnosis did not match a known case exactly."""


class JournalWriteFailed(SystemError_):
    """The repair journal could not be written; no mutation was performed."""


class CacheUnwritable(SystemError_):
    pass


# -- scaffold ----------------------------------------------------------------

class AlreadyExists(UserError):
    pass


class BadName(UserError):
    pass


class UnknownRelease(UserError):
    pass


class NotAPackage(UserError):
    pass


class UnknownOverrideKey(UserError):
    pass


class UnplannableRecipe(UserError):
    pass


# -- interact ----------------------------------------------------------------

class LaunchFailed(SystemError_):
    pass


class PromptTimeout(SystemError_):
    pass


class NotAtPrompt(UserError):
    pass


class BridgeClosed(KitError):
    def __init__(self, exit_code):
        self.exit_code = exit_code
        super().__init__(f"interactive program exited with code {exit_code}")


# -- cli / service -----------------------------------------------------------

class ScriptNotFound(UserError):
    pass


class BindFailed(SystemError_):
    pass


class BadDir(UserError):
    pass


# -- sandbox -----------------------------------------------------------------

class SiteUnwritable(SystemError_):
    pass


class ScenarioInapplicable(UserError):
    pass


class ReferenceIncomplete(UserError):
    pass


class ConfigFormatError(UserError):
    pass
