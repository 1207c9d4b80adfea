"""Steps, templates, recipes, planning and execution.

A step is the programmatic unit of work; a recipe composes steps inside
a shared init/finalize frame.  Planning is pure: it produces a
topological order over init + core + finalize that honors the declared
constraints, deduplicates shared steps, and marks already-satisfied
steps as skipped.  Execution wires each step through the tool adapters
and hands failures to the fault engine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Callable

from . import faults, tooladapt
from .cleanroom import CommandResult, ShellSession
from .errors import (
    CyclicConstraints,
    DuplicateRecipe,
    InputInvalid,
    OverlappingPhases,
    UnknownRecipe,
    UnknownStep,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Step:
    id: str
    command: str = "true"                 # template over {inputs} and context
    requires_tools: tuple[str, ...] = ()
    requires_resources: tuple[str, ...] = ()
    produces: tuple[str, ...] = ()        # artifact path templates
    shared: bool = False                  # eligible for dedup / satisfied-skip
    always_run: bool = False              # finalize steps run even after failure
    user_input_param: str | None = None   # input param holding user-authored content
    resource_key: str | None = None


@dataclass(frozen=True)
class TaskTemplate:
    init_steps: tuple[str, ...]
    finalize_steps: tuple[str, ...]


def make_template(init: list[str], finalize: list[str]) -> TaskTemplate:
    overlap = set(init) & set(finalize)
    if overlap:
        raise OverlappingPhases(f"steps in both phases: {sorted(overlap)}")
    return TaskTemplate(tuple(init), tuple(finalize))


@dataclass(frozen=True)
class Recipe:
    name: str
    template: TaskTemplate
    core_steps: tuple[str, ...]
    constraints: tuple[tuple[str, str], ...] = ()   # (before, after)
    inputs: dict[str, str] = field(default_factory=dict)  # param -> default (mandatory)
    outputs: tuple[str, ...] = ()
    description: str = ""

    def all_step_ids(self) -> list[str]:
        return list(self.template.init_steps) + list(self.core_steps) + \
            list(self.template.finalize_steps)


@dataclass
class PlanEntry:
    step_id: str
    skip_reason: str | None = None


@dataclass
class ExecutionPlan:
    entries: list[PlanEntry]

    def runnable(self) -> list[str]:
        return [e.step_id for e in self.entries if e.skip_reason is None]


class StepUniverse:
    """All step definitions known to a recipe registry."""

    def __init__(self, steps: list[Step] | None = None):
        self._steps: dict[str, Step] = {}
        self._order: list[str] = []
        for step in steps or []:
            self.add(step)

    def add(self, step: Step) -> None:
        if step.id in self._steps:
            raise UnknownStep(f"step id {step.id!r} defined twice")
        self._steps[step.id] = step
        self._order.append(step.id)

    def get(self, step_id: str) -> Step:
        try:
            return self._steps[step_id]
        except KeyError:
            raise UnknownStep(f"no step named {step_id!r}") from None

    def declaration_index(self, step_id: str) -> int:
        return self._order.index(step_id)


def _phase_edges(recipe: Recipe) -> list[tuple[str, str]]:
    edges = []
    init, core, fin = (recipe.template.init_steps, recipe.core_steps,
                       recipe.template.finalize_steps)
    for a in init:
        for b in core or fin:
            edges.append((a, b))
    for a in core:
        for b in fin:
            edges.append((a, b))
    return edges


def plan(recipe: Recipe, universe: StepUniverse,
         already_satisfied: set[str] | None = None) -> ExecutionPlan:
    return plan_combined([recipe], universe, already_satisfied)


def plan_combined(recipes: list[Recipe], universe: StepUniverse,
                  already_satisfied: set[str] | None = None) -> ExecutionPlan:
    """Topological order over the union of the recipes' steps.

    Shared steps appear once no matter how many recipes reference them.
    Ties break by declaration order, then lexicographic id, so traces
    are reproducible.
    """
    already_satisfied = already_satisfied or set()
    nodes: list[str] = []
    seen: set[str] = set()
    edges: list[tuple[str, str]] = []
    for recipe in recipes:
        for sid in recipe.all_step_ids():
            universe.get(sid)  # raises UnknownStep
            if sid not in seen:
                seen.add(sid)
                nodes.append(sid)
        edges.extend(_phase_edges(recipe))
        edges.extend(recipe.constraints)

    sorter = TopologicalSorter({n: set() for n in nodes})
    for before, after in edges:
        sorter.add(after, before)

    def tie_break(sid: str) -> tuple[int, str]:
        try:
            return (universe.declaration_index(sid), sid)
        except ValueError:
            return (1 << 30, sid)

    try:
        sorter.prepare()
    except CycleError as exc:
        raise CyclicConstraints(exc.args[1]) from None
    ordered: list[str] = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready(), key=tie_break)
        ordered.extend(ready)
        sorter.done(*ready)

    entries = [
        PlanEntry(sid, "already satisfied" if sid in already_satisfied else None)
        for sid in ordered
    ]
    return ExecutionPlan(entries)


# -- execution ----------------------------------------------------------------

@dataclass
class TraceEntry:
    kind: str       # reset | run | skip | tool | fault | resolve | finalize | artifact
    step_id: str
    detail: str = ""


@dataclass
class RecipeResult:
    success: bool
    trace: list[TraceEntry]
    artifacts: dict[str, str] = field(default_factory=dict)  # key -> path
    error: Exception | None = None

    def steps_run(self) -> list[str]:
        return [t.step_id for t in self.trace if t.kind == "run"]


EventSink = Callable[[str, str, str], None]   # (kind, payload, origin)


def _null_sink(kind: str, payload: str, origin: str) -> None:
    pass


def run_recipe(
    session: ShellSession,
    recipe: Recipe,
    inputs: dict[str, str] | None,
    fault_engine: "faults.FaultEngine | None",
    universe: StepUniverse,
    tools: tooladapt.ToolRegistry | None = None,
    context: dict[str, str] | None = None,
    sink: EventSink = _null_sink,
) -> RecipeResult:
    """Execute a recipe inside a session, recovering where possible.

    Every step is retried (at most twice) after the fault engine reports
    a successful resolution; user-action and transient failures stop the
    core immediately with the tool's own diagnostic preserved verbatim.
    Finalize steps flagged always_run still execute after a failure.
    """
    values = dict(recipe.inputs)
    for key, val in (inputs or {}).items():
        if key not in values:
            raise InputInvalid(f"recipe {recipe.name!r} has no input {key!r}")
        values[key] = str(val)
    subst = {**(context or {}), **values}

    trace: list[TraceEntry] = []
    artifacts: dict[str, str] = {}
    failure: Exception | None = None

    session.reset_to_known_state()
    trace.append(TraceEntry("reset", "-", str(session.base_dir)))
    sink("status", f"recipe {recipe.name} started", "kit")

    if fault_engine is not None:
        for wa in fault_engine.preventive_workarounds():
            for action in wa.actions:
                cmd = action.format(**subst) if subst else action
                session.execute(cmd)
                trace.append(TraceEntry("preventive", "-", wa.description))
                sink("log", f"preventive workaround: {wa.description}", "kit")

    the_plan = plan(recipe, universe, already_satisfied=session.satisfied_steps)
    finalize_ids = set(recipe.template.finalize_steps)

    for entry in the_plan.entries:
        step = universe.get(entry.step_id)
        if entry.skip_reason is not None:
            trace.append(TraceEntry("skip", step.id, entry.skip_reason))
            sink("log", f"skip {step.id}: {entry.skip_reason}", "kit")
            continue
        if failure is not None and not (step.id in finalize_ids and step.always_run):
            trace.append(TraceEntry("skip", step.id, "earlier failure"))
            continue
        try:
            _run_step(session, step, subst, fault_engine, tools, trace, sink)
        except Exception as exc:  # noqa: BLE001 - surfaced via RecipeResult
            if failure is None:
                failure = exc
            trace.append(TraceEntry("fault", step.id, str(exc)))
            sink("status", f"step {step.id} failed: {exc}", "kit")
            continue
        if step.shared:
            session.satisfied_steps.add(step.id)
        for art in step.produces:
            path = art.format(**subst)
            artifacts[path] = path
            trace.append(TraceEntry("artifact", step.id, path))

    ok = failure is None
    sink("status", f"recipe {recipe.name} {'succeeded' if ok else 'failed'}", "kit")
    return RecipeResult(success=ok, trace=trace, artifacts=artifacts, error=failure)


def _run_step(session, step: Step, subst: dict[str, str], fault_engine,
              tools: tooladapt.ToolRegistry | None, trace: list[TraceEntry],
              sink: EventSink) -> None:
    from .errors import RecipeFailed

    for tool_name in step.requires_tools:
        if tools is None:
            break
        handle = tools.lookup(tool_name)
        status = tooladapt.ensure(session, handle)
        trace.append(TraceEntry("tool", step.id, f"{tool_name}: {status.state.value}"))
        if not status.usable:
            event = _tool_failure_event(step, tool_name, status, fault_engine)
            _handle_failure(session, step, event, fault_engine, trace, sink,
                            retry=lambda: tooladapt.ensure(session, handle).usable)
            continue

    command = step.command.format(**subst)
    attempts = 0
    while True:
        attempts += 1
        sink("command", command, "shell")
        result = session.execute(command)
        if result.stdout:
            sink("output", result.stdout_text(), "stdout")
        if result.stderr:
            sink("output", result.stderr_text(), "stderr")
        if result.exit_code == 0:
            trace.append(TraceEntry("run", step.id, command))
            return
        if fault_engine is None or attempts >= 3:
            raise RecipeFailed(step.id, faults.ErrorClass.SystemBroken,
                               result.stderr_text() or result.stdout_text(), result)
        event = faults.FailureEvent(
            step_id=step.id,
            tool=step.requires_tools[0] if step.requires_tools else None,
            result=result,
            resource_key=faults.resource_key_from_output(result) or step.resource_key,
            config_key=fault_engine.config_key,
            user_input=subst.get(step.user_input_param) if step.user_input_param else None,
        )
        _handle_failure(session, step, event, fault_engine, trace, sink)
        # resolution succeeded; loop to retry the command


def _tool_failure_event(step: Step, tool_name: str, status, fault_engine):
    summary = "; ".join(f"{a}: {d}" for a, d in status.evidence)
    result = CommandResult(stdout=b"", stderr=summary.encode(), exit_code=127,
                           duration=0.0)
    return faults.FailureEvent(
        step_id=step.id, tool=tool_name, result=result,
        resource_key=f"bin/{tool_name}",
        config_key=fault_engine.config_key if fault_engine else None,
        user_input=None,
    )


def _handle_failure(session, step: Step, event, fault_engine,
                    trace: list[TraceEntry], sink: EventSink,
                    retry=None) -> None:
    """Classify; recover SystemBroken failures, surface everything else."""
    from .errors import RecipeFailed

    cls = faults.classify(event, fault_engine.rules if fault_engine else None)
    trace.append(TraceEntry("fault", step.id, f"classified {cls.name}"))
    if cls is faults.ErrorClass.UserAction:
        # The tool's own diagnostic reaches the user byte-identical.
        diagnostic = event.result.stderr_text() or event.result.stdout_text()
        raise RecipeFailed(step.id, cls, diagnostic, event.result)
    if cls is faults.ErrorClass.Transient:
        hint = fault_engine.transient_hint(event) if fault_engine else ""
        raise RecipeFailed(step.id, cls,
                           f"{event.result.stderr_text().strip()} "
                           f"(transient; {hint or 'come back later and try again'})",
                           event.result)
    if fault_engine is None:
        raise RecipeFailed(step.id, cls, event.result.stderr_text(), event.result)

    outcome = fault_engine.resolve(session, event)
    for att in outcome.attempts:
        trace.append(TraceEntry("resolve", step.id, att))
        sink("log", f"recovery attempt: {att}", "kit")
    if not outcome.resolved:
        raise RecipeFailed(step.id, cls, outcome.root_cause or
                           event.result.stderr_text(), event.result)
    trace.append(TraceEntry("resolve", step.id, f"resolved via {outcome.how}"))
    sink("log", f"resolved via {outcome.how}", "kit")
    if retry is not None and not retry():
        raise RecipeFailed(step.id, cls, "resolution did not restore the tool",
                           event.result)


# -- registry -----------------------------------------------------------------

class RecipeRegistry:
    def __init__(self, universe: StepUniverse | None = None):
        self.universe = universe or StepUniverse()
        self._recipes: dict[str, Recipe] = {}

    def register(self, recipe: Recipe) -> None:
        if recipe.name in self._recipes:
            raise DuplicateRecipe(f"recipe {recipe.name!r} already registered")
        for sid in recipe.all_step_ids():
            self.universe.get(sid)
        self._recipes[recipe.name] = recipe

    def lookup(self, name: str) -> Recipe:
        try:
            return self._recipes[name]
        except KeyError:
            raise UnknownRecipe(f"no recipe named {name!r}") from None

    def list_recipes(self) -> list[tuple[str, dict[str, str], str]]:
        return [
            (r.name, dict(r.inputs), r.description)
            for r in sorted(self._recipes.values(), key=lambda r: r.name)
        ]
