import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from startkit.errors import (
    CyclicConstraints,
    InputInvalid,
    OverlappingPhases,
    RecipeFailed,
    UnknownStep,
)
from startkit.faults import ErrorClass
from startkit.recipes import (
    Recipe,
    RecipeRegistry,
    Step,
    StepUniverse,
    make_template,
    plan,
    plan_combined,
    run_recipe,
)


def _universe(ids, **step_kwargs):
    return StepUniverse([Step(i, **step_kwargs) for i in ids])


def _recipe(name, universe_ids, init=(), core=(), fin=(), constraints=(),
            inputs=None):
    return Recipe(name=name, template=make_template(list(init), list(fin)),
                  core_steps=tuple(core), constraints=tuple(constraints),
                  inputs=inputs or {})


# -- templates ---------------------------------------------------------------

def test_template_valid():
    t = make_template(["setup_env"], ["report"])
    assert t.init_steps == ("setup_env",)


def test_template_overlap_rejected():
    with pytest.raises(OverlappingPhases):
        make_template(["a"], ["a"])


def test_template_empty_degenerate():
    t = make_template([], [])
    assert t.init_steps == () and t.finalize_steps == ()


# -- planning ----------------------------------------------------------------

def test_plan_empty_recipe():
    u = StepUniverse([])
    r = _recipe("empty", [], init=[], core=[], fin=[])
    assert plan(r, u).entries == []


def test_plan_orders_phases():
    u = _universe(["i", "c1", "c2", "f"])
    r = _recipe("r", None, init=["i"], core=["c2", "c1"], fin=["f"],
                constraints=[("c1", "c2")])
    order = [e.step_id for e in plan(r, u).entries]
    assert order.index("i") < order.index("c1") < order.index("c2") < order.index("f")


def test_plan_cycle_names_steps():
    u = _universe(["a", "b"])
    r = _recipe("r", None, core=["a", "b"], constraints=[("a", "b"), ("b", "a")])
    with pytest.raises(CyclicConstraints) as exc:
        plan(r, u)
    assert {"a", "b"} <= set(exc.value.cycle)


def test_plan_unknown_step():
    u = _universe(["a"])
    r = _recipe("r", None, core=["a", "ghost"])
    with pytest.raises(UnknownStep):
        plan(r, u)


def test_plan_marks_satisfied_steps():
    u = _universe(["a", "b"])
    r = _recipe("r", None, core=["a", "b"])
    p = plan(r, u, already_satisfied={"a"})
    reasons = {e.step_id: e.skip_reason for e in p.entries}
    assert reasons["a"] == "already satisfied"
    assert reasons["b"] is None


def test_combined_plan_dedups_shared_init():
    u = StepUniverse([Step("init", shared=True), Step("a"), Step("b"),
                      Step("fin", always_run=True)])
    r1 = _recipe("one", None, init=["init"], core=["a"], fin=["fin"])
    r2 = _recipe("two", None, init=["init"], core=["b"], fin=["fin"])
    p = plan_combined([r1, r2], u)
    ids = [e.step_id for e in p.entries]
    assert ids.count("init") == 1
    assert ids.count("fin") == 1


def test_plan_tie_break_stable():
    u = _universe(["z", "m", "a"])
    r = _recipe("r", None, core=["z", "m", "a"])
    assert [e.step_id for e in plan(r, u).entries] == ["z", "m", "a"]


@given(data=st.data())
@settings(max_examples=100, deadline=None)
def test_plan_random_dags_satisfy_constraints(data):
    n = data.draw(st.integers(min_value=1, max_value=12))
    ids = [f"s{i}" for i in range(n)]
    # edges only forward in a random permutation: guaranteed acyclic
    perm = data.draw(st.permutations(ids))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if data.draw(st.booleans()):
                edges.append((perm[i], perm[j]))
    u = _universe(ids)
    r = _recipe("r", None, core=ids, constraints=edges)
    order = [e.step_id for e in plan(r, u).entries]
    position = {s: k for k, s in enumerate(order)}
    assert sorted(order) == sorted(ids)
    for before, after in edges:
        assert position[before] < position[after]


# -- execution ---------------------------------------------------------------

@pytest.fixture
def exec_universe(tmp_path):
    return StepUniverse([
        Step("init", command="echo init", shared=True),
        Step("work", command="echo work"),
        Step("boom", command="echo 'error: kaboom' >&2; (exit 1)",
             user_input_param="source"),
        Step("sysboom", command="echo broken >&2; (exit 2)"),
        Step("fin", command="echo fin", always_run=True),
    ])


def test_run_recipe_trivial(session, exec_universe):
    r = Recipe("ok", make_template(["init"], ["fin"]), ("work",))
    result = run_recipe(session, r, {}, None, exec_universe)
    assert result.success
    kinds = [t.kind for t in result.trace]
    assert kinds[0] == "reset"
    assert result.steps_run() == ["init", "work", "fin"]


def test_run_recipe_phase_ordering(session, exec_universe):
    r = Recipe("ok", make_template(["init"], ["fin"]), ("work",))
    result = run_recipe(session, r, {}, None, exec_universe)
    order = result.steps_run()
    assert order.index("init") < order.index("work") < order.index("fin")


def test_run_recipe_unknown_input(session, exec_universe):
    r = Recipe("ok", make_template([], []), ("work",))
    with pytest.raises(InputInvalid):
        run_recipe(session, r, {"nope": "1"}, None, exec_universe)


def test_user_action_failure_preserves_diagnostic(session, exec_universe):
    from startkit.faults import ConfigKey, FaultEngine
    engine = FaultEngine(ConfigKey("r", "c", "p"), "/tmp")
    r = Recipe("bad", make_template([], ["fin"]), ("boom",),
               inputs={"source": "user.c"})
    result = run_recipe(session, r, {}, engine, exec_universe)
    assert not result.success
    assert isinstance(result.error, RecipeFailed)
    assert result.error.error_class is ErrorClass.UserAction
    assert "error: kaboom" in str(result.error)


def test_failure_still_runs_always_run_finalize(session, exec_universe):
    r = Recipe("bad", make_template([], ["fin"]), ("sysboom", "work"),
               constraints=(("sysboom", "work"),))
    result = run_recipe(session, r, {}, None, exec_universe)
    assert not result.success
    assert "fin" in result.steps_run()
    assert "work" not in result.steps_run()


def test_second_run_skips_shared_steps(session, exec_universe):
    r = Recipe("ok", make_template(["init"], ["fin"]), ("work",))
    first = run_recipe(session, r, {}, None, exec_universe)
    second = run_recipe(session, r, {}, None, exec_universe)
    assert len(second.steps_run()) < len(first.steps_run())
    assert "init" not in second.steps_run()


def test_shared_step_executes_once_across_recipes(session, exec_universe):
    r1 = Recipe("one", make_template(["init"], []), ("work",))
    r2 = Recipe("two", make_template(["init"], []), ())
    run_recipe(session, r1, {}, None, exec_universe)
    result2 = run_recipe(session, r2, {}, None, exec_universe)
    assert "init" not in result2.steps_run()


# -- registry ----------------------------------------------------------------

def test_registry_listing_sorted(exec_universe):
    reg = RecipeRegistry(exec_universe)
    reg.register(Recipe("zeta", make_template([], []), ("work",)))
    reg.register(Recipe("alpha", make_template([], []), ("work",),
                        inputs={"x": "1"}, description="first"))
    listing = reg.list_recipes()
    assert [name for name, _, _ in listing] == ["alpha", "zeta"]
    assert listing[0][1] == {"x": "1"}


def test_registry_empty():
    reg = RecipeRegistry(StepUniverse([]))
    assert reg.list_recipes() == []
