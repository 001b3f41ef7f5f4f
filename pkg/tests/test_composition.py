"""
Тесты композиции: meet-агрегирование, опосредованное доверие, циклы и общие узлы.
"""

from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from core.capability import preferred_point
from core.composition import CompositionView, aggregate_trust, render_tree, validate_tree
from core.errors import CycleDetected, UnknownElement
from core.evidence import Element, World
from core.pipeline import run_pipeline

POOL = ["pc1", "pc2", "pc_new", "pc_compromised", "pc_impersonated", "sensor1", "bare_box",
        "cold_unit", "gas_sensor"]


@st.composite
def random_dags(draw):
    """Порядок узлов и рёбра только вперёд по порядку: DAG с возможными общими детьми"""
    order = draw(st.permutations(POOL))
    size = draw(st.integers(min_value=1, max_value=len(order)))
    nodes = list(order[:size])
    children = {}
    for i, node in enumerate(nodes):
        later = nodes[i + 1:]
        children[node] = tuple(draw(st.lists(st.sampled_from(later), unique=True))) if later else ()
    return nodes, children


def world_with_children(env, children):
    elements = dict(env.world.elements)
    for eid, kids in children.items():
        elements[eid] = replace(elements[eid], children=kids)
    return env.with_world(World(elements, env.world.mechanisms))


def reachable(children, root):
    seen, stack = set(), [root]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(children.get(node, ()))
    return seen


class TestReferenceCompositions:

    def test_rack_meet(self, reference_model, env, ctx):
        aggregate = aggregate_trust(env, reference_model.compositions["rack_view"], None, ctx)
        assert aggregate.level.name == "D_M"
        levels = {n.element: n.level.name for n in aggregate.breakdown}
        assert levels == {"rack": "TOP", "pc1": "TOP", "sensor1": "D_M", "pc2": "TOP"}

    def test_ventilator_meet_is_bottom(self, reference_model, env, ctx):
        aggregate = aggregate_trust(env, reference_model.compositions["ventilator"], None, ctx)
        assert aggregate.level == env.lattice.bottom

    def test_ventilator_mediated(self, reference_model, env, ctx):
        view = reference_model.compositions["ventilator"]
        aggregate = aggregate_trust(env, view, None, ctx, mode="mediated")
        assert aggregate.level.name == "TOP"
        sensor = next(n for n in aggregate.breakdown if n.element == "gas_sensor")
        assert sensor.level == env.lattice.bottom
        assert sensor.contribution.name == "TOP"
        assert sensor.mediated_by == ("ventilator_mainboard",)

    def test_tampered_mediator_does_not_vouch_for_itself(self, reference_model, env, ctx):
        board = env.world.elements["ventilator_mainboard"]
        tampered = env.with_element(replace(board, state={**board.state, "firmware": "evil_fw"}))
        view = reference_model.compositions["ventilator"]
        aggregate = aggregate_trust(tampered, view, None, ctx, mode="mediated")
        contributions = {n.element: (n.level.name, n.contribution.name, n.mediated_by)
                         for n in aggregate.breakdown}
        assert contributions["ventilator_mainboard"] == ("D_S", "D_S", ())
        assert contributions["gas_sensor"] == ("BOTTOM", "TOP", ("ventilator_mainboard",))
        assert aggregate.level.name == "D_S"

    def test_render_tree(self, reference_model, env, ctx):
        aggregate = aggregate_trust(env, reference_model.compositions["rack_view"], None, ctx)
        lines = render_tree(aggregate)
        assert lines[0] == "rack: TOP"
        assert "  sensor1: D_M" in lines

    def test_unknown_mode(self, reference_model, env, ctx):
        with pytest.raises(ValueError):
            aggregate_trust(env, reference_model.compositions["rack_view"], None, ctx, mode="join")


class TestTreeValidation:

    def test_cycle_detected(self, env, ctx):
        world = World({"a": Element("a", children=("b",)), "b": Element("b", children=("a",))},
                      env.world.mechanisms)
        diagnostics = validate_tree(world, "a")
        assert [d.kind for d in diagnostics] == ["CycleDetected"]
        assert set(diagnostics[0].nodes) == {"a", "b"}
        with pytest.raises(CycleDetected):
            aggregate_trust(env.with_world(world), CompositionView("a"), None, ctx)

    def test_unknown_child(self, env, ctx):
        world = World({"a": Element("a", children=("ghost",))}, env.world.mechanisms)
        assert [d.kind for d in validate_tree(world, "a")] == ["UnknownElement"]
        with pytest.raises(UnknownElement):
            aggregate_trust(env.with_world(world), CompositionView("a"), None, ctx)

    def test_unknown_root(self, env):
        assert validate_tree(env.world, "nowhere")[0].kind == "UnknownElement"

    def test_reference_trees_are_valid(self, reference_model, env):
        for view in reference_model.compositions.values():
            assert validate_tree(env.world, view.root) == []


class TestSharedNodes:

    @settings(max_examples=60, deadline=None)
    @given(random_dags())
    def test_meet_over_unique_nodes(self, reference_model, dag):
        nodes, children = dag
        env = world_with_children(reference_model.environment(), children)
        root = nodes[0]
        aggregate = aggregate_trust(env, CompositionView(root), None, reference_model.new_context())

        evaluated = [n.element for n in aggregate.breakdown]
        assert len(evaluated) == len(set(evaluated))
        assert set(evaluated) == reachable(children, root)

        ctx = reference_model.new_context()
        expected = []
        for eid in sorted(reachable(children, root)):
            point = preferred_point(env, eid)
            expected.append(env.lattice.bottom if point is None
                            else run_pipeline(env, eid, point, ctx)[0])
        assert aggregate.level == env.lattice.meet_all(expected)
