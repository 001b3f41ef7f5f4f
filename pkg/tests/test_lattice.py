"""
Тесты решёток: законы meet/join против перебора, дефекты гейтинговости,
пополнение нижними множествами.
"""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from core.errors import NoImplication, NotALattice, UnknownLevel
from core.lattice import DecisionLattice, downset_completion, reference_lattice


@st.composite
def bounded_posets(draw, max_inner=5):
    """Ограниченное ч.у.м. до 7 уровней: BOTTOM, TOP и случайный DAG между ними"""
    size = draw(st.integers(min_value=0, max_value=max_inner))
    inner = [f"L{i}" for i in range(size)]
    pairs = [(a, b) for a, b in itertools.combinations(inner, 2)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    order = list(chosen)
    order += [("BOTTOM", x) for x in inner] + [(x, "TOP") for x in inner]
    order.append(("BOTTOM", "TOP"))
    return DecisionLattice("random", ["BOTTOM", *inner, "TOP"], order,
                           bottom="BOTTOM", top="TOP")


def brute_glb(lat, a, b):
    names = lat.level_names
    lower = [x for x in names if lat.leq(x, a) and lat.leq(x, b)]
    greatest = [g for g in lower if all(lat.leq(x, g) for x in lower)]
    return greatest[0] if len(greatest) == 1 else None


def brute_lub(lat, a, b):
    names = lat.level_names
    upper = [x for x in names if lat.leq(a, x) and lat.leq(b, x)]
    least = [g for g in upper if all(lat.leq(g, x) for x in upper)]
    return least[0] if len(least) == 1 else None


class TestReferenceLattice:
    """Шестиуровневая решётка эталонного примера"""

    def test_bounds(self, lattice):
        assert lattice.bottom.name == "BOTTOM"
        assert lattice.top.name == "TOP"
        assert lattice.is_lattice

    def test_incomparable_branches(self, lattice):
        assert lattice.compare("D_AUTH", "D_M") == "incomparable"
        assert lattice.compare("D_S", "D_AUTH") == "lt"
        assert lattice.compare("TOP", "D_NEW") == "gt"
        assert lattice.meet("D_AUTH", "D_M").name == "BOTTOM"
        assert lattice.join("D_S", "D_M").name == "D_NEW"

    def test_meet_with_bottom_is_bottom(self, lattice):
        assert lattice.meet("D_AUTH", "BOTTOM").name == "BOTTOM"

    def test_not_distributive_witness(self, lattice):
        diagnostics = lattice.validate()
        distributive = [d for d in diagnostics if d.kind == "NotDistributive"]
        assert distributive
        assert distributive[0].witnesses == ("D_AUTH", "D_S", "D_M")
        assert all(d.is_heyting_defect for d in diagnostics)

    def test_implication_undefined(self, lattice):
        with pytest.raises(NoImplication) as info:
            lattice.implies("D_AUTH", "D_S")
        assert info.value.maximal == ("D_M", "D_S")

    def test_implication_defined(self, lattice):
        assert lattice.implies("D_S", "TOP").name == "TOP"
        assert lattice.implies("D_M", "D_S").name == "D_AUTH"

    def test_unknown_level(self, lattice):
        with pytest.raises(UnknownLevel):
            lattice.level("D_X")

    def test_foreign_level_rejected(self, lattice):
        other = DecisionLattice("other", ["BOTTOM", "TOP"], [("BOTTOM", "TOP")])
        with pytest.raises(UnknownLevel):
            lattice.leq(other.top, lattice.top)

    def test_folds(self, lattice):
        assert lattice.meet_all([]) == lattice.top
        assert lattice.join_all([]) == lattice.bottom
        assert lattice.meet_all(["TOP", "D_M", "TOP"]).name == "D_M"

    def test_maximal_antichain(self, lattice):
        names = [m.name for m in lattice.maximal(["BOTTOM", "D_S", "D_AUTH", "D_M"])]
        assert names == ["D_AUTH", "D_M"]


class TestDownsetCompletion:

    def test_completion_of_reference_lattice(self, lattice):
        completed = downset_completion(lattice)
        assert len(completed) == 8
        assert completed.validate() == []

    def test_original_levels_keep_order(self, lattice):
        completed = downset_completion(lattice)
        for a, b in itertools.product(lattice.level_names, repeat=2):
            assert completed.leq(a, b) == lattice.leq(a, b)

    def test_new_join_level(self, lattice):
        completed = downset_completion(lattice)
        joined = completed.join("D_AUTH", "D_M")
        assert joined.name == "D_AUTH+D_M"
        assert completed.compare(joined, "D_NEW") == "lt"

    def test_cyclic_order_rejected(self):
        cyclic = DecisionLattice("c", ["A", "B"], [("A", "B"), ("B", "A")])
        with pytest.raises(ValueError):
            downset_completion(cyclic)


class TestValidation:

    def test_chain_is_heyting(self):
        chain = DecisionLattice("chain", ["LOW", "MID", "HIGH"], [("LOW", "MID"), ("MID", "HIGH")])
        assert chain.validate() == []
        assert chain.implies("HIGH", "MID").name == "MID"
        assert chain.negate("MID").name == "LOW"

    def test_reference_negation(self, lattice):
        assert lattice.negate("D_M").name == "D_AUTH"
        assert lattice.negate(lattice.negate("D_M")).name == "D_M"

    def test_cycle_reported(self):
        cyclic = DecisionLattice("c", ["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")])
        diagnostics = cyclic.validate()
        assert {d.kind for d in diagnostics} == {"NotAPoset"}
        assert not cyclic.is_poset

    def test_unbounded_reported(self):
        vee = DecisionLattice("v", ["B", "X", "Y"], [("B", "X"), ("B", "Y")])
        kinds = {d.kind for d in vee.validate()}
        assert "NotBounded" in kinds
        with pytest.raises(NotALattice):
            _ = vee.top

    def test_missing_join_reported(self):
        bowtie = DecisionLattice(
            "bowtie", ["B", "A1", "A2", "C1", "C2", "T"],
            [("B", "A1"), ("B", "A2"), ("A1", "C1"), ("A1", "C2"), ("A2", "C1"), ("A2", "C2"),
             ("C1", "T"), ("C2", "T")])
        diagnostics = bowtie.validate()
        assert any(d.kind == "NotALattice" and set(d.witnesses) == {"A1", "A2"} for d in diagnostics)
        with pytest.raises(NotALattice):
            bowtie.join("A1", "A2")

    def test_equality_ignores_declaration_order(self, lattice):
        reordered = DecisionLattice(
            "trust_levels", reversed(lattice.level_names),
            [tuple(p) for p in lattice.covering_pairs()], bottom="BOTTOM", top="TOP")
        assert reordered == lattice


class TestLatticeLaws:
    """Свойства на случайных ограниченных ч.у.м."""

    @settings(max_examples=150, deadline=None)
    @given(bounded_posets())
    def test_meet_join_match_oracle(self, lat):
        for a, b in itertools.product(lat.level_names, repeat=2):
            glb, lub = brute_glb(lat, a, b), brute_lub(lat, a, b)
            if glb is None:
                with pytest.raises(NotALattice):
                    lat.meet(a, b)
            else:
                assert lat.meet(a, b).name == glb
            if lub is None:
                with pytest.raises(NotALattice):
                    lat.join(a, b)
            else:
                assert lat.join(a, b).name == lub

    @settings(max_examples=150, deadline=None)
    @given(bounded_posets())
    def test_adjunction_where_defined(self, lat):
        if not lat.is_lattice:
            return
        names = lat.level_names
        for a, b in itertools.product(names, repeat=2):
            try:
                implication = lat.implies(a, b)
            except NoImplication:
                continue
            for x in names:
                assert lat.leq(lat.meet(x, a), b) == lat.leq(x, implication)

    @settings(max_examples=100, deadline=None)
    @given(bounded_posets())
    def test_distributive_lattices_are_heyting(self, lat):
        if not lat.is_lattice:
            return
        kinds = {d.kind for d in lat.validate()}
        if "NotDistributive" not in kinds:
            assert "NoImplication" not in kinds

    @settings(max_examples=60, deadline=None)
    @given(bounded_posets(max_inner=4))
    def test_completion_is_heyting(self, lat):
        completed = downset_completion(lat)
        assert completed.validate() == []
        for a, b in itertools.product(lat.level_names, repeat=2):
            assert completed.leq(a, b) == lat.leq(a, b)
