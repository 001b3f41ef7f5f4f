"""
Тесты политик verify и decide: статические проверки и таблица решений
эталонного мира клетка за клеткой.
"""

import itertools

import pytest

from core.decision import DecidePolicy, DecideRule, Guard, check_decide_policy, decide
from core.errors import PolicyUnchecked
from core.evidence import (
    NULL_MEASUREMENT, NULL_SIGNATURE, Claim, ClaimId, MeasurementValues, Signature,
    measurement_digest, mint_claim_id,
)
from core.verdict import (
    CHI_I, CHI_M, CHI_NULL, CHI_S, And, Atom, Not, ResultClass, VerifyCase, VerifyPolicy,
    check_verify_policy, ctx_guard, enumerate_valuations, eval_atom, render_expr, verify,
)

OK = ResultClass("OK")
ERR = ResultClass("ERR", is_error=True)


def two_class_policy(*cases, default="ERR"):
    return VerifyPolicy("custom", (OK, ERR), tuple(VerifyCase(c, t) for c, t in cases), default)


def make_claim(ctx, element, key_ref, measured, signed, fresh, tampered=False):
    """Утверждение заданного квадранта M × S со свежим или чужим nonce"""
    claim_id = mint_claim_id(ctx) if fresh else ClaimId("0" * 32, ctx.clock)
    measurement = NULL_MEASUREMENT
    if measured:
        values = dict(ctx.expected_for(element))
        if tampered:
            values["pcr0"] = "f" * 64
        measurement = MeasurementValues.of(values)
    signature = NULL_SIGNATURE
    if signed:
        signature = Signature(key_ref, measurement_digest(measurement), claim_id.nonce)
    return Claim(measurement, signature, claim_id, element, "quote")


class TestReferencePolicies:

    def test_reference_policies_check_clean(self, env):
        errors = [d for d in env.check_policies() if d.severity == "error"]
        assert errors == []
        assert env.verify_policy("standard_verify").checked
        assert env.decide_policy("standard_decide").checked_against("standard_verify")

    def test_reference_case_count(self, env):
        assert len(env.verify_policy("standard_verify").cases) == 4
        assert len(env.decide_policy("standard_decide").rules) == 6

    def test_null_claims_reach_only_error(self, env):
        policy = env.verify_policy("standard_verify")
        atoms = set(policy.atoms()) | {CHI_S, CHI_M, CHI_NULL}
        for valuation in enumerate_valuations(atoms):
            if valuation[CHI_NULL]:
                label, _ = policy.select(valuation)
                assert label == "ERR"

    @pytest.mark.parametrize("element,key_ref,known", [("pc1", "ak_pc1", True),
                                                       ("pc_new", "ak_new", False)])
    def test_decision_table(self, env, ctx, element, key_ref, known):
        verify_policy = env.verify_policy("standard_verify")
        decide_policy = env.decide_policy("standard_decide")
        expected = {
            (True, True, True): "TOP" if known else "D_NEW",
            (False, True, True): "D_AUTH",
            (True, False, True): "D_M",
            (False, False, True): "BOTTOM",
        }
        for measured, signed, fresh in itertools.product((True, False), repeat=3):
            claim = make_claim(ctx, element, key_ref, measured, signed, fresh)
            outcome = verify(verify_policy, claim, ctx)
            level = decide(decide_policy, outcome)
            want = expected[(measured, signed, True)] if fresh else "BOTTOM"
            assert level.name == want, (measured, signed, fresh)

    def test_signed_wrong_measurement_is_d_s(self, env, ctx):
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True, tampered=True)
        outcome = verify(env.verify_policy("standard_verify"), claim, ctx)
        assert outcome.result_class.label == "S"
        assert decide(env.decide_policy("standard_decide"), outcome).name == "D_S"

    def test_stale_reference_values_are_error(self, env, ctx):
        ctx.metadata["reference_values"] = "outdated"
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True)
        outcome = verify(env.verify_policy("standard_verify"), claim, ctx)
        assert outcome.result_class.is_error
        assert ctx_guard("reference_values", "current") in outcome.failed_atoms()

    def test_alt_decide_ignores_measurement_for_s(self, env, ctx):
        claim = make_claim(ctx, "pc1", "ak_pc1", False, True, True)
        outcome = verify(env.verify_policy("standard_verify"), claim, ctx)
        assert decide(env.decide_policy("alt_decide"), outcome).name == "D_S"


class TestAtoms:

    def test_chi_i_consumes_on_live_context(self, ctx):
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True)
        assert eval_atom(CHI_I, claim, ctx)
        assert not eval_atom(CHI_I, claim, ctx)

    def test_chi_s_needs_registered_owner(self, ctx):
        claim = make_claim(ctx, "pc1", "ak_rogue", True, True, True)
        assert not eval_atom(CHI_S, claim, ctx)

    def test_chi_m_false_without_expectation(self, ctx):
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True)
        ctx.expectations.pop("pc1")
        assert not eval_atom(CHI_M, claim, ctx)

    def test_render_expression(self):
        expr = And(Not(Atom(CHI_S)), Atom(CHI_M))
        assert render_expr(expr) == "not chi_s and chi_m"


class TestVerifyChecker:

    def test_overlap(self):
        policy = two_class_policy((Atom(CHI_S), "OK"), (Atom(CHI_M), "OK"))
        kinds = {d.kind for d in check_verify_policy(policy)}
        assert "Overlap" in kinds
        assert not policy.checked

    def test_gap_without_default(self):
        policy = two_class_policy((Atom(CHI_S), "OK"), (Atom(CHI_NULL), "ERR"), default=None)
        diagnostics = check_verify_policy(policy)
        gap = [d for d in diagnostics if d.kind == "Gap"]
        assert gap and gap[0].witness
        assert any(d.kind == "MissingDefault" and d.severity == "warning" for d in diagnostics)

    def test_null_routed_to_success(self):
        policy = two_class_policy((Not(Atom(CHI_S)), "OK"))
        kinds = {d.kind for d in check_verify_policy(policy)}
        assert "NullNotError" in kinds

    def test_two_error_classes(self):
        policy = VerifyPolicy("two_err", (ResultClass("E1", True), ResultClass("E2", True)),
                              (), "E1")
        kinds = {d.kind for d in check_verify_policy(policy)}
        assert "ErrorClassCount" in kinds

    def test_clean_policy_is_marked(self):
        policy = two_class_policy((And(Atom(CHI_S), Atom(CHI_I)), "OK"))
        assert check_verify_policy(policy) == []
        assert policy.checked

    def test_unchecked_policy_refused(self, ctx):
        policy = two_class_policy((Atom(CHI_S), "OK"), (Atom(CHI_M), "OK"))
        check_verify_policy(policy)
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True)
        with pytest.raises(PolicyUnchecked):
            verify(policy, claim, ctx)


class TestDecideChecker:

    @pytest.fixture
    def checked_verify(self):
        policy = two_class_policy((And(Atom(CHI_S), Atom(CHI_I)), "OK"))
        check_verify_policy(policy)
        return policy

    def test_uncovered_class(self, lattice, checked_verify):
        policy = DecidePolicy("d", lattice, (DecideRule("OK", None, lattice.top),))
        kinds = {d.kind for d in check_decide_policy(policy, checked_verify)}
        assert "Gap" in kinds
        assert not policy.checked_against("custom")

    def test_error_not_bottom(self, lattice, checked_verify):
        policy = DecidePolicy("d", lattice, (DecideRule("OK", None, lattice.top),
                                             DecideRule("ERR", None, lattice.level("D_M"))))
        kinds = {d.kind for d in check_decide_policy(policy, checked_verify)}
        assert {"ErrNotBottom", "ChiNullViolation"} <= kinds

    def test_rule_overlap(self, lattice, checked_verify):
        policy = DecidePolicy("d", lattice, (
            DecideRule("OK", None, lattice.top),
            DecideRule("OK", Guard("measurement_null"), lattice.level("D_AUTH")),
            DecideRule("ERR", None, lattice.bottom)))
        kinds = {d.kind for d in check_decide_policy(policy, checked_verify)}
        assert "RuleOverlap" in kinds

    def test_no_top_rule_is_warning(self, lattice, checked_verify):
        policy = DecidePolicy("d", lattice, (DecideRule("OK", None, lattice.level("D_M")),
                                             DecideRule("ERR", None, lattice.bottom)))
        diagnostics = check_decide_policy(policy, checked_verify)
        assert [d.kind for d in diagnostics] == ["NoTopRule"]
        assert diagnostics[0].severity == "warning"
        assert policy.checked_against("custom")

    def test_unchecked_pair_refused(self, lattice, env, ctx):
        policy = DecidePolicy("fresh", lattice, (DecideRule("1", None, lattice.top),))
        claim = make_claim(ctx, "pc1", "ak_pc1", True, True, True)
        outcome = verify(env.verify_policy("standard_verify"), claim, ctx)
        with pytest.raises(PolicyUnchecked):
            decide(policy, outcome)
