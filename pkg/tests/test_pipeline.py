"""
Тесты конвейера: тождества композиций, форензика, потенциал доверия,
анализ разрыва и ограничения ρ.
"""

import itertools

import pytest

from core.capability import (
    PipelinePoint, admitted_mechanisms, admitted_triples, expressibility, potential_maxima,
    preferred_point, trust_potential, trustable_class,
)
from core.decision import decide
from core.errors import RestrictionViolation, UnknownPolicy
from core.evidence import (
    NULL_MEASUREMENT, NULL_SIGNATURE, Claim, ClaimId, MeasurementValues, Signature, attest,
    digest_text, ground, measurement_digest, mint_claim_id,
)
from core.pipeline import (
    forensics, forensics_for_claim, gap_analysis, is_trusted, judgement, run_pipeline,
    trustworthy,
)
from core.verdict import verify

STANDARD_POINT = PipelinePoint("quote", "standard_verify", "standard_decide")


def failed(report):
    return {str(a) for a in report.failed_atoms}


def oracle_potential(env, model, element):
    """
    Перебор конкретных утверждений: квадранты механизма, верное или чужое
    измерение, свой или чужой ключ, свежесть, известность элемента, актуальность эталонов.
    """
    world = env.world
    levels = {env.lattice.bottom}
    if not world.element(element).attestable:
        return levels
    for point in admitted_triples(env, element):
        mechanism = world.mechanisms.get(point.mechanism)
        verify_policy = env.verify_policy(point.verify_policy)
        decide_policy = env.decide_policy(point.decide_policy)
        shapes = set(mechanism.produces) | {(False, False)}
        for (has_m, has_s), variant in itertools.product(shapes, itertools.product((True, False), repeat=5)):
            correct, own_key, fresh, known, current = variant
            ctx = model.new_context()
            if known:
                ctx.known_elements.add(element)
            else:
                ctx.known_elements.discard(element)
            ctx.metadata["reference_values"] = "current" if current else "stale"
            expected = ctx.expected_for(element) or {"pcr0": digest_text("unknown")}
            measurement = NULL_MEASUREMENT
            if has_m:
                measurement = MeasurementValues.of(
                    expected if correct else {k: "0" * 64 for k in expected})
            claim_id = mint_claim_id(ctx) if fresh else ClaimId("f" * 32, 0)
            keys = [k for k, owner in ctx.key_registry.items() if owner == element]
            key_ref = keys[0] if own_key and keys else "rogue_key"
            signature = NULL_SIGNATURE
            if has_s:
                signature = Signature(key_ref, measurement_digest(measurement), claim_id.nonce)
            claim = Claim(measurement, signature, claim_id, element, point.mechanism)
            levels.add(decide(decide_policy, verify(verify_policy, claim, ctx)))
    return levels


class TestPipelineIdentities:

    def test_compositions_agree(self, reference_model, env):
        for element in sorted(env.world.elements):
            for point in sorted(admitted_triples(env, element)):
                direct, _ = run_pipeline(env, element, point, reference_model.new_context())

                ctx = reference_model.new_context()
                outcome = trustworthy(env, element, point.mechanism, point.verify_policy, ctx)
                staged = decide(env.decide_policy(point.decide_policy), outcome)

                ctx = reference_model.new_context()
                claim = attest(env.world, element, point.mechanism, ctx)
                judged = judgement(env, claim, point.verify_policy, point.decide_policy, ctx)

                assert direct == staged == judged, (element, str(point))

    def test_ground_after_attest(self, env, ctx):
        for element in env.world.elements:
            for mechanism in admitted_mechanisms(env, element):
                assert ground(attest(env.world, element, mechanism, ctx)) == element

    def test_unattestable_is_bottom(self, env, ctx):
        for point in admitted_triples(env, "cold_unit"):
            level, report = run_pipeline(env, "cold_unit", point, ctx)
            assert level == env.lattice.bottom
            assert "chi_null" in failed(report)

    def test_context_preserved_modulo_nonce(self, env, ctx):
        _, report = run_pipeline(env, "pc1", STANDARD_POINT, ctx)
        assert report.context_preserved
        assert report.claim.claim_id.nonce in ctx.consumed_nonces
        assert report.outcome.ctx_snapshot.take_nonce(report.claim.claim_id.nonce)

    def test_healthy_pc_is_trusted(self, env, ctx):
        assert is_trusted(env, "pc1", STANDARD_POINT, ctx)
        assert not is_trusted(env, "pc_new", STANDARD_POINT, ctx)

    def test_new_element(self, env, ctx):
        level, _ = run_pipeline(env, "pc_new", STANDARD_POINT, ctx)
        assert level.name == "D_NEW"

    def test_token_only_is_authenticated(self, env, ctx):
        level, _ = run_pipeline(env, "pc1", PipelinePoint("token_only", "standard_verify", "standard_decide"), ctx)
        assert level.name == "D_AUTH"

    def test_sensor_measurement(self, env, ctx):
        point = PipelinePoint("serial_read", "measure_verify", "standard_decide")
        level, report = run_pipeline(env, "sensor1", point, ctx)
        assert level.name == "D_M"
        assert report.claim.signature == NULL_SIGNATURE


class TestForensics:

    def test_impersonation_fails_identity(self, env, ctx):
        report = forensics(env, "pc_impersonated", STANDARD_POINT, ctx)
        assert failed(report) == {"chi_s"}
        assert report.decision.name == "D_M"
        assert any(line.startswith("identity-failure") for line in report.narrative)

    def test_compromise_fails_integrity(self, env, ctx):
        report = forensics(env, "pc_compromised", STANDARD_POINT, ctx)
        assert failed(report) == {"chi_m"}
        assert report.decision.name == "D_S"
        assert report.matched_case_text == "chi_s and not chi_m and chi_i and xi"

    def test_replay_fails_freshness(self, env, ctx):
        claim = attest(env.world, "pc1", "quote", ctx)
        first = forensics_for_claim(env, claim, STANDARD_POINT, ctx)
        replay = forensics_for_claim(env, claim, STANDARD_POINT, ctx)
        assert first.decision.name == "TOP"
        assert failed(replay) == {"chi_i"}
        assert replay.decision == env.lattice.bottom
        assert any(line.startswith("freshness-failure") for line in replay.narrative)

    def test_healthy_report(self, env, ctx):
        report = forensics(env, "pc1", STANDARD_POINT, ctx)
        assert failed(report) == set()
        assert report.matched_case == 0
        assert report.matched_rule == 0
        assert report.narrative == ("trusted: decision is TOP",)


class TestRestrictions:

    def test_unadmitted_point(self, env, ctx):
        with pytest.raises(RestrictionViolation):
            run_pipeline(env, "sensor1", STANDARD_POINT, ctx)

    def test_unadmitted_verify_policy(self, env, ctx):
        with pytest.raises(RestrictionViolation):
            trustworthy(env, "pc1", "quote", "measure_verify", ctx)

    def test_unknown_policy(self, env, ctx):
        with pytest.raises(UnknownPolicy):
            run_pipeline(env, "pc1", PipelinePoint("quote", "nope", "standard_decide"), ctx)

    def test_preferred_point_uses_default(self, env):
        assert preferred_point(env, "pc1") == STANDARD_POINT
        assert preferred_point(env, "sensor1") == PipelinePoint("serial_read", "measure_verify", "standard_decide")
        assert preferred_point(env, "bare_box") is None

    def test_token_admitted_through_quote_pattern(self, env):
        assert admitted_mechanisms(env, "pc1") == {"quote", "token_only", "measure_only"}
        assert admitted_mechanisms(env, "pc2") == {"quote"}

    def test_expressibility(self, env):
        sizes = expressibility(env)
        assert sizes.mechanisms == 4
        assert sizes.verify_policies == 2
        assert sizes.decide_policies == 2
        assert sizes.triples > 0


class TestTrustPotential:

    def test_sensor_potential(self, env):
        assert {l.name for l in trust_potential(env, "sensor1")} == {"D_M", "BOTTOM"}
        assert [l.name for l in potential_maxima(env, "sensor1")] == ["D_M"]

    def test_capabilityless_is_untrustable(self, env, lattice):
        assert trust_potential(env, "bare_box") == {env.lattice.bottom}
        assert trustable_class(env, "bare_box", env.lattice.top).kind == "Untrustable"

    def test_unattestable_is_untrustable(self, env):
        assert trustable_class(env, "cold_unit", env.lattice.top).kind == "Untrustable"

    def test_tpm_is_fully_trustable(self, env):
        assert env.lattice.top in trust_potential(env, "pc1")
        assert trustable_class(env, "pc1", env.lattice.level("D_M")).kind == "FullyTrustable"

    def test_sensor_bounds(self, env):
        lat = env.lattice
        within = trustable_class(env, "sensor1", lat.level("D_M"))
        assert within.kind == "TrustableWrtBound"
        assert within.unique_max.name == "D_M"
        assert trustable_class(env, "sensor1", lat.level("D_AUTH")).kind == "BelowBound"

    @pytest.mark.parametrize("element", ["sensor1", "bare_box", "cold_unit", "pc1", "pc_new"])
    def test_matches_claim_oracle(self, reference_model, env, element):
        assert trust_potential(env, element) == oracle_potential(env, reference_model, element)


class TestGapAnalysis:

    def test_d_s_to_top(self, env):
        report = gap_analysis(env, "D_S", "TOP")
        assert report.implication.name == "TOP"
        assert not report.reached
        best = report.paths[0]
        assert best.level.name == "TOP"
        assert best.from_class == "S"
        assert set(best.missing) == {"chi_m=true", "ctx:new=false"}

    def test_d_auth_to_top(self, env):
        report = gap_analysis(env, "D_AUTH", "TOP")
        assert report.implication.name == "TOP"
        assert not report.reached
        best = report.paths[0]
        assert best.level.name == "TOP"
        assert best.from_class == "S"
        assert set(best.missing) == {"chi_m=true", "ctx:new=false"}

    def test_target_already_reached(self, env):
        report = gap_analysis(env, "TOP", "D_M")
        assert report.reached
        assert report.implication.name == "D_M"

    def test_undefined_implication_is_reported(self, env):
        report = gap_analysis(env, "D_AUTH", "D_S")
        assert report.implication is None
        assert "NoImplication" in report.implication_error
        assert report.reached

    def test_incomparable_target(self, env):
        report = gap_analysis(env, "D_M", "D_AUTH")
        assert report.implication.name == "D_AUTH"
        assert {p.level.name for p in report.paths} >= {"D_AUTH", "TOP", "D_NEW"}
