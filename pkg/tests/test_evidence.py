"""
Тесты свидетельств: attest, заземление, nonce, механизмы-плагины.
"""

import pytest

from core.errors import UnknownElement, UnknownMechanism
from core.evidence import (
    NULL_MEASUREMENT, NULL_SIGNATURE, Claim, ClaimId, Element, MeasurementValues, Signature,
    attest, chi_null, digest_text, ground, measurement_digest, mint_claim_id,
)
from core.mechanism_loader import MechanismRegistry, discover_mechanisms


class TestMechanismDiscovery:

    def test_builtin_kinds(self):
        kinds = discover_mechanisms()
        assert {"quote", "measure_only", "token_only", "serial_read"} <= set(kinds)

    def test_registry_unknown_mechanism(self):
        registry = MechanismRegistry()
        with pytest.raises(UnknownMechanism):
            registry.get("nope")

    def test_registry_unknown_kind(self):
        with pytest.raises(KeyError):
            MechanismRegistry().register("x", "no_such_kind")


class TestAttest:

    def test_ground_is_left_inverse(self, env, ctx):
        world = env.world
        for element_id in world.elements:
            for mechanism_id in world.mechanisms.ids():
                claim = attest(world, element_id, mechanism_id, ctx)
                assert ground(claim) == element_id
                assert claim.mechanism == mechanism_id

    def test_quote_signs_verifier_nonce(self, env, ctx):
        claim_id = mint_claim_id(ctx)
        claim = attest(env.world, "pc1", "quote", claim_id=claim_id)
        assert isinstance(claim.signature, Signature)
        assert claim.signature.nonce == claim_id.nonce
        assert claim.signature.key_ref == "ak_pc1"
        assert claim.signature.payload_digest == measurement_digest(claim.measurement)
        assert claim.measurement.as_dict()["pcr0"] == digest_text("fw_v1")

    def test_unsigned_sensor_read(self, env, ctx):
        claim = attest(env.world, "sensor1", "serial_read", ctx)
        assert isinstance(claim.measurement, MeasurementValues)
        assert claim.signature == NULL_SIGNATURE

    def test_token_has_null_measurement(self, env, ctx):
        claim = attest(env.world, "pc1", "token_only", ctx)
        assert claim.measurement == NULL_MEASUREMENT
        assert isinstance(claim.signature, Signature)

    def test_unattestable_element_gives_null_claim(self, env, ctx):
        claim = attest(env.world, "cold_unit", "quote", ctx)
        assert chi_null(claim)
        assert ground(claim) == "cold_unit"

    def test_mechanism_outside_capabilities(self, env, ctx):
        claim = attest(env.world, "sensor1", "quote", ctx)
        assert chi_null(claim)

    def test_unknown_element(self, env, ctx):
        with pytest.raises(UnknownElement):
            attest(env.world, "ghost", "quote", ctx)

    def test_unknown_mechanism(self, env, ctx):
        with pytest.raises(UnknownMechanism):
            attest(env.world, "pc1", "laser", ctx)

    def test_needs_context_or_claim_id(self, env):
        with pytest.raises(ValueError):
            attest(env.world, "pc1", "quote")


class TestNonces:

    def test_deterministic_per_seed(self, reference_model):
        first = [mint_claim_id(reference_model.new_context()).nonce for _ in range(2)]
        assert first[0] == first[1]

    def test_fresh_nonces_differ(self, ctx):
        nonces = {mint_claim_id(ctx).nonce for _ in range(50)}
        assert len(nonces) == 50

    def test_nonce_consumed_once(self, ctx):
        claim_id = mint_claim_id(ctx)
        assert ctx.take_nonce(claim_id.nonce)
        assert not ctx.take_nonce(claim_id.nonce)

    def test_snapshot_does_not_consume(self, ctx):
        claim_id = mint_claim_id(ctx)
        snapshot = ctx.snapshot()
        assert snapshot.take_nonce(claim_id.nonce)
        assert snapshot.take_nonce(claim_id.nonce)
        assert claim_id.nonce in ctx.nonce_registry


class TestValues:

    def test_empty_measurement_rejected(self):
        with pytest.raises(ValueError):
            MeasurementValues(())

    def test_signature_fields_required(self):
        with pytest.raises(ValueError):
            Signature("", "abc", "n")

    def test_element_cannot_contain_itself(self):
        with pytest.raises(ValueError):
            Element("loop", children=("loop",))

    def test_null_claim_only_for_both_nulls(self):
        claim_id = ClaimId("n1", 0)
        token = Claim(NULL_MEASUREMENT, Signature("k", measurement_digest(NULL_MEASUREMENT), "n1"),
                      claim_id, "pc1", "token_only")
        assert not chi_null(token)
        assert chi_null(Claim(NULL_MEASUREMENT, NULL_SIGNATURE, claim_id, "pc1", "quote"))

    def test_persistent_slots_seed_context(self, ctx):
        assert ctx.persisted["pc1"] == {"firmware": "fw_v1", "bootloader": "bl_v1", "ak": "ak_pc1"}
        assert "kernel" not in ctx.persisted["pc1"]
