"""
Тесты сетевого стенда: агент и верификатор на свободных портах localhost,
поэтапный конвейер по протоколу и сравнение с прогоном в процессе.
"""

import asyncio

import pytest
from tornado.testing import bind_unused_port

from core.capability import PipelinePoint, preferred_point
from core.pipeline import run_pipeline
from harness import AgentServer, ProtocolError, VerifierServer, WireClient

HOST = "127.0.0.1"


def start(server):
    sock, port = bind_unused_port()
    server.add_sockets([sock])
    return port


def run(coroutine_fn):
    """Запускает сценарий стенда в собственном цикле событий"""
    return asyncio.run(coroutine_fn())


class Bench:
    """Агент и верификатор над одной моделью"""

    def __init__(self, model, agent_world=None, with_agent=True):
        self.model = model
        self.env = model.environment()
        self.agent = None
        self.agent_port = None
        agent_endpoint = None
        if with_agent:
            self.agent = AgentServer(agent_world or self.env.world)
            self.agent_port = start(self.agent)
            agent_endpoint = (HOST, self.agent_port)
        self.verifier = VerifierServer(self.env, model.new_context(), agent_endpoint,
                                       model.scenarios, model.sigmas)
        self.port = start(self.verifier)
        self.clients = []

    async def client(self, port=None):
        client = await WireClient.connect(HOST, port or self.port)
        self.clients.append(client)
        return client

    def close(self):
        for client in self.clients:
            client.close()
        self.verifier.stop()
        if self.agent is not None:
            self.agent.stop()


async def wire_error(awaitable):
    with pytest.raises(ProtocolError) as info:
        await awaitable
    return info.value.code


class TestStagedPipeline:

    def test_attest_verify_decide(self, reference_model, env):
        expected, _ = run_pipeline(env, "pc1", PipelinePoint("quote", "standard_verify", "standard_decide"),
                                   reference_model.new_context())

        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                attested = await client.request("attest_request", element="pc1", mechanism="quote")
                assert attested.get("claim")["signature"]["key_ref"] == "ak_pc1"
                verified = await client.request("verify_request", claim_ref=attested.get("claim_ref"),
                                                verify_policy="standard_verify")
                assert verified.get("outcome")["result_class"] == "1"
                decided = await client.request("decide_request", outcome_ref=verified.get("outcome_ref"),
                                               decide_policy="standard_decide")
                return decided
            finally:
                bench.close()

        decided = run(scenario)
        assert decided.type == "decide_response"
        assert decided.get("level") == expected.name == "TOP"
        assert decided.get("report")["failed_atoms"] == []

    def test_attest_verify_in_one_request(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                return await client.request("attest_verify_request", element="pc_compromised",
                                            mechanism="quote", verify_policy="standard_verify")
            finally:
                bench.close()

        response = run(scenario)
        assert response.get("outcome")["result_class"] == "S"
        assert response.get("outcome")["failed_atoms"] == ["chi_m"]

    def test_eval_matches_in_process(self, full_model, full_env):
        elements = sorted(full_env.world.elements)
        ctx = full_model.new_context()
        expected = {}
        for element in elements:
            point = preferred_point(full_env, element)
            expected[element] = (run_pipeline(full_env, element, point, ctx)[0].name
                                 if point is not None else "restriction")

        async def scenario():
            bench = Bench(full_model)
            try:
                client = await bench.client()
                results = {}
                for element in elements:
                    try:
                        response = await client.request("eval_request", element=element)
                        results[element] = response.get("level")
                    except ProtocolError as e:
                        results[element] = e.code
                return results
            finally:
                bench.close()

        assert run(scenario) == expected

    def test_local_attestation_without_agent(self, reference_model):
        async def scenario():
            bench = Bench(reference_model, with_agent=False)
            try:
                client = await bench.client()
                return await client.request("eval_request", element="pc_impersonated",
                                            point="quote:standard_verify:standard_decide")
            finally:
                bench.close()

        response = run(scenario)
        assert response.get("level") == "D_M"
        assert response.get("report")["failed_atoms"] == ["chi_s"]


class TestWireFailures:

    def test_replayed_claim_fails_freshness(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                attested = await client.request("attest_request", element="pc1", mechanism="quote")
                await client.request("verify_request", claim_ref=attested.get("claim_ref"),
                                     verify_policy="standard_verify")
                return await client.request("verify_request", claim=attested.get("claim"),
                                            verify_policy="standard_verify")
            finally:
                bench.close()

        replay = run(scenario)
        outcome = replay.get("outcome")
        assert outcome["atoms"]["chi_i"] is False
        assert outcome["failed_atoms"] == ["chi_i"]
        assert outcome["is_error"]

    def test_foreign_outcome_ref(self, reference_model):
        async def scenario():
            first, second = Bench(reference_model), Bench(reference_model)
            try:
                a = await first.client()
                b = await second.client()
                attested = await a.request("attest_request", element="pc1", mechanism="quote")
                verified = await a.request("verify_request", claim_ref=attested.get("claim_ref"),
                                           verify_policy="standard_verify")
                return await wire_error(b.request("decide_request",
                                                  outcome_ref=verified.get("outcome_ref"),
                                                  decide_policy="standard_decide"))
            finally:
                first.close()
                second.close()

        assert run(scenario) == "unknown-ref"

    def test_malformed_line_keeps_connection(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                broken = await client.send_raw(b"this is not json")
                after = await client.request("eval_request", element="pc1")
                return broken, after
            finally:
                bench.close()

        broken, after = run(scenario)
        assert broken.is_error
        assert broken.get("code") == "malformed"
        assert after.get("level") == "TOP"

    def test_wrong_protocol_version(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                return await client.send_raw(b'{"proto": "trust-wire 9", "type": "eval_request", "body": {}}')
            finally:
                bench.close()

        assert run(scenario).get("code") == "malformed"

    def test_element_unknown_to_agent(self, reference_model, env):
        async def scenario():
            bench = Bench(reference_model, agent_world=env.world.slice(["pc1"]))
            try:
                client = await bench.client()
                via_verifier = await wire_error(client.request("eval_request", element="pc2"))
                agent = await bench.client(bench.agent_port)
                direct = await wire_error(agent.request("attest_request", element="pc2",
                                                        mechanism="quote", nonce="n1"))
                unsupported = await wire_error(agent.request("eval_request", element="pc1"))
                return via_verifier, direct, unsupported
            finally:
                bench.close()

        assert run(scenario) == ("unknown-element", "unknown-element", "unsupported")

    def test_restriction_and_unknown_policy(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                client = await bench.client()
                restricted = await wire_error(client.request("attest_request", element="sensor1",
                                                             mechanism="quote"))
                unknown = await wire_error(client.request("eval_request", element="pc1",
                                                          point="quote:nope:standard_decide"))
                missing = await wire_error(client.request("attest_request", element="pc1"))
                return restricted, unknown, missing
            finally:
                bench.close()

        assert run(scenario) == ("restriction", "unknown-policy", "malformed")


class TestScenariosAndConcurrency:

    def test_evil_maid_over_wire(self, full_model):
        async def scenario():
            bench = Bench(full_model)
            try:
                client = await bench.client()
                return await client.request("scenario_request", name="evil_maid_case")
            finally:
                bench.close()

        trace = run(scenario).get("trace")
        assert trace["passed"]
        assert trace["final_level"] == "D_S"
        assert trace["counters"] == {"reset": 1, "restart": 0}

    def test_unknown_scenario(self, full_model):
        async def scenario():
            bench = Bench(full_model)
            try:
                client = await bench.client()
                return await wire_error(client.request("scenario_request", name="nope"))
            finally:
                bench.close()

        assert run(scenario) == "unknown-ref"

    def test_concurrent_requests(self, reference_model):
        async def scenario():
            bench = Bench(reference_model)
            try:
                clients = [await bench.client() for _ in range(3)]
                requests = [clients[i % 3].request("eval_request", element="pc1") for i in range(12)]
                return await asyncio.gather(*requests)
            finally:
                bench.close()

        responses = run(scenario)
        assert {r.get("level") for r in responses} == {"TOP"}
        nonces = {r.get("report")["claim"]["claim_id"]["nonce"] for r in responses}
        assert len(nonces) == 12
