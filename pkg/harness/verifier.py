"""
Верификатор: владеет контекстом Ξ и выполняет стадии attest, verify и decide
как отдельные запросы, а также полный прогон eval.

Стадия decide принимает только результаты, полученные этим же верификатором.
Все изменения Ξ выполняются под одной блокировкой.
"""

import itertools
import uuid
from typing import Dict, Mapping, Optional, Tuple

from tornado.locks import Lock

from core.capability import Environment, PipelinePoint, admitted_mechanisms, admitted_triples, preferred_point
from core.data_io import claim_from_dict, claim_to_dict, forensic_to_dict, trace_to_dict
from core.errors import (
    DecisionGap, PolicyUnchecked, RestrictionViolation, TrustError, UnknownElement,
    UnknownMechanism, UnknownPolicy,
)
from core.evidence import Claim, Context, attest, mint_claim_id
from core.lattice import TrustLevel
from core.lifecycle import ScenarioScript, SigmaOp, run_scenario
from core.logger_module import AuditLogger, init_logging
from core.pipeline import ForensicReport, decide_outcome, run_pipeline
from core.verdict import VerdictOutcome, verify

from .client import WireClient
from .line_server import LineServer
from .protocol import (
    MALFORMED, RESTRICTION, UNCHECKED, UNKNOWN_ELEMENT, UNKNOWN_MECHANISM, UNKNOWN_POLICY,
    UNKNOWN_REF, UNSUPPORTED, ProtocolError, WireMessage, reply,
)

logger = init_logging("verifier")

ERROR_CODES = (
    (RestrictionViolation, RESTRICTION),
    (UnknownElement, UNKNOWN_ELEMENT),
    (UnknownMechanism, UNKNOWN_MECHANISM),
    (UnknownPolicy, UNKNOWN_POLICY),
    (PolicyUnchecked, UNCHECKED),
    (DecisionGap, UNCHECKED),
)


def outcome_summary(outcome: VerdictOutcome) -> Dict[str, object]:
    return {
        "policy": outcome.policy,
        "result_class": outcome.result_class.label,
        "is_error": outcome.result_class.is_error,
        "atoms": {str(a): v for a, v in outcome.atom_values},
        "failed_atoms": sorted(str(a) for a in outcome.failed_atoms()),
    }


class VerifierServer(LineServer):
    """
    Верификатор над окружением и контекстом.

    Args:
        env: Окружение с проверенными политиками
        ctx: Контекст Ξ (принадлежит верификатору)
        agent: (host, port) агента; без него аттестация выполняется локально
        scenarios, sigmas: Сценарии и операции σ для scenario_request
    """

    role = "verifier"

    def __init__(self, env: Environment, ctx: Context,
                 agent: Optional[Tuple[str, int]] = None,
                 scenarios: Optional[Mapping[str, ScenarioScript]] = None,
                 sigmas: Optional[Mapping[str, SigmaOp]] = None,
                 audit: Optional[AuditLogger] = None):
        super().__init__(audit)
        self.env = env
        self.ctx = ctx
        self.agent = agent
        self.scenarios = dict(scenarios or {})
        self.sigmas = dict(sigmas or {})
        self.instance = uuid.uuid4().hex[:8]
        self._refs = itertools.count(1)
        self._claims: Dict[str, Claim] = {}
        self._outcomes: Dict[str, VerdictOutcome] = {}
        self._reports: Dict[str, ForensicReport] = {}
        self._lock = Lock()
        self._agent_client: Optional[WireClient] = None

    def _ref(self, kind: str) -> str:
        return f"{self.instance}:{kind}{next(self._refs)}"

    async def handle(self, request: WireMessage) -> WireMessage:
        handler = getattr(self, f"_on_{request.type}", None)
        if handler is None:
            raise ProtocolError(UNSUPPORTED, f"верификатор не обслуживает '{request.type}'")
        try:
            return await handler(request)
        except TrustError as e:
            for exc_type, code in ERROR_CODES:
                if isinstance(e, exc_type):
                    raise ProtocolError(code, str(e)) from None
            raise

    # === АТТЕСТАЦИЯ ===

    async def _obtain_claim(self, element: str, mechanism: str) -> Claim:
        """Выдаёт nonce и получает утверждение от агента или из локального мира"""
        claim_id = mint_claim_id(self.ctx)
        if self.agent is None:
            return attest(self.env.world, element, mechanism, claim_id=claim_id)
        if self._agent_client is None:
            self._agent_client = await WireClient.connect(*self.agent, prefix="v")
        response = await self._agent_client.send(
            "attest_request", element=element, mechanism=mechanism,
            nonce=claim_id.nonce, timestamp=claim_id.timestamp)
        if response.is_error:
            raise ProtocolError(response.get("code"), f"агент: {response.get('message')}")
        return claim_from_dict(response.require("claim"))

    def _check_mechanism(self, element: str, mechanism: str) -> None:
        self.env.world.element(element)
        self.env.world.mechanism(mechanism)
        if mechanism not in admitted_mechanisms(self.env, element):
            raise RestrictionViolation(element, mechanism)

    async def _on_attest_request(self, request: WireMessage) -> WireMessage:
        element = str(request.require("element"))
        mechanism = str(request.require("mechanism"))
        self._check_mechanism(element, mechanism)
        async with self._lock:
            claim = await self._obtain_claim(element, mechanism)
        ref = self._ref("c")
        self._claims[ref] = claim
        return reply(request, "attest_response", claim=claim_to_dict(claim), claim_ref=ref)

    # === ВЕРИФИКАЦИЯ ===

    def _claim_of(self, request: WireMessage) -> Claim:
        if request.get("claim_ref") is not None:
            ref = str(request.get("claim_ref"))
            if ref not in self._claims:
                raise ProtocolError(UNKNOWN_REF, f"утверждение '{ref}' не выдавалось этим верификатором")
            return self._claims[ref]
        try:
            return claim_from_dict(request.require("claim"))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ProtocolError(MALFORMED, f"повреждённое утверждение: {e}") from None

    async def _verify(self, claim: Claim, verify_policy: str) -> Tuple[str, VerdictOutcome]:
        policy = self.env.verify_policy(verify_policy)
        self._check_mechanism(claim.grounded_to, claim.mechanism)
        if verify_policy not in self.env.restrictions.rho_u.get(claim.mechanism, ()):
            raise RestrictionViolation(claim.grounded_to, f"{claim.mechanism}:{verify_policy}")
        async with self._lock:
            outcome = verify(policy, claim, self.ctx)
        ref = self._ref("o")
        self._outcomes[ref] = outcome
        return ref, outcome

    async def _on_verify_request(self, request: WireMessage) -> WireMessage:
        claim = self._claim_of(request)
        ref, outcome = await self._verify(claim, str(request.require("verify_policy")))
        return reply(request, "verify_response", outcome_ref=ref, outcome=outcome_summary(outcome))

    async def _on_attest_verify_request(self, request: WireMessage) -> WireMessage:
        """attest и verify одним запросом (морфизм 𝒲)"""
        element = str(request.require("element"))
        mechanism = str(request.require("mechanism"))
        verify_policy = str(request.require("verify_policy"))
        self.env.verify_policy(verify_policy)
        self._check_mechanism(element, mechanism)
        async with self._lock:
            claim = await self._obtain_claim(element, mechanism)
        ref, outcome = await self._verify(claim, verify_policy)
        return reply(request, "verify_response", outcome_ref=ref, outcome=outcome_summary(outcome),
                     claim=claim_to_dict(claim))

    # === РЕШЕНИЕ ===

    def _respond_decision(self, request: WireMessage, message_type: str, level: TrustLevel,
                          report: ForensicReport) -> WireMessage:
        ref = self._ref("r")
        self._reports[ref] = report
        return reply(request, message_type, level=level.name, report_ref=ref,
                     report=forensic_to_dict(report))

    async def _on_decide_request(self, request: WireMessage) -> WireMessage:
        ref = str(request.require("outcome_ref"))
        outcome = self._outcomes.get(ref)
        if outcome is None:
            raise ProtocolError(UNKNOWN_REF, f"результат '{ref}' не получен этим верификатором")
        decide_policy = str(request.require("decide_policy"))
        self.env.decide_policy(decide_policy)
        claim = outcome.claim
        point = PipelinePoint(claim.mechanism, outcome.policy, decide_policy)
        if point not in admitted_triples(self.env, claim.grounded_to):
            raise RestrictionViolation(claim.grounded_to, str(point))
        level, report = decide_outcome(self.env, point, outcome)
        return self._respond_decision(request, "decide_response", level, report)

    def _point_of(self, request: WireMessage, element: str) -> PipelinePoint:
        raw = request.get("point")
        if raw is None:
            point = preferred_point(self.env, element)
            if point is None:
                raise RestrictionViolation(element, "none")
            return point
        try:
            return PipelinePoint.parse(str(raw))
        except ValueError as e:
            raise ProtocolError(MALFORMED, str(e)) from None

    async def _on_eval_request(self, request: WireMessage) -> WireMessage:
        """Полный прогон attest → verify → decide"""
        element = str(request.require("element"))
        self.env.world.element(element)
        point = self._point_of(request, element)
        if self.agent is None:
            async with self._lock:
                level, report = run_pipeline(self.env, element, point, self.ctx)
            return self._respond_decision(request, "eval_response", level, report)

        self.env.verify_policy(point.verify_policy)
        self.env.decide_policy(point.decide_policy)
        if point not in admitted_triples(self.env, element):
            raise RestrictionViolation(element, str(point))
        async with self._lock:
            before = self.ctx.snapshot()
            claim = await self._obtain_claim(element, point.mechanism)
            outcome = verify(self.env.verify_policy(point.verify_policy), claim, self.ctx)
        preserved = before.without_nonces() == outcome.ctx_snapshot.without_nonces()
        level, report = decide_outcome(self.env, point, outcome, preserved)
        return self._respond_decision(request, "eval_response", level, report)

    async def _on_scenario_request(self, request: WireMessage) -> WireMessage:
        name = str(request.require("name"))
        script = self.scenarios.get(name)
        if script is None:
            raise ProtocolError(UNKNOWN_REF, f"сценарий '{name}' не объявлен")
        async with self._lock:
            trace = run_scenario(self.env, script, self.ctx, self.sigmas)
        return reply(request, "scenario_response", trace=trace_to_dict(trace))

    def stop(self) -> None:
        super().stop()
        if self._agent_client is not None:
            self._agent_client.close()
            self._agent_client = None
