"""
Сетевой стенд: агент аттестации и верификатор, построчный протокол trust-wire 1.
"""

from typing import Mapping, Optional, Tuple

from core.capability import Environment
from core.evidence import Context, World
from core.lifecycle import ScenarioScript, SigmaOp
from core.logger_module import AuditLogger

from .agent import AgentServer
from .client import WireClient
from .protocol import PROTOCOL, ProtocolError, WireMessage, decode, encode
from .verifier import VerifierServer


def agent_serve(world: World, endpoint: Tuple[str, int],
                audit: Optional[AuditLogger] = None) -> AgentServer:
    """Запускает агента на endpoint (нужен работающий IOLoop)"""
    host, port = endpoint
    server = AgentServer(world, audit)
    server.listen(port, host)
    return server


def verifier_serve(env: Environment, ctx: Context, endpoint: Tuple[str, int],
                   agent: Optional[Tuple[str, int]] = None,
                   scenarios: Optional[Mapping[str, ScenarioScript]] = None,
                   sigmas: Optional[Mapping[str, SigmaOp]] = None,
                   audit: Optional[AuditLogger] = None) -> VerifierServer:
    """Запускает верификатор на endpoint"""
    host, port = endpoint
    server = VerifierServer(env, ctx, agent, scenarios, sigmas, audit)
    server.listen(port, host)
    return server


__all__ = [
    'AgentServer',
    'VerifierServer',
    'WireClient',
    'WireMessage',
    'ProtocolError',
    'PROTOCOL',
    'encode',
    'decode',
    'agent_serve',
    'verifier_serve',
]
