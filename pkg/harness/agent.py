"""
Агент аттестации: отвечает на attest_request, запуская механизм над своими
элементами. Состояния, кроме своего среза мира, агент не хранит.
"""

from typing import Optional

from core.data_io import claim_to_dict
from core.errors import UnknownElement, UnknownMechanism
from core.evidence import ClaimId, World, attest
from core.logger_module import AuditLogger, init_logging

from .line_server import LineServer
from .protocol import (
    MALFORMED, UNKNOWN_ELEMENT, UNKNOWN_MECHANISM, UNSUPPORTED, ProtocolError, WireMessage, reply,
)

logger = init_logging("agent")


class AgentServer(LineServer):
    """
    Агент над срезом мира.

    Example:
        >>> agent = AgentServer(world.slice(["pc1"]))
        >>> agent.listen(7401, "127.0.0.1")
    """

    role = "agent"

    def __init__(self, world: World, audit: Optional[AuditLogger] = None):
        super().__init__(audit)
        self.world = world

    def replace_world(self, world: World) -> None:
        """Обновляет срез мира (например, после операции жизненного цикла)"""
        self.world = world

    async def handle(self, request: WireMessage) -> WireMessage:
        if request.type != "attest_request":
            raise ProtocolError(UNSUPPORTED, f"агент не обслуживает '{request.type}'")
        element = str(request.require("element"))
        mechanism = str(request.require("mechanism"))
        nonce = str(request.require("nonce"))
        try:
            timestamp = int(request.get("timestamp", 0))
        except (TypeError, ValueError):
            raise ProtocolError(MALFORMED, "timestamp должен быть целым") from None

        if element not in self.world.elements:
            raise ProtocolError(UNKNOWN_ELEMENT, f"элемент '{element}' не обслуживается агентом")
        try:
            claim = attest(self.world, element, mechanism, claim_id=ClaimId(nonce, timestamp))
        except (UnknownElement, UnknownMechanism) as e:
            raise ProtocolError(UNKNOWN_MECHANISM, str(e)) from None
        logger.info("Аттестация %s механизмом %s (nonce %s)", element, mechanism, nonce[:8])
        return reply(request, "attest_response", claim=claim_to_dict(claim))
