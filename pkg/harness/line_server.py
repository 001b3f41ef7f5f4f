"""
Базовый TCP-сервер построчного протокола.

Каждое соединение читается строка за строкой; испорченная строка даёт
сообщение error, соединение остаётся открытым.
"""

from typing import Optional

from tornado.iostream import IOStream, StreamClosedError
from tornado.tcpserver import TCPServer

from core.logger_module import AuditLogger, init_logging

from .protocol import (
    MALFORMED, MAX_LINE_BYTES, TRANSPORT, ProtocolError, WireMessage, decode, encode, error,
)

logger = init_logging("wire")


class LineServer(TCPServer):
    """Сервер, отвечающий на каждое сообщение ровно одним сообщением"""

    role = "server"

    def __init__(self, audit: Optional[AuditLogger] = None):
        super().__init__(max_buffer_size=MAX_LINE_BYTES * 4)
        self.audit = audit

    async def handle(self, request: WireMessage) -> WireMessage:
        raise NotImplementedError

    async def handle_stream(self, stream: IOStream, address) -> None:
        logger.info("[%s] соединение от %s", self.role, address)
        while True:
            try:
                line = await stream.read_until(b"\n", max_bytes=MAX_LINE_BYTES)
            except StreamClosedError:
                break
            response = await self._respond(line)
            try:
                await stream.write(encode(response))
            except StreamClosedError:
                break
        logger.info("[%s] соединение %s закрыто", self.role, address)

    async def _respond(self, line: bytes) -> WireMessage:
        try:
            request = decode(line.strip())
        except ProtocolError as e:
            logger.warning("[%s] испорченное сообщение: %s", self.role, e.message)
            return error(MALFORMED, e.message, e.correlation_id)
        self._audit("in", request)
        try:
            response = await self.handle(request)
        except ProtocolError as e:
            response = error(e.code, e.message, request.correlation_id)
        except StreamClosedError as e:
            response = error(TRANSPORT, f"соединение разорвано: {e}", request.correlation_id)
        self._audit("out", response)
        return response

    def _audit(self, direction: str, message: WireMessage) -> None:
        if self.audit is not None:
            self.audit.log_wire_message(direction, message.type, message.correlation_id)
