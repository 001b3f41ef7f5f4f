"""
Клиент построчного протокола.

Запросы можно отправлять конкурентно: ответы сопоставляются по
идентификатору корреляции фоновым читателем.
"""

import asyncio
import itertools
from typing import Any, Dict, Optional

from tornado.iostream import IOStream, StreamClosedError
from tornado.tcpclient import TCPClient

from core.logger_module import init_logging

from .protocol import MAX_LINE_BYTES, ProtocolError, TRANSPORT, WireMessage, decode, encode

logger = init_logging("client")


class WireClient:
    """
    Соединение с агентом или верификатором.

    Example:
        >>> client = await WireClient.connect("127.0.0.1", 7402)
        >>> response = await client.request("eval_request", element="pc1")
        >>> client.close()
    """

    def __init__(self, stream: IOStream, prefix: str = "c"):
        self.stream = stream
        self._ids = (f"{prefix}{n}" for n in itertools.count(1))
        self._pending: Dict[str, asyncio.Future] = {}
        self._reader = asyncio.ensure_future(self._read_loop())

    @classmethod
    async def connect(cls, host: str, port: int, prefix: str = "c") -> "WireClient":
        stream = await TCPClient().connect(host, port, max_buffer_size=MAX_LINE_BYTES * 4)
        return cls(stream, prefix)

    async def _read_loop(self) -> None:
        try:
            while True:
                line = await self.stream.read_until(b"\n", max_bytes=MAX_LINE_BYTES)
                try:
                    message = decode(line.strip())
                except ProtocolError as e:
                    logger.warning("Испорченный ответ: %s", e.message)
                    continue
                future = self._pending.pop(message.correlation_id or "", None)
                if future is not None and not future.done():
                    future.set_result(message)
                elif message.is_error:
                    logger.warning("Ошибка без запроса: %s", message.get("message"))
        except StreamClosedError:
            pass
        finally:
            for future in self._pending.values():
                if not future.done():
                    future.set_exception(ProtocolError(TRANSPORT, "соединение закрыто"))
            self._pending.clear()

    async def send(self, message_type: str, correlation_id: Optional[str] = None,
                   **body: Any) -> WireMessage:
        """Отправляет сообщение и ждёт ответа с тем же идентификатором"""
        correlation_id = correlation_id or next(self._ids)
        future = asyncio.get_running_loop().create_future()
        self._pending[correlation_id] = future
        try:
            await self.stream.write(encode(WireMessage(message_type, correlation_id, body)))
        except StreamClosedError:
            self._pending.pop(correlation_id, None)
            raise ProtocolError(TRANSPORT, "соединение закрыто", correlation_id) from None
        return await future

    async def request(self, message_type: str, **body: Any) -> WireMessage:
        """
        Отправляет запрос.

        Raises:
            ProtocolError: Сервер ответил сообщением error
        """
        response = await self.send(message_type, **body)
        if response.is_error:
            raise ProtocolError(response.get("code", "error"), response.get("message", ""),
                                response.correlation_id)
        return response

    async def send_raw(self, line: bytes) -> WireMessage:
        """Отправляет произвольную строку и читает ответ без идентификатора"""
        future = asyncio.get_running_loop().create_future()
        self._pending[""] = future
        await self.stream.write(line if line.endswith(b"\n") else line + b"\n")
        return await future

    def close(self) -> None:
        self.stream.close()
        self._reader.cancel()
