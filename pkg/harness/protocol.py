"""
Протокол обмена агент/верификатор: одна JSON-запись на строку.

Каждое сообщение несёт версию протокола, тип и идентификатор корреляции,
который ответ повторяет.
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

PROTOCOL = "trust-wire 1"
MAX_LINE_BYTES = 1 << 20

MESSAGE_TYPES = (
    "attest_request", "attest_response",
    "verify_request", "verify_response",
    "decide_request", "decide_response",
    "eval_request", "eval_response",
    "attest_verify_request",
    "scenario_request", "scenario_response",
    "error",
)

# Коды ошибок протокола
MALFORMED = "malformed"
UNKNOWN_ELEMENT = "unknown-element"
UNKNOWN_MECHANISM = "unknown-mechanism"
UNKNOWN_POLICY = "unknown-policy"
UNKNOWN_REF = "unknown-ref"
RESTRICTION = "restriction"
UNCHECKED = "unchecked-policy"
TRANSPORT = "transport"
UNSUPPORTED = "unsupported"


class ProtocolError(Exception):
    """Ошибка, которую сервер возвращает сообщением error"""

    def __init__(self, code: str, message: str, correlation_id: Optional[str] = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.correlation_id = correlation_id


@dataclass(frozen=True)
class WireMessage:
    type: str
    correlation_id: Optional[str]
    body: Mapping[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.body.get(key, default)

    def require(self, key: str) -> Any:
        """Обязательное поле тела (иначе malformed)"""
        if key not in self.body or self.body[key] is None:
            raise ProtocolError(MALFORMED, f"в сообщении {self.type} нет поля '{key}'",
                                self.correlation_id)
        return self.body[key]

    @property
    def is_error(self) -> bool:
        return self.type == "error"


def encode(message: WireMessage) -> bytes:
    payload: Dict[str, Any] = {"proto": PROTOCOL, "type": message.type, "id": message.correlation_id}
    payload["body"] = dict(message.body)
    return (json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def decode(line: bytes) -> WireMessage:
    """
    Разбирает одну строку.

    Raises:
        ProtocolError: malformed - не JSON, чужая версия, неизвестный тип
    """
    try:
        payload = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise ProtocolError(MALFORMED, f"строка не является JSON: {e}") from None
    if not isinstance(payload, dict):
        raise ProtocolError(MALFORMED, "ожидается JSON-объект")
    correlation_id = payload.get("id")
    if correlation_id is not None and not isinstance(correlation_id, str):
        raise ProtocolError(MALFORMED, "id должен быть строкой")
    if payload.get("proto") != PROTOCOL:
        raise ProtocolError(MALFORMED, f"ожидается протокол '{PROTOCOL}'", correlation_id)
    if payload.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(MALFORMED, f"неизвестный тип '{payload.get('type')}'", correlation_id)
    body = payload.get("body", {})
    if not isinstance(body, dict):
        raise ProtocolError(MALFORMED, "body должен быть объектом", correlation_id)
    return WireMessage(payload["type"], correlation_id, body)


def error(code: str, message: str, correlation_id: Optional[str]) -> WireMessage:
    return WireMessage("error", correlation_id, {"code": code, "message": message})


def reply(request: WireMessage, message_type: str, **body: Any) -> WireMessage:
    return WireMessage(message_type, request.correlation_id, body)
