"""
Базовый класс механизмов аттестации.
Обеспечивает единый интерфейс для динамической загрузки из папки mechanisms/.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Mapping, Optional, Tuple

from core.evidence import (
    NULL_MEASUREMENT, NULL_SIGNATURE, ClaimId, Element, Measurement,
    MeasurementValues, Signature, SignatureLike, digest_text, measurement_digest,
)


class BaseMechanism(ABC):
    """
    Абстрактный механизм аттестации (морфизм E → C)

    Каждый механизм должен задать:
    - kind: ключ вида механизма, на который ссылаются документы модели
    - produces: квадранты M × S, которые механизм выдаёт при корректной работе
    - produce(): измерение и подпись для элемента
    """

    kind: str = ""
    display_name: str = ""
    produces: Tuple[Tuple[bool, bool], ...] = ()
    default_registers: Mapping[str, str] = {}

    def __init__(self, mechanism_id: str,
                 registers: Optional[Mapping[str, str]] = None,
                 key_slot: str = "ak"):
        """
        Args:
            mechanism_id: Идентификатор механизма в модели
            registers: Регистр → слот состояния элемента
            key_slot: Слот, хранящий ссылку на ключ подписи
        """
        self.mechanism_id = mechanism_id
        self.registers: Dict[str, str] = dict(registers or self.default_registers)
        self.key_slot = key_slot

    @abstractmethod
    def produce(self, element: Element, claim_id: ClaimId) -> Tuple[Measurement, SignatureLike]:
        """Выдаёт (измерение, подпись) для аттестуемого элемента"""

    def measure(self, element: Element) -> Measurement:
        """Дайджесты заданных слотов; без единого слота - 0_M"""
        values = {register: digest_text(element.state[slot])
                  for register, slot in self.registers.items()
                  if slot in element.state}
        if not values:
            return NULL_MEASUREMENT
        return MeasurementValues.of(values)

    def sign(self, element: Element, measurement: Measurement, claim_id: ClaimId) -> SignatureLike:
        """Подписывает дайджест измерения ключом элемента; без ключа - 0_S"""
        key_ref = element.slot(self.key_slot)
        if not key_ref:
            return NULL_SIGNATURE
        return Signature(key_ref, measurement_digest(measurement), claim_id.nonce)

    def describe(self) -> Dict[str, Any]:
        """Метаданные механизма для отчётов"""
        return {
            "id": self.mechanism_id,
            "kind": self.kind,
            "name": self.display_name,
            "registers": dict(sorted(self.registers.items())),
            "key_slot": self.key_slot,
            "produces": [list(q) for q in self.produces],
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.mechanism_id!r})"
