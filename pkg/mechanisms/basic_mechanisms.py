"""
Простые механизмы: только измерение, только токен, чтение серийного номера.
"""

from typing import Tuple

from core.evidence import (
    NULL_MEASUREMENT, NULL_SIGNATURE, ClaimId, Element, Signature,
    EMPTY_MEASUREMENT_DIGEST,
)

from .base_mechanism import BaseMechanism


class MeasureOnlyMechanism(BaseMechanism):
    """Неподписанное измерение (m, 0_S)"""

    kind = "measure_only"
    display_name = "Unsigned measurement"
    produces = ((True, False),)
    default_registers = {
        "pcr0": "firmware",
        "pcr1": "bootloader",
        "pcr2": "kernel",
        "pcr3": "config",
    }

    def produce(self, element: Element, claim_id: ClaimId) -> Tuple:
        return self.measure(element), NULL_SIGNATURE


class TokenOnlyMechanism(BaseMechanism):
    """Токен аутентификации (0_M, s): подпись над пустым измерением"""

    kind = "token_only"
    display_name = "Authentication token"
    produces = ((False, True),)

    def produce(self, element: Element, claim_id: ClaimId) -> Tuple:
        key_ref = element.slot(self.key_slot)
        if not key_ref:
            return NULL_MEASUREMENT, NULL_SIGNATURE
        return NULL_MEASUREMENT, Signature(key_ref, EMPTY_MEASUREMENT_DIGEST, claim_id.nonce)


class SerialReadMechanism(BaseMechanism):
    """Чтение серийного номера датчика (m, 0_S)"""

    kind = "serial_read"
    display_name = "Serial number read"
    produces = ((True, False),)
    default_registers = {"serial": "serial"}

    def produce(self, element: Element, claim_id: ClaimId) -> Tuple:
        return self.measure(element), NULL_SIGNATURE
