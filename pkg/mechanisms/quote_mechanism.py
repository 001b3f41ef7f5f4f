"""
Квота TPM: подписанные ключом аттестации значения регистров и nonce.
"""

from typing import Tuple

from core.evidence import NULL_MEASUREMENT, NULL_SIGNATURE, ClaimId, Element, NullSignature

from .base_mechanism import BaseMechanism


class QuoteMechanism(BaseMechanism):
    """Измерение и подпись вместе (m, s)"""

    kind = "quote"
    display_name = "TPM quote"
    produces = ((True, True),)
    default_registers = {
        "pcr0": "firmware",
        "pcr1": "bootloader",
        "pcr2": "kernel",
        "pcr3": "config",
    }

    def produce(self, element: Element, claim_id: ClaimId) -> Tuple:
        measurement = self.measure(element)
        signature = self.sign(element, measurement, claim_id)
        # Квота без регистров или без ключа не формируется вовсе
        if measurement == NULL_MEASUREMENT or isinstance(signature, NullSignature):
            return NULL_MEASUREMENT, NULL_SIGNATURE
        return measurement, signature
