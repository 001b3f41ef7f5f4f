"""
Элементы, утверждения (измерение × подпись × идентификатор) и контекст Ξ.

Криптография символьная: подпись - это ссылка на ключ, дайджест полезной нагрузки
и nonce; её проверка сводится к реестру ключей и сравнению дайджестов.
Отказ механизма выражается нулевыми компонентами утверждения, а не исключением.
"""

import copy
import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union

from .errors import UnknownElement, UnknownMechanism
from .logger_module import init_logging

logger = init_logging("evidence")

# Дайджест пустой кодировки измерения: полезная нагрузка подписи-токена (0_M, s)
EMPTY_MEASUREMENT_DIGEST = hashlib.sha256(b"").hexdigest()

# Производный ключ контекста: "true", если элемент не входит в known_elements
NEW_ELEMENT_KEY = "new"


def digest_text(value: str) -> str:
    """SHA-256 от UTF-8 представления значения слота, в нижнем hex"""
    return hashlib.sha256(value.encode("utf-8")).hexdigest()


# === ИЗМЕРЕНИЯ И ПОДПИСИ ===

@dataclass(frozen=True)
class NullMeasurement:
    """Нулевое измерение 0_M"""

    def __str__(self) -> str:
        return "0_M"


@dataclass(frozen=True)
class MeasurementValues:
    """Значения регистров: имя регистра → дайджест (hex)"""
    registers: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        if not self.registers:
            raise ValueError("измерение Values не может быть пустым")
        object.__setattr__(self, "registers", tuple(sorted(self.registers)))

    @classmethod
    def of(cls, mapping: Mapping[str, str]) -> "MeasurementValues":
        return cls(tuple(mapping.items()))

    def as_dict(self) -> Dict[str, str]:
        return dict(self.registers)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{k}={v[:12]}" for k, v in self.registers) + "}"


Measurement = Union[NullMeasurement, MeasurementValues]
NULL_MEASUREMENT = NullMeasurement()


@dataclass(frozen=True)
class NullSignature:
    """Нулевая подпись 0_S"""

    def __str__(self) -> str:
        return "0_S"


@dataclass(frozen=True)
class Signature:
    """Символьная подпись содержимого утверждения"""
    key_ref: str
    payload_digest: str
    nonce: str

    def __post_init__(self):
        if not (self.key_ref and self.payload_digest and self.nonce):
            raise ValueError("поля подписи не могут быть пустыми")

    def __str__(self) -> str:
        return f"Sig({self.key_ref}, {self.payload_digest[:12]}, {self.nonce[:8]})"


SignatureLike = Union[NullSignature, Signature]
NULL_SIGNATURE = NullSignature()


def measurement_digest(measurement: Measurement) -> str:
    """Дайджест канонической кодировки измерения (для 0_M - EMPTY_MEASUREMENT_DIGEST)"""
    if isinstance(measurement, NullMeasurement):
        return EMPTY_MEASUREMENT_DIGEST
    encoded = ";".join(f"{name}={value}" for name, value in measurement.registers)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


# === УТВЕРЖДЕНИЯ ===

@dataclass(frozen=True)
class ClaimId:
    """Уникальный идентификатор утверждения"""
    nonce: str
    timestamp: int


@dataclass(frozen=True)
class Claim:
    """Утверждение, заземлённое на элемент (projection: ameas, asig, aid)"""
    measurement: Measurement
    signature: SignatureLike
    claim_id: ClaimId
    grounded_to: str
    mechanism: str

    @property
    def ameas(self) -> Measurement:
        return self.measurement

    @property
    def asig(self) -> SignatureLike:
        return self.signature

    @property
    def aid(self) -> ClaimId:
        return self.claim_id


def ground(claim: Claim) -> str:
    """ground ∘ attest = Id_E: элемент, к которому привязано утверждение"""
    return claim.grounded_to


def chi_null(claim: Claim) -> bool:
    """χ_NULL: истина только для (0_M, 0_S)"""
    return (isinstance(claim.measurement, NullMeasurement)
            and isinstance(claim.signature, NullSignature))


# === ЭЛЕМЕНТЫ И МИР ===

@dataclass(frozen=True)
class Element:
    """
    Аттестуемый элемент.

    attestable=False моделирует состояние до загрузки (0 → E);
    persistent - слоты, переживающие выключение (сохраняются в Ξ);
    survives_restart - слоты, переживающие перезапуск без сброса питания.
    """
    id: str
    attestable: bool = True
    capabilities: FrozenSet[str] = frozenset()
    state: Mapping[str, str] = field(default_factory=dict)
    children: Tuple[str, ...] = ()
    persistent: FrozenSet[str] = frozenset()
    survives_restart: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if not self.id:
            raise ValueError("идентификатор элемента не может быть пустым")
        if len(set(self.children)) != len(self.children):
            raise ValueError(f"элемент '{self.id}': повторяющиеся дочерние элементы")
        if self.id in self.children:
            raise ValueError(f"элемент '{self.id}' не может быть собственным потомком")
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        object.__setattr__(self, "persistent", frozenset(self.persistent))
        object.__setattr__(self, "survives_restart", frozenset(self.survives_restart))
        object.__setattr__(self, "state", dict(self.state))

    def slot(self, name: str) -> Optional[str]:
        return self.state.get(name)

    def with_state(self, state: Mapping[str, str]) -> "Element":
        return replace(self, state=dict(state))


@dataclass(frozen=True)
class World:
    """Элементы и зарегистрированные механизмы аттестации"""
    elements: Mapping[str, Element]
    mechanisms: "object"  # core.mechanism_loader.MechanismRegistry

    def element(self, element_id: str) -> Element:
        try:
            return self.elements[element_id]
        except KeyError:
            raise UnknownElement(element_id) from None

    def mechanism(self, mechanism_id: str):
        return self.mechanisms.get(mechanism_id)

    def replace_element(self, element: Element) -> "World":
        """Новый мир с заменённым элементом (мир неизменяем)"""
        elements = dict(self.elements)
        elements[element.id] = element
        return replace(self, elements=elements)

    def slice(self, element_ids: Iterable[str]) -> "World":
        """Подмножество элементов, обслуживаемое одним агентом"""
        return replace(self, elements={e: self.element(e) for e in element_ids})


# === КОНТЕКСТ Ξ ===

@dataclass(frozen=True)
class ContextSnapshot:
    """Замороженная копия Ξ (проекция π_Ξ результата верификации)"""
    expectations: Tuple[Tuple[str, Tuple[Tuple[str, str], ...]], ...]
    key_registry: Tuple[Tuple[str, str], ...]
    known_elements: FrozenSet[str]
    metadata: Tuple[Tuple[str, str], ...]
    clock: int
    reset_counter: Tuple[Tuple[str, int], ...]
    restart_counter: Tuple[Tuple[str, int], ...]
    open_nonces: FrozenSet[str]

    def key_owner(self, key_ref: str) -> Optional[str]:
        return dict(self.key_registry).get(key_ref)

    def expected_for(self, element_id: str) -> Optional[Dict[str, str]]:
        found = dict(self.expectations).get(element_id)
        return dict(found) if found is not None else None

    def value(self, key: str, element_id: str) -> str:
        if key == NEW_ELEMENT_KEY:
            return "false" if element_id in self.known_elements else "true"
        return dict(self.metadata).get(key, "")

    def take_nonce(self, nonce: str) -> bool:
        """Снимок только проверяет наличие nonce, не потребляя его"""
        return nonce in self.open_nonces

    def without_nonces(self) -> "ContextSnapshot":
        """Снимок без реестра nonce: единственное допустимое изменение Ξ в конвейере"""
        return replace(self, open_nonces=frozenset())


@dataclass
class Context:
    """
    Окружающий контекст Ξ: эталоны, реестр ключей, известные элементы,
    nonce, логические часы, счётчики и сохраняемое состояние.
    """
    expectations: Dict[str, Dict[str, str]] = field(default_factory=dict)
    key_registry: Dict[str, str] = field(default_factory=dict)
    known_elements: Set[str] = field(default_factory=set)
    nonce_registry: Set[str] = field(default_factory=set)
    consumed_nonces: Set[str] = field(default_factory=set)
    clock: int = 0
    reset_counter: Dict[str, int] = field(default_factory=dict)
    restart_counter: Dict[str, int] = field(default_factory=dict)
    metadata: Dict[str, str] = field(default_factory=dict)
    persisted: Dict[str, Dict[str, str]] = field(default_factory=dict)
    seed: str = "trust"
    nonce_counter: int = 0

    def key_owner(self, key_ref: str) -> Optional[str]:
        return self.key_registry.get(key_ref)

    def expected_for(self, element_id: str) -> Optional[Dict[str, str]]:
        return self.expectations.get(element_id)

    def value(self, key: str, element_id: str) -> str:
        if key == NEW_ELEMENT_KEY:
            return "false" if element_id in self.known_elements else "true"
        return self.metadata.get(key, "")

    def take_nonce(self, nonce: str) -> bool:
        """Потребляет выданный nonce; повторное предъявление даёт False"""
        if nonce in self.nonce_registry:
            self.nonce_registry.discard(nonce)
            self.consumed_nonces.add(nonce)
            return True
        return False

    def advance(self, ticks: int = 1) -> int:
        """Продвигает логические часы"""
        if ticks < 0:
            raise ValueError("часы не идут назад")
        self.clock += ticks
        return self.clock

    def snapshot(self) -> ContextSnapshot:
        return ContextSnapshot(
            expectations=tuple(sorted((e, tuple(sorted(m.items())))
                                      for e, m in self.expectations.items())),
            key_registry=tuple(sorted(self.key_registry.items())),
            known_elements=frozenset(self.known_elements),
            metadata=tuple(sorted(self.metadata.items())),
            clock=self.clock,
            reset_counter=tuple(sorted(self.reset_counter.items())),
            restart_counter=tuple(sorted(self.restart_counter.items())),
            open_nonces=frozenset(self.nonce_registry),
        )

    def copy(self) -> "Context":
        return copy.deepcopy(self)


def mint_claim_id(ctx: Context) -> ClaimId:
    """
    Выдаёт свежий идентификатор утверждения и регистрирует его nonce.

    Nonce детерминирован (seed и счётчик контекста), поэтому прогоны воспроизводимы.
    """
    while True:
        ctx.nonce_counter += 1
        nonce = hashlib.sha256(f"{ctx.seed}:{ctx.nonce_counter}".encode("utf-8")).hexdigest()[:32]
        if nonce not in ctx.nonce_registry and nonce not in ctx.consumed_nonces:
            break
    ctx.nonce_registry.add(nonce)
    return ClaimId(nonce=nonce, timestamp=ctx.clock)


def null_claim(element_id: str, mechanism_id: str, claim_id: ClaimId) -> Claim:
    return Claim(NULL_MEASUREMENT, NULL_SIGNATURE, claim_id, element_id, mechanism_id)


def attest(world: World,
           element_id: str,
           mechanism_id: str,
           ctx: Optional[Context] = None,
           claim_id: Optional[ClaimId] = None) -> Claim:
    """
    Морфизм attest: E × I → C.

    Args:
        world: Мир с элементами и механизмами
        element_id: Аттестуемый элемент
        mechanism_id: Механизм аттестации
        ctx: Контекст для выдачи идентификатора (если claim_id не задан)
        claim_id: Готовый идентификатор (nonce, выданный верификатором)

    Returns:
        Утверждение механизма; для неаттестуемого элемента или механизма вне его
        возможностей - (0_M, 0_S), по-прежнему заземлённое на элемент.

    Raises:
        UnknownElement, UnknownMechanism
    """
    element = world.element(element_id)
    mechanism = world.mechanism(mechanism_id)
    if claim_id is None:
        if ctx is None:
            raise ValueError("нужен контекст или готовый claim_id")
        claim_id = mint_claim_id(ctx)

    if not element.attestable or mechanism_id not in element.capabilities:
        return null_claim(element_id, mechanism_id, claim_id)

    try:
        measurement, signature = mechanism.produce(element, claim_id)
    except Exception as e:
        logger.warning("Механизм %s отказал на %s: %s", mechanism_id, element_id, e)
        return null_claim(element_id, mechanism_id, claim_id)
    return Claim(measurement, signature, claim_id, element_id, mechanism_id)


def context_from_spec(expectations: Mapping[str, Mapping[str, str]],
                      key_registry: Mapping[str, str],
                      known_elements: Iterable[str],
                      metadata: Mapping[str, str],
                      elements: Iterable[Element] = ()) -> Context:
    """Создаёт свежий контекст; сохраняемые слоты элементов сразу попадают в Ξ"""
    ctx = Context(
        expectations={e: dict(m) for e, m in expectations.items()},
        key_registry=dict(key_registry),
        known_elements=set(known_elements),
        metadata=dict(metadata),
    )
    for element in elements:
        kept = {s: v for s, v in element.state.items() if s in element.persistent}
        if kept:
            ctx.persisted[element.id] = kept
    return ctx


