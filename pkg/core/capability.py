"""
Пространства механизмов, политик verify и decide, отображения ограничений ρ
и потенциал доверия элемента.

Допустимая точка конвейера - тройка (механизм, verify, decide), разрешённая
отображениями ρ_A (по шаблонам возможностей), ρ_U и ρ_D.
"""

from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Set, Tuple

from .decision import DecidePolicy, check_decide_policy
from .errors import DecisionGap, UnknownPolicy
from .evidence import Element, World
from .lattice import DecisionLattice, TrustLevel
from .logger_module import init_logging
from .verdict import CHI_M, CHI_NULL, CHI_S, PolicyDiagnostic, VerifyPolicy, \
    check_verify_policy, enumerate_valuations

logger = init_logging("capability")


@dataclass(frozen=True, order=True)
class PipelinePoint:
    """Точка (𝖠, Υ, Δ): механизм, политика verify, политика decide"""
    mechanism: str
    verify_policy: str
    decide_policy: str

    def __str__(self) -> str:
        return f"{self.mechanism}:{self.verify_policy}:{self.decide_policy}"

    @classmethod
    def parse(cls, text: str) -> "PipelinePoint":
        """Разбирает запись вида 'quote:standard_verify:standard_decide'"""
        parts = text.split(":")
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"некорректная точка '{text}', ожидается механизм:verify:decide")
        return cls(*parts)


@dataclass(frozen=True)
class RestrictionMaps:
    """
    Отображения ограничений.

    rho_a: (шаблон возможностей, механизмы); шаблон подходит элементу,
           если входит в его возможности. Пустой rho_a разрешает все возможности элемента.
    rho_u: механизм → политики verify
    rho_d: политика verify → политики decide
    """
    rho_a: Tuple[Tuple[FrozenSet[str], FrozenSet[str]], ...] = ()
    rho_u: Mapping[str, FrozenSet[str]] = field(default_factory=dict)
    rho_d: Mapping[str, FrozenSet[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class Environment:
    """Мир, реестры политик, отображения ρ и решётка решений"""
    world: World
    verify_policies: Mapping[str, VerifyPolicy]
    decide_policies: Mapping[str, DecidePolicy]
    restrictions: RestrictionMaps
    lattice: DecisionLattice
    default_point: Optional[PipelinePoint] = None

    def verify_policy(self, name: str) -> VerifyPolicy:
        try:
            return self.verify_policies[name]
        except KeyError:
            raise UnknownPolicy(name, "verify") from None

    def decide_policy(self, name: str) -> DecidePolicy:
        try:
            return self.decide_policies[name]
        except KeyError:
            raise UnknownPolicy(name, "decide") from None

    def with_world(self, world: World) -> "Environment":
        return replace(self, world=world)

    def with_element(self, element: Element) -> "Environment":
        return replace(self, world=self.world.replace_element(element))

    def policy_pairs(self) -> List[Tuple[str, str]]:
        """Пары (verify, decide), связанные через ρ_D"""
        return sorted((v, d) for v, ds in self.restrictions.rho_d.items() for d in ds)

    def check_policies(self, expectations_nonempty: bool = True) -> List[PolicyDiagnostic]:
        """Проверяет все политики verify и все пары verify/decide из ρ_D"""
        diagnostics: List[PolicyDiagnostic] = []
        for name in sorted(self.verify_policies):
            diagnostics.extend(check_verify_policy(self.verify_policies[name]))
        for v, d in self.policy_pairs():
            if v in self.verify_policies and d in self.decide_policies:
                diagnostics.extend(check_decide_policy(
                    self.decide_policies[d], self.verify_policies[v], expectations_nonempty))
        return diagnostics


# === ОГРАНИЧЕНИЯ ===

def admitted_mechanisms(env: Environment, element_id: str) -> FrozenSet[str]:
    """ρ_𝖠(e): механизмы шаблонов, входящих в возможности элемента"""
    element = env.world.element(element_id)
    caps = element.capabilities
    if not env.restrictions.rho_a:
        allowed = set(caps)
    else:
        allowed: Set[str] = set()
        for pattern, mechanisms in env.restrictions.rho_a:
            if pattern <= caps:
                allowed |= mechanisms
        allowed &= caps
    return frozenset(m for m in allowed if m in env.world.mechanisms)


def admitted_triples(env: Environment, element_id: str) -> FrozenSet[PipelinePoint]:
    """{(a, v, d) : a ∈ ρ_𝖠(e), v ∈ ρ_Υ(a), d ∈ ρ_Δ(v)}"""
    rho_u, rho_d = env.restrictions.rho_u, env.restrictions.rho_d
    triples = set()
    for a in admitted_mechanisms(env, element_id):
        for v in rho_u.get(a, ()):
            if v not in env.verify_policies:
                continue
            for d in rho_d.get(v, ()):
                if d in env.decide_policies:
                    triples.add(PipelinePoint(a, v, d))
    return frozenset(triples)


def preferred_point(env: Environment, element_id: str) -> Optional[PipelinePoint]:
    """Точка по умолчанию, если допустима, иначе первая допустимая по порядку"""
    triples = admitted_triples(env, element_id)
    if env.default_point is not None and env.default_point in triples:
        return env.default_point
    return min(triples) if triples else None


# === ПОТЕНЦИАЛ ДОВЕРИЯ ===

def reachable_levels(env: Environment, point: PipelinePoint) -> FrozenSet[TrustLevel]:
    """
    Уровни, достижимые через точку: символьный перебор форм утверждений механизма
    (плюс нулевое утверждение), оценок атомов verify и клеток охран decide.
    """
    mechanism = env.world.mechanisms.get(point.mechanism)
    verify_policy = env.verify_policy(point.verify_policy)
    decide_policy = env.decide_policy(point.decide_policy)

    shapes = set(mechanism.produces) | {(False, False)}
    atoms = set(verify_policy.atoms()) | {CHI_S, CHI_M, CHI_NULL}
    cells = list(decide_policy.guard_cells())
    levels: Set[TrustLevel] = set()
    for has_measurement, has_signature in sorted(shapes):
        null_shape = not has_measurement and not has_signature
        for valuation in enumerate_valuations(atoms):
            if valuation[CHI_NULL] != null_shape:
                continue
            if (valuation[CHI_S] and not has_signature) or (valuation[CHI_M] and not has_measurement):
                continue
            label, _ = verify_policy.select(valuation)
            if label is None:
                label = verify_policy.error_class.label
            for cell in cells:
                if cell.measurement_null == has_measurement:
                    continue
                level, _ = decide_policy.resolve_cell(label, cell)
                if level is None:
                    raise DecisionGap(decide_policy.name, label)
                levels.add(level)
    return frozenset(levels)


def trust_potential(env: Environment, element_id: str) -> FrozenSet[TrustLevel]:
    """P(e): объединение достижимых уровней по всем допустимым тройкам; без троек - {⊥}"""
    levels: Set[TrustLevel] = {env.lattice.bottom}
    if not env.world.element(element_id).attestable:
        return frozenset(levels)
    for point in admitted_triples(env, element_id):
        levels |= reachable_levels(env, point)
    return frozenset(levels)


def potential_maxima(env: Environment, element_id: str) -> Tuple[TrustLevel, ...]:
    """Максимальная антицепь P(e): верхний предел доверия элемента"""
    return env.lattice.maximal(trust_potential(env, element_id))


@dataclass(frozen=True)
class TrustableClass:
    """
    Классификация элемента по потенциалу.

    kind: Untrustable | FullyTrustable | TrustableWrtBound | BelowBound
    maxima: максимальные уровни P(e), не меньшие границы (для TrustableWrtBound)
    """
    kind: str
    maxima: Tuple[TrustLevel, ...] = ()

    @property
    def unique_max(self) -> Optional[TrustLevel]:
        return self.maxima[0] if len(self.maxima) == 1 else None

    def __str__(self) -> str:
        if not self.maxima:
            return self.kind
        return f"{self.kind}({', '.join(m.name for m in self.maxima)})"


def trustable_class(env: Environment, element_id: str, bound: TrustLevel) -> TrustableClass:
    """
    Классификация по границе.

    Raises:
        UnknownLevel: Граница не принадлежит решётке окружения
    """
    lattice = env.lattice
    lattice.level(bound)
    potential = trust_potential(env, element_id)
    if potential == {lattice.bottom}:
        return TrustableClass("Untrustable")
    if lattice.top in potential:
        return TrustableClass("FullyTrustable", (lattice.top,))
    above = [d for d in potential if lattice.leq(bound, d)]
    if not above:
        return TrustableClass("BelowBound", lattice.maximal(potential))
    return TrustableClass("TrustableWrtBound", lattice.maximal(above))


Expressibility = namedtuple("Expressibility", ["mechanisms", "verify_policies",
                                               "decide_policies", "triples"])


def expressibility(env: Environment) -> Expressibility:
    """Размеры пространств 𝖠, Υ, Δ и число допустимых троек по всем элементам"""
    triples = set()
    for element_id in env.world.elements:
        triples |= admitted_triples(env, element_id)
    return Expressibility(len(env.world.mechanisms), len(env.verify_policies),
                          len(env.decide_policies), len(triples))
