"""
Политики decide: класс результата (с охраной) → уровень доверия.

Охраны ссылаются только на снимок Ξ и на то, пусто ли измерение, поэтому
решение однозначно определяется классом и охраняемыми полями результата.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Set, Tuple

from .errors import DecisionGap, PolicyUnchecked
from .lattice import DecisionLattice, TrustLevel
from .logger_module import init_logging
from .verdict import CHI_M, CHI_NULL, CHI_S, PolicyDiagnostic, VerdictOutcome, VerifyPolicy, \
    enumerate_valuations

logger = init_logging("decision")

OTHER_VALUE = "<other>"


@dataclass(frozen=True)
class Guard:
    """Охрана правила: ctx_equals(key, value), measurement_null, measurement_present"""
    kind: str
    key: str = ""
    value: str = ""

    def __str__(self) -> str:
        if self.kind == "ctx_equals":
            return f'ctx {self.key} = "{self.value}"'
        return "measurement null" if self.kind == "measurement_null" else "measurement present"

    def holds(self, outcome: VerdictOutcome) -> bool:
        if self.kind == "ctx_equals":
            return outcome.ctx_snapshot.value(self.key, outcome.claim.grounded_to) == self.value
        if self.kind == "measurement_null":
            return outcome.measurement_is_null
        if self.kind == "measurement_present":
            return not outcome.measurement_is_null
        raise ValueError(f"неизвестная охрана '{self.kind}'")

    def holds_in_cell(self, cell: "GuardCell") -> bool:
        if self.kind == "ctx_equals":
            return cell.ctx.get(self.key) == self.value
        if self.kind == "measurement_null":
            return cell.measurement_null
        return not cell.measurement_null

    def requirement(self) -> str:
        """Литерал требования для анализа разрыва"""
        if self.kind == "ctx_equals":
            return f"ctx:{self.key}={self.value}"
        return "measurement=null" if self.kind == "measurement_null" else "measurement=present"


@dataclass(frozen=True)
class DecideRule:
    result_class: str
    guard: Optional[Guard]
    target: TrustLevel

    def __str__(self) -> str:
        guard = f" [{self.guard}]" if self.guard else ""
        return f"{self.result_class}{guard} -> {self.target.name}"


@dataclass(frozen=True)
class GuardCell:
    """Точка пространства охран: пустота измерения и значения ctx-ключей"""
    measurement_null: bool
    ctx: Dict[str, str]

    def describe(self) -> Tuple[Tuple[str, str], ...]:
        items = [("measurement", "null" if self.measurement_null else "present")]
        items += [(f"ctx:{k}", v) for k, v in sorted(self.ctx.items())]
        return tuple(items)


@dataclass
class DecidePolicy:
    """Упорядоченные правила decide и уровни по умолчанию для классов"""
    name: str
    lattice: DecisionLattice
    rules: Tuple[DecideRule, ...]
    defaults: Tuple[Tuple[str, TrustLevel], ...] = ()
    _checked_against: Set[str] = field(default_factory=set, compare=False, repr=False)

    def checked_against(self, verify_policy: str) -> bool:
        return verify_policy in self._checked_against

    def default_for(self, result_class: str) -> Optional[TrustLevel]:
        return dict(self.defaults).get(result_class)

    def rules_for(self, result_class: str) -> List[Tuple[int, DecideRule]]:
        return [(i, r) for i, r in enumerate(self.rules) if r.result_class == result_class]

    def guard_cells(self) -> Iterator[GuardCell]:
        """Разбиение пространства охран по значениям, упомянутым в правилах"""
        mentioned: Dict[str, Set[str]] = {}
        for rule in self.rules:
            if rule.guard is not None and rule.guard.kind == "ctx_equals":
                mentioned.setdefault(rule.guard.key, set()).add(rule.guard.value)
        keys = sorted(mentioned)
        choices = [sorted(mentioned[k]) + [OTHER_VALUE] for k in keys]

        def combos(i: int, acc: Dict[str, str]):
            if i == len(keys):
                yield dict(acc)
                return
            for value in choices[i]:
                acc[keys[i]] = value
                yield from combos(i + 1, acc)

        for measurement_null in (False, True):
            for ctx in combos(0, {}):
                yield GuardCell(measurement_null, ctx)

    def resolve_cell(self, result_class: str, cell: GuardCell) -> Tuple[Optional[TrustLevel], Optional[int]]:
        """Уровень и индекс правила для клетки (None, None - разрыв)"""
        for index, rule in self.rules_for(result_class):
            if rule.guard is None or rule.guard.holds_in_cell(cell):
                return rule.target, index
        return self.default_for(result_class), None


def decide_traced(policy: DecidePolicy, outcome: VerdictOutcome) -> Tuple[TrustLevel, Optional[int]]:
    """
    Решение с индексом сработавшего правила (None - уровень по умолчанию).

    Raises:
        PolicyUnchecked: Политика не проверена против политики verify результата
        DecisionGap: Класс не покрыт (только для непроверенных комбинаций)
    """
    if not policy.checked_against(outcome.policy):
        raise PolicyUnchecked(policy.name)

    label = outcome.result_class.label
    for index, rule in policy.rules_for(label):
        if rule.guard is None or rule.guard.holds(outcome):
            return rule.target, index
    default = policy.default_for(label)
    if default is None:
        raise DecisionGap(policy.name, label)
    return default, None


def decide(policy: DecidePolicy, outcome: VerdictOutcome) -> TrustLevel:
    """Морфизм decide_δ: V_υ → T_δ"""
    return decide_traced(policy, outcome)[0]


def null_reachable_classes(verify_policy: VerifyPolicy) -> Set[str]:
    """Классы, в которые может попасть утверждение с χ_NULL"""
    atoms = set(verify_policy.atoms()) | {CHI_S, CHI_M, CHI_NULL}
    found = set()
    for valuation in enumerate_valuations(atoms):
        if valuation[CHI_NULL]:
            label, _ = verify_policy.select(valuation)
            if label is not None:
                found.add(label)
    return found


def check_decide_policy(policy: DecidePolicy,
                        verify_policy: VerifyPolicy,
                        expectations_nonempty: bool = True) -> List[PolicyDiagnostic]:
    """
    Статическая проверка политики decide против политики verify.

    Правила для классов, отсутствующих в политике verify, игнорируются.
    При отсутствии ошибок пара считается проверенной.
    """
    diagnostics: List[PolicyDiagnostic] = []
    pair = f"{policy.name}/{verify_policy.name}"

    def report(kind, message, witness=(), severity="error"):
        diagnostics.append(PolicyDiagnostic(kind, pair, message, witness, severity))

    lattice = policy.lattice
    for i, rule in enumerate(policy.rules):
        if rule.target not in lattice:
            report("UnknownLevel", f"правило {i}: уровень '{rule.target.name}' вне решётки '{lattice.name}'")
    for label, level in policy.defaults:
        if level not in lattice:
            report("UnknownLevel", f"класс {label}: уровень '{level.name}' вне решётки '{lattice.name}'")
    if diagnostics:
        return diagnostics

    null_classes = null_reachable_classes(verify_policy)
    cells = list(policy.guard_cells())
    for result_class in verify_policy.classes:
        label = result_class.label
        gap_reported = err_reported = null_reported = False
        overlaps = set()
        for cell in cells:
            matching = [i for i, r in policy.rules_for(label)
                        if r.guard is None or r.guard.holds_in_cell(cell)]
            if len(matching) > 1 and tuple(matching[:2]) not in overlaps:
                overlaps.add(tuple(matching[:2]))
                report("RuleOverlap",
                       f"класс {label}: правила {matching[0]} и {matching[1]} пересекаются",
                       cell.describe())
            level, _ = policy.resolve_cell(label, cell)
            if level is None:
                if not gap_reported:
                    gap_reported = True
                    report("Gap", f"класс {label} не покрыт",
                           (("class", label),) + cell.describe())
                continue
            if result_class.is_error and level != lattice.bottom and not err_reported:
                err_reported = True
                report("ErrNotBottom", f"класс ошибки {label} отображается в {level.name}",
                       cell.describe())
            if (label in null_classes and cell.measurement_null
                    and level != lattice.bottom and not null_reported):
                null_reported = True
                report("ChiNullViolation",
                       f"нулевое утверждение класса {label} получает {level.name}",
                       cell.describe())

    targets = {r.target for r in policy.rules} | {level for _, level in policy.defaults}
    if expectations_nonempty and lattice.top not in targets:
        report("NoTopRule", f"ни одно правило не выдаёт {lattice.top.name}", severity="warning")

    if not any(d.severity == "error" for d in diagnostics):
        policy._checked_against.add(verify_policy.name)
    else:
        policy._checked_against.discard(verify_policy.name)
    return diagnostics
