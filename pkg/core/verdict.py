"""
Верификация: предикатные атомы, политики verify и проверка их таблиц случаев.

Политика verify отображает утверждение в класс результата. Таблица случаев
проверяется статически перебором согласованных оценок атомов: случаи попарно
не пересекаются, покрывают всё пространство (или есть класс по умолчанию),
а любая оценка с χ_NULL попадает в класс ошибки.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from .errors import PolicyUnchecked
from .evidence import (
    Claim, Context, ContextSnapshot, MeasurementValues, NullMeasurement, Signature,
    chi_null, measurement_digest,
)
from .logger_module import init_logging

logger = init_logging("verdict")


# === ПРЕДИКАТНЫЕ АТОМЫ ===

@dataclass(frozen=True, order=True)
class PredicateAtom:
    """
    Атом χ: chi_s, chi_m, chi_i, chi_null или ctx-охрана (key = expected).
    """
    kind: str
    key: str = ""
    expected: str = ""

    def __str__(self) -> str:
        if self.kind == "ctx":
            return f'ctx({self.key} = "{self.expected}")'
        return self.kind

    @property
    def fails_when(self) -> bool:
        """Значение, при котором атом считается проваленным"""
        return self.kind == "chi_null"


CHI_S = PredicateAtom("chi_s")
CHI_M = PredicateAtom("chi_m")
CHI_I = PredicateAtom("chi_i")
CHI_NULL = PredicateAtom("chi_null")
ATOM_KINDS = ("chi_s", "chi_m", "chi_i", "chi_null", "ctx")


def ctx_guard(key: str, expected: str) -> PredicateAtom:
    return PredicateAtom("ctx", key, expected)


def eval_atom(atom: PredicateAtom, claim: Claim, ctx: Union[Context, ContextSnapshot]) -> bool:
    """
    Вычисляет атом на утверждении.

    chi_i на живом контексте потребляет nonce: повторное предъявление того же
    утверждения даёт False. На снимке nonce только проверяется.
    """
    element = claim.grounded_to
    if atom.kind == "chi_null":
        return chi_null(claim)

    if atom.kind == "chi_s":
        signature = claim.signature
        return (isinstance(signature, Signature)
                and ctx.key_owner(signature.key_ref) == element
                and signature.payload_digest == measurement_digest(claim.measurement)
                and signature.nonce == claim.claim_id.nonce)

    if atom.kind == "chi_m":
        measurement = claim.measurement
        if isinstance(measurement, NullMeasurement):
            return False
        expected = ctx.expected_for(element)
        return expected is not None and measurement.as_dict() == dict(expected)

    if atom.kind == "chi_i":
        return ctx.take_nonce(claim.claim_id.nonce)

    if atom.kind == "ctx":
        return ctx.value(atom.key, element) == atom.expected

    raise ValueError(f"неизвестный вид атома '{atom.kind}'")


# === ВЫРАЖЕНИЯ СЛУЧАЕВ ===

@dataclass(frozen=True)
class Atom:
    atom: PredicateAtom


@dataclass(frozen=True)
class Xi:
    """Конъюнкция объявленных в политике ctx-охран"""


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


Expr = Union[Atom, Xi, Const, Not, And, Or]
Valuation = Mapping[PredicateAtom, bool]


def evaluate(expr: Expr, valuation: Valuation, xi_atoms: Tuple[PredicateAtom, ...]) -> bool:
    if isinstance(expr, Atom):
        return valuation[expr.atom]
    if isinstance(expr, Xi):
        return all(valuation[a] for a in xi_atoms)
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Not):
        return not evaluate(expr.operand, valuation, xi_atoms)
    if isinstance(expr, And):
        return evaluate(expr.left, valuation, xi_atoms) and evaluate(expr.right, valuation, xi_atoms)
    if isinstance(expr, Or):
        return evaluate(expr.left, valuation, xi_atoms) or evaluate(expr.right, valuation, xi_atoms)
    raise TypeError(f"неизвестный узел выражения {expr!r}")


def atoms_of(expr: Expr, xi_atoms: Tuple[PredicateAtom, ...]) -> FrozenSet[PredicateAtom]:
    if isinstance(expr, Atom):
        return frozenset([expr.atom])
    if isinstance(expr, Xi):
        return frozenset(xi_atoms)
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Not):
        return atoms_of(expr.operand, xi_atoms)
    return atoms_of(expr.left, xi_atoms) | atoms_of(expr.right, xi_atoms)


_PRECEDENCE = {Or: 1, And: 2, Not: 3}


def render_expr(expr: Expr, parent: int = 0) -> str:
    """Каноническая запись выражения (скобки только там, где нужны)"""
    if isinstance(expr, Atom):
        return str(expr.atom)
    if isinstance(expr, Xi):
        return "xi"
    if isinstance(expr, Const):
        return "true" if expr.value else "false"
    own = _PRECEDENCE[type(expr)]
    if isinstance(expr, Not):
        text = "not " + render_expr(expr.operand, own)
    else:
        word = " and " if isinstance(expr, And) else " or "
        text = render_expr(expr.left, own) + word + render_expr(expr.right, own + 1)
    return f"({text})" if own < parent else text


def is_consistent(valuation: Valuation) -> bool:
    """
    Оценка реализуема каким-либо утверждением и контекстом:
    chi_null исключает chi_s и chi_m, ctx-охраны одного ключа с разными
    значениями взаимоисключающие.
    """
    if valuation.get(CHI_NULL) and (valuation.get(CHI_S) or valuation.get(CHI_M)):
        return False
    true_guards: Dict[str, str] = {}
    for atom, value in valuation.items():
        if atom.kind == "ctx" and value:
            if true_guards.setdefault(atom.key, atom.expected) != atom.expected:
                return False
    return True


def enumerate_valuations(atoms: Iterable[PredicateAtom]) -> Iterator[Dict[PredicateAtom, bool]]:
    """Все согласованные оценки заданных атомов в детерминированном порядке"""
    ordered = sorted(set(atoms))
    for values in itertools.product((False, True), repeat=len(ordered)):
        valuation = dict(zip(ordered, values))
        if is_consistent(valuation):
            yield valuation


def render_valuation(valuation: Valuation) -> Tuple[Tuple[str, str], ...]:
    return tuple((str(a), "true" if v else "false") for a, v in sorted(valuation.items()))


# === ПОЛИТИКИ VERIFY ===

@dataclass(frozen=True)
class ResultClass:
    """Класс результата верификации; ровно один класс политики - ошибка"""
    label: str
    is_error: bool = False

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class VerifyCase:
    condition: Expr
    target: str


@dataclass
class VerifyPolicy:
    """Упорядоченная таблица случаев: условие → класс результата"""
    name: str
    classes: Tuple[ResultClass, ...]
    cases: Tuple[VerifyCase, ...]
    default: Optional[str] = None
    context_guards: Tuple[PredicateAtom, ...] = ()
    _checked: bool = field(default=False, compare=False, repr=False)

    @property
    def checked(self) -> bool:
        return self._checked

    def class_by_label(self, label: str) -> Optional[ResultClass]:
        for result_class in self.classes:
            if result_class.label == label:
                return result_class
        return None

    @property
    def error_class(self) -> Optional[ResultClass]:
        errors = [c for c in self.classes if c.is_error]
        return errors[0] if len(errors) == 1 else None

    def atoms(self) -> Tuple[PredicateAtom, ...]:
        """Атомы, встречающиеся в случаях (в порядке сортировки)"""
        found = set()
        for case in self.cases:
            found |= atoms_of(case.condition, self.context_guards)
        return tuple(sorted(found))

    def matching_cases(self, valuation: Valuation) -> List[int]:
        return [i for i, case in enumerate(self.cases)
                if evaluate(case.condition, valuation, self.context_guards)]

    def select(self, valuation: Valuation) -> Tuple[Optional[str], Optional[int]]:
        """Класс по оценке: первый сработавший случай либо класс по умолчанию"""
        matches = self.matching_cases(valuation)
        if matches:
            return self.cases[matches[0]].target, matches[0]
        return self.default, None


@dataclass(frozen=True)
class PolicyDiagnostic:
    """Диагностика статической проверки политики"""
    kind: str
    policy: str
    message: str
    witness: Tuple[Tuple[str, str], ...] = ()
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.kind} [{self.policy}] {self.message}"


@dataclass(frozen=True)
class VerdictOutcome:
    """Результат верификации: класс, утверждение и снимок Ξ"""
    policy: str
    result_class: ResultClass
    claim: Claim
    ctx_snapshot: ContextSnapshot
    atom_values: Tuple[Tuple[PredicateAtom, bool], ...]
    case_index: Optional[int]

    def atom_value(self, atom: PredicateAtom) -> Optional[bool]:
        return dict(self.atom_values).get(atom)

    def failed_atoms(self) -> FrozenSet[PredicateAtom]:
        """Атомы в проваленной полярности (chi_null - когда истинен)"""
        return frozenset(a for a, v in self.atom_values if v == a.fails_when)

    @property
    def measurement_is_null(self) -> bool:
        return not isinstance(self.claim.measurement, MeasurementValues)


def check_verify_policy(policy: VerifyPolicy) -> List[PolicyDiagnostic]:
    """
    Статическая проверка таблицы случаев.

    Перебирает согласованные оценки атомов политики вместе с chi_s, chi_m, chi_null.
    При отсутствии ошибок помечает политику проверенной.
    """
    diagnostics: List[PolicyDiagnostic] = []

    def report(kind, message, witness=(), severity="error"):
        diagnostics.append(PolicyDiagnostic(kind, policy.name, message, witness, severity))

    labels = [c.label for c in policy.classes]
    if len(set(labels)) != len(labels):
        report("DuplicateClass", "повторяющиеся метки классов результата")
    error_classes = [c.label for c in policy.classes if c.is_error]
    if len(error_classes) != 1:
        report("ErrorClassCount", f"ожидается ровно один класс ошибки, найдено {len(error_classes)}")

    for i, case in enumerate(policy.cases):
        if case.target not in labels:
            report("UnknownClass", f"случай {i} ссылается на неизвестный класс '{case.target}'")

    error_label = error_classes[0] if len(error_classes) == 1 else None
    if policy.default is None:
        report("MissingDefault", "не задан класс по умолчанию", severity="warning")
    elif policy.default not in labels:
        report("UnknownClass", f"класс по умолчанию '{policy.default}' не объявлен")
    elif policy.default != error_label:
        report("DefaultNotError", f"класс по умолчанию '{policy.default}' не является ошибкой")

    seen_overlaps = set()
    seen_null = set()
    gap_reported = False
    atoms = set(policy.atoms()) | {CHI_S, CHI_M, CHI_NULL}
    for valuation in enumerate_valuations(atoms):
        matches = policy.matching_cases(valuation)
        for i, j in itertools.combinations(matches, 2):
            if (i, j) not in seen_overlaps:
                seen_overlaps.add((i, j))
                report("Overlap", f"случаи {i} и {j} пересекаются", render_valuation(valuation))

        if not matches and policy.default is None and not gap_reported:
            gap_reported = True
            report("Gap", "оценка не покрыта ни одним случаем", render_valuation(valuation))

        if valuation[CHI_NULL]:
            label, index = policy.select(valuation)
            if label is not None and label != error_label and index not in seen_null:
                seen_null.add(index)
                report("NullNotError",
                       f"нулевое утверждение попадает в класс '{label}'",
                       render_valuation(valuation))

    policy._checked = not any(d.severity == "error" for d in diagnostics)
    return diagnostics


def verify(policy: VerifyPolicy, claim: Claim, ctx: Context) -> VerdictOutcome:
    """
    Морфизм verify_υ: C × Ξ → V_υ.

    Снимок Ξ делается до вычисления атомов; chi_i потребляет nonce утверждения.

    Raises:
        PolicyUnchecked: Если политика не прошла check_verify_policy
    """
    if not policy.checked:
        raise PolicyUnchecked(policy.name)

    snapshot = ctx.snapshot()
    values = {atom: eval_atom(atom, claim, ctx) for atom in policy.atoms()}
    full = dict(values)
    # Атомы вне таблицы тоже фиксируются для форензики
    for atom in (CHI_S, CHI_M, CHI_NULL):
        if atom not in full:
            full[atom] = eval_atom(atom, claim, snapshot)
    if CHI_I not in full:
        full[CHI_I] = claim.claim_id.nonce in snapshot.open_nonces

    matches = policy.matching_cases(full)
    if len(matches) > 1:
        logger.warning("Политика %s: несколько случаев %s, выбран первый", policy.name, matches)
    label, index = policy.select(full)
    if label is None:
        # Проверенная политика без класса по умолчанию покрывает все оценки
        label = policy.error_class.label
    result_class = policy.class_by_label(label)

    return VerdictOutcome(
        policy=policy.name,
        result_class=result_class,
        claim=claim,
        ctx_snapshot=snapshot,
        atom_values=tuple(sorted(full.items())),
        case_index=index,
    )
