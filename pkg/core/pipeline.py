"""
Составные морфизмы конвейера: 𝒜 = decide ∘ verify ∘ attest, 𝒲 = verify ∘ attest,
𝒥 = decide ∘ verify, проверка принадлежности T, форензика и анализ разрыва.
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .capability import Environment, PipelinePoint, admitted_mechanisms, admitted_triples
from .decision import DecidePolicy, decide_traced
from .errors import NoImplication, NotALattice, RestrictionViolation
from .evidence import Claim, Context, attest, ground
from .lattice import TrustLevel
from .logger_module import init_logging
from .verdict import (
    CHI_M, CHI_NULL, CHI_S, PredicateAtom, VerdictOutcome, VerifyPolicy,
    enumerate_valuations, render_expr, verify,
)

logger = init_logging("pipeline")

# Словарь находок форензики (фиксированный, чтобы отчёты сравнивались построчно)
FINDING_BY_ATOM = {
    "chi_s": "identity-failure",
    "chi_m": "integrity-failure",
    "chi_i": "freshness-failure",
    "ctx": "context-failure",
    "chi_null": "procedural-failure",
}


@dataclass(frozen=True)
class ForensicReport:
    """Полная трасса одного прогона конвейера"""
    element: str
    point: PipelinePoint
    claim: Claim
    outcome: VerdictOutcome
    decision: TrustLevel
    failed_atoms: FrozenSet[PredicateAtom]
    matched_case: Optional[int]
    matched_case_text: str
    matched_rule: Optional[int]
    narrative: Tuple[str, ...]
    context_preserved: bool = True


def _check_point(env: Environment, element_id: str, point: PipelinePoint) -> None:
    env.verify_policy(point.verify_policy)
    env.decide_policy(point.decide_policy)
    if point not in admitted_triples(env, element_id):
        raise RestrictionViolation(element_id, str(point))


def _narrative(env: Environment, outcome: VerdictOutcome, decision: TrustLevel,
               failed: FrozenSet[PredicateAtom]) -> Tuple[str, ...]:
    lattice = env.lattice
    findings: List[str] = []
    if outcome.result_class.is_error:
        findings.append(f"procedural-failure: verification ended in error class {outcome.result_class.label}")
    for atom in sorted(failed):
        kind = FINDING_BY_ATOM[atom.kind]
        detail = "null evidence" if atom.kind == "chi_null" else f"{atom} is false"
        findings.append(f"{kind}: {detail}")
    if decision == lattice.top:
        findings.append("trusted: decision is " + decision.name)
    elif decision != lattice.bottom:
        findings.append(f"graded-decision: {decision.name} is between "
                        f"{lattice.bottom.name} and {lattice.top.name}")
    return tuple(findings)


def _report(env: Environment, point: PipelinePoint, claim: Claim, outcome: VerdictOutcome,
            decision: TrustLevel, rule: Optional[int], preserved: bool) -> ForensicReport:
    verify_policy = env.verify_policy(point.verify_policy)
    failed = outcome.failed_atoms()
    if outcome.case_index is not None:
        case_text = render_expr(verify_policy.cases[outcome.case_index].condition)
    else:
        case_text = "default"
    return ForensicReport(
        element=ground(claim),
        point=point,
        claim=claim,
        outcome=outcome,
        decision=decision,
        failed_atoms=failed,
        matched_case=outcome.case_index,
        matched_case_text=case_text,
        matched_rule=rule,
        narrative=_narrative(env, outcome, decision, failed),
        context_preserved=preserved,
    )


def run_pipeline(env: Environment, element_id: str, point: PipelinePoint,
                 ctx: Context) -> Tuple[TrustLevel, ForensicReport]:
    """
    Морфизм 𝒜: attest → verify → decide для одной точки.

    Снимок Ξ при аттестации сравнивается со снимком, по которому принимается
    решение; допустимое расхождение только в реестре nonce.

    Raises:
        RestrictionViolation: Точка не допускается ρ для элемента
    """
    _check_point(env, element_id, point)
    attest_snapshot = ctx.snapshot()
    claim = attest(env.world, element_id, point.mechanism, ctx)
    outcome = verify(env.verify_policy(point.verify_policy), claim, ctx)
    preserved = attest_snapshot.without_nonces() == outcome.ctx_snapshot.without_nonces()
    if not preserved:
        logger.warning("Контекст изменился между attest и decide для %s", element_id)
    return decide_outcome(env, point, outcome, preserved)


def decide_outcome(env: Environment, point: PipelinePoint, outcome: VerdictOutcome,
                   context_preserved: bool = True) -> Tuple[TrustLevel, ForensicReport]:
    """Стадия decide над готовым результатом верификации (в том числе полученным по сети)"""
    decision, rule = decide_traced(env.decide_policy(point.decide_policy), outcome)
    logger.info("%s @ %s -> %s (%s)", ground(outcome.claim), point, decision.name,
                outcome.result_class.label)
    return decision, _report(env, point, outcome.claim, outcome, decision, rule, context_preserved)


def is_trusted(env: Environment, element_id: str, point: PipelinePoint, ctx: Context) -> bool:
    """Принадлежность доверенному подобъекту T: решение равно ⊤"""
    decision, _ = run_pipeline(env, element_id, point, ctx)
    return decision == env.lattice.top


def trustworthy(env: Environment, element_id: str, mechanism: str,
                verify_policy: str, ctx: Context) -> VerdictOutcome:
    """
    Морфизм 𝒲 = verify ∘ attest: результат верификации без решения.

    Raises:
        RestrictionViolation: Механизм или политика не допускаются ρ
    """
    policy = env.verify_policy(verify_policy)
    if (mechanism not in admitted_mechanisms(env, element_id)
            or verify_policy not in env.restrictions.rho_u.get(mechanism, ())):
        raise RestrictionViolation(element_id, f"{mechanism}:{verify_policy}")
    claim = attest(env.world, element_id, mechanism, ctx)
    return verify(policy, claim, ctx)


def judgement(env: Environment, claim: Claim, verify_policy: str,
              decide_policy: str, ctx: Context) -> TrustLevel:
    """Морфизм 𝒥 = decide ∘ verify над уже полученным утверждением"""
    outcome = verify(env.verify_policy(verify_policy), claim, ctx)
    return decide_traced(env.decide_policy(decide_policy), outcome)[0]


def forensics(env: Environment, element_id: str, point: PipelinePoint,
              ctx: Context) -> ForensicReport:
    """Отчёт о прогоне: проваленные атомы, сработавший случай и правило"""
    return run_pipeline(env, element_id, point, ctx)[1]


def forensics_for_claim(env: Environment, claim: Claim, point: PipelinePoint,
                        ctx: Context) -> ForensicReport:
    """Форензика существующего утверждения (например, повторно предъявленного)"""
    _check_point(env, ground(claim), point)
    outcome = verify(env.verify_policy(point.verify_policy), claim, ctx)
    return decide_outcome(env, point, outcome)[1]


# === АНАЛИЗ РАЗРЫВА ===

@dataclass(frozen=True)
class GapPath:
    """Путь к целевому уровню: клетка decide и недостающие требования"""
    result_class: str
    rule: Optional[int]
    level: TrustLevel
    requirements: Tuple[str, ...]
    missing: Tuple[str, ...]
    from_class: Optional[str]


@dataclass(frozen=True)
class GapReport:
    current: TrustLevel
    target: TrustLevel
    implication: Optional[TrustLevel]
    implication_error: Optional[str]
    paths: Tuple[GapPath, ...]

    @property
    def reached(self) -> bool:
        """current уже не ниже target"""
        return not self.paths


def _literal(atom: PredicateAtom, value: bool) -> str:
    return f"{atom}={'true' if value else 'false'}"


def class_requirements(verify_policy: VerifyPolicy) -> Dict[str, FrozenSet[str]]:
    """Литералы, общие для всех согласованных оценок, выбирающих каждый класс"""
    atoms = set(verify_policy.atoms()) | {CHI_S, CHI_M, CHI_NULL}
    common: Dict[str, Set[str]] = {}
    for valuation in enumerate_valuations(atoms):
        label, _ = verify_policy.select(valuation)
        if label is None:
            continue
        literals = {_literal(a, v) for a, v in valuation.items()}
        if label in common:
            common[label] &= literals
        else:
            common[label] = literals
    return {label: frozenset(lits) for label, lits in common.items()}


def _cells(verify_policy: VerifyPolicy, decide_policy: DecidePolicy) -> List[Tuple[str, Optional[int], TrustLevel, FrozenSet[str]]]:
    """Клетки (класс, правило) с уровнем и полным набором требований"""
    requirements = class_requirements(verify_policy)
    seen = {}
    for result_class in verify_policy.classes:
        label = result_class.label
        if label not in requirements:
            continue
        for cell in decide_policy.guard_cells():
            level, rule = decide_policy.resolve_cell(label, cell)
            if level is None or (label, rule) in seen:
                continue
            needs = set(requirements[label])
            if rule is not None and decide_policy.rules[rule].guard is not None:
                needs.add(decide_policy.rules[rule].guard.requirement())
            seen[(label, rule)] = (label, rule, level, frozenset(needs))
    return list(seen.values())


def gap_analysis(env: Environment, current: TrustLevel, target: TrustLevel,
                 point: Optional[PipelinePoint] = None) -> GapReport:
    """
    Минимальные свидетельства для перехода от current к target.

    Алгебраическая часть - импликация current → target (или текст NoImplication);
    операционная часть - для каждой клетки decide с уровнем ≥ target требования,
    недостающие относительно лучшей клетки с уровнем current.

    Raises:
        UnknownLevel
    """
    lattice = env.lattice
    current, target = lattice.level(current), lattice.level(target)
    implication, error = None, None
    try:
        implication = lattice.implies(current, target)
    except (NoImplication, NotALattice) as e:
        error = str(e)

    if lattice.leq(target, current):
        return GapReport(current, target, implication, error, ())

    point = point or env.default_point
    if point is None:
        raise ValueError("для анализа разрыва нужна точка конвейера")
    verify_policy = env.verify_policy(point.verify_policy)
    decide_policy = env.decide_policy(point.decide_policy)
    cells = _cells(verify_policy, decide_policy)
    origins = [c for c in cells if c[2] == current]

    paths = []
    for label, rule, level, needs in cells:
        if not lattice.leq(target, level):
            continue
        best_missing, best_from = tuple(sorted(needs)), None
        for o_label, _, _, o_needs in origins:
            missing = tuple(sorted(needs - o_needs))
            if (len(missing), missing) < (len(best_missing), best_missing) or best_from is None:
                best_missing, best_from = missing, o_label
        paths.append(GapPath(label, rule, level, tuple(sorted(needs)), best_missing, best_from))
    paths.sort(key=lambda p: (len(p.missing), p.result_class, p.rule if p.rule is not None else -1))
    return GapReport(current, target, implication, error, tuple(paths))
