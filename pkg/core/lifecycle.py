"""
Жизненный цикл элемента: операции σ, перезапуск и сброс питания,
классификация операций и сценарии с проверками уровней доверия.

Состояния 0 и ! не несут состояния элемента; всё, что переживает выключение,
хранится в Ξ (ctx.persisted, реестр ключей, счётчики).
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .capability import Environment, PipelinePoint, admitted_triples, preferred_point
from .errors import InvalidTransition, RestrictionViolation
from .evidence import Context, Element
from .lattice import DecisionLattice, TrustLevel
from .logger_module import init_logging
from .pipeline import ForensicReport, run_pipeline
from .state_manager import (
    TERMINAL, ZERO, LifecycleState, LifecycleStateManager, LiveState, ZeroState,
)
from .verdict import PredicateAtom

logger = init_logging("lifecycle")


class SigmaClass(Enum):
    """Класс операции σ"""
    IDEMPOTENT = "idempotent"
    DANGEROUS = "dangerous"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class Edit:
    """
    Декларативная правка: set/clear слота, смена фазы, инкремент счётчика.

    kind: set | clear | phase | increment
    """
    kind: str
    slot: str = ""
    value: str = ""

    def __str__(self) -> str:
        if self.kind == "set":
            return f'set {self.slot} = "{self.value}"'
        if self.kind == "clear":
            return f"clear {self.slot}"
        if self.kind == "phase":
            return f'phase "{self.value}"'
        return f"increment {self.slot}"


@dataclass(frozen=True)
class SigmaOp:
    name: str
    sigma_class: SigmaClass = SigmaClass.UNCLASSIFIED
    edits: Tuple[Edit, ...] = ()


# Встроенные операции: включение, выключение, перезапуск, сброс питания
SIGMA_ON = SigmaOp("on")
SIGMA_OFF = SigmaOp("off")
SIGMA_RESTART = SigmaOp("restart")
SIGMA_POWER_CYCLE = SigmaOp("power_cycle")
BUILTIN_SIGMAS = {op.name: op for op in (SIGMA_ON, SIGMA_OFF, SIGMA_RESTART, SIGMA_POWER_CYCLE)}
COUNTERS = ("restart", "reset")


def boot_element(template: Element, ctx: Context) -> Element:
    """Элемент после включения: только слоты, сохранённые в Ξ"""
    return template.with_state(ctx.persisted.get(template.id, {}))


def dormant_element(template: Element) -> Element:
    """Элемент в 0 или !: неаттестуемый и без состояния"""
    return replace(template, attestable=False, state={})


def _persist(element: Element, ctx: Context) -> None:
    ctx.persisted[element.id] = {s: v for s, v in element.state.items() if s in element.persistent}


def _apply_edits(element: Element, phase: str, edits: Sequence[Edit],
                 ctx: Context) -> Tuple[Element, str]:
    state = dict(element.state)
    for edit in edits:
        if edit.kind == "set":
            state[edit.slot] = edit.value
        elif edit.kind == "clear":
            state.pop(edit.slot, None)
        elif edit.kind == "phase":
            phase = edit.value
        elif edit.kind == "increment":
            counter = ctx.restart_counter if edit.slot == "restart" else ctx.reset_counter
            counter[element.id] = counter.get(element.id, 0) + 1
        else:
            raise ValueError(f"неизвестная правка '{edit.kind}'")
    return element.with_state(state), phase


def apply_sigma(state: LifecycleState, op: SigmaOp, ctx: Context, template: Element) -> LifecycleState:
    """
    Применяет σ к состоянию жизненного цикла.

    Args:
        state: Текущее состояние
        op: Операция (встроенная on/off/restart/power_cycle или объявленная)
        ctx: Контекст Ξ (сохраняемые слоты, счётчики)
        template: Описание элемента в мире (возможности, сохраняемые слоты)

    Raises:
        InvalidTransition: Операция неприменима в данном состоянии
    """
    eid = template.id
    if op.name == "on":
        if not isinstance(state, ZeroState):
            raise InvalidTransition(op.name, str(state))
        return LiveState(boot_element(template, ctx), "boot")

    if op.name == "off":
        if not isinstance(state, LiveState):
            raise InvalidTransition(op.name, str(state))
        _persist(state.element, ctx)
        return TERMINAL

    if op.name == "restart":
        if not isinstance(state, LiveState):
            raise InvalidTransition(op.name, str(state))
        element = state.element
        keep = element.persistent | element.survives_restart
        _persist(element, ctx)
        ctx.restart_counter[eid] = ctx.restart_counter.get(eid, 0) + 1
        kept = {s: v for s, v in element.state.items() if s in keep}
        return LiveState(element.with_state(kept), "boot")

    if op.name == "power_cycle":
        if isinstance(state, ZeroState):
            raise InvalidTransition(op.name, str(state))
        if isinstance(state, LiveState):
            _persist(state.element, ctx)
        ctx.reset_counter[eid] = ctx.reset_counter.get(eid, 0) + 1
        ctx.restart_counter[eid] = 0
        return ZERO

    if not isinstance(state, LiveState):
        raise InvalidTransition(op.name, str(state))
    element, phase = _apply_edits(state.element, state.phase, op.edits, ctx)
    return LiveState(element, phase)


# === КЛАССИФИКАЦИЯ ОПЕРАЦИЙ ===

@dataclass(frozen=True)
class ClassificationViolation:
    element: str
    before: Optional[TrustLevel]
    after: Optional[TrustLevel]
    reason: str


@dataclass(frozen=True)
class ClassificationReport:
    operation: str
    sigma_class: SigmaClass
    checked: Tuple[str, ...]
    violations: Tuple[ClassificationViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def classify_check(env: Environment, op: SigmaOp, fixtures: Sequence[str],
                   point: Optional[PipelinePoint], ctx: Context) -> ClassificationReport:
    """
    Прогоняет конвейер до и после σ на каждом элементе.

    Idempotent требует равных решений, Dangerous - решения после не выше решения до;
    повышение доверия сообщается всегда. Элементы, для которых точка недопустима,
    отмечаются причиной 'restriction'.
    """
    lattice = env.lattice
    violations: List[ClassificationViolation] = []
    checked: List[str] = []
    for eid in sorted(fixtures):
        template = env.world.element(eid)
        element_point = point or preferred_point(env, eid)
        if element_point is None or element_point not in admitted_triples(env, eid):
            violations.append(ClassificationViolation(eid, None, None, "restriction"))
            continue
        before, _ = run_pipeline(env, eid, element_point, ctx)
        after_state = apply_sigma(LiveState(template, "run"), op, ctx, template)
        after_element = (after_state.element if isinstance(after_state, LiveState)
                         else dormant_element(template))
        after, _ = run_pipeline(env.with_element(after_element), eid, element_point, ctx)
        checked.append(eid)

        relation = lattice.compare(after, before)
        if op.sigma_class is SigmaClass.IDEMPOTENT and relation != "eq":
            violations.append(ClassificationViolation(eid, before, after, "changed"))
        elif op.sigma_class is SigmaClass.DANGEROUS and relation not in ("eq", "lt"):
            violations.append(ClassificationViolation(eid, before, after, "not-below"))
        elif relation == "gt":
            violations.append(ClassificationViolation(eid, before, after, "raises"))
    return ClassificationReport(op.name, op.sigma_class, tuple(checked), tuple(violations))


# === СЦЕНАРИИ ===

@dataclass(frozen=True)
class ApplySigma:
    name: str

    def __str__(self) -> str:
        return f"sigma {self.name}"


@dataclass(frozen=True)
class AttestStep:
    point: Optional[PipelinePoint] = None

    def __str__(self) -> str:
        return f"attest {self.point}" if self.point else "attest"


@dataclass(frozen=True)
class AssertLevel:
    comparison: str
    level: str

    def __str__(self) -> str:
        return f"assert_level {self.comparison} {self.level}"


@dataclass(frozen=True)
class AssertTransitionPolicy:
    """Цепочка сравнений над уровнями и фазами: D_AUTH <= boot < run >= shutdown"""
    terms: Tuple[str, ...]
    operators: Tuple[str, ...]

    def __post_init__(self):
        if len(self.terms) != len(self.operators) + 1 or len(self.terms) < 2:
            raise ValueError("цепочка сравнений: термов должно быть на один больше операторов")

    def __str__(self) -> str:
        parts = [self.terms[0]]
        for op, term in zip(self.operators, self.terms[1:]):
            parts += [op, term]
        return "assert_transition " + " ".join(parts)


@dataclass(frozen=True)
class PowerCycle:
    def __str__(self) -> str:
        return "power_cycle"


@dataclass(frozen=True)
class Restart:
    def __str__(self) -> str:
        return "restart"


@dataclass(frozen=True)
class Tamper:
    """Внешняя правка сохранённого состояния при выключенном элементе (value=None - стирание)"""
    slot: str
    value: Optional[str]

    def __str__(self) -> str:
        if self.value is None:
            return f"tamper clear {self.slot}"
        return f'tamper {self.slot} = "{self.value}"'


@dataclass(frozen=True)
class AssertMeet:
    a: str
    b: str
    expected: str

    def __str__(self) -> str:
        return f"assert_meet {self.a} {self.b} = {self.expected}"


@dataclass(frozen=True)
class AssertAtom:
    atom: PredicateAtom
    expected: bool

    def __str__(self) -> str:
        return f"assert_atom {self.atom} = {'true' if self.expected else 'false'}"


@dataclass(frozen=True)
class Advance:
    ticks: int = 1

    def __str__(self) -> str:
        return f"advance {self.ticks}"


Step = Union[ApplySigma, AttestStep, AssertLevel, AssertTransitionPolicy, PowerCycle, Restart,
             Tamper, AssertMeet, AssertAtom, Advance]


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    element: str
    steps: Tuple[Step, ...]


@dataclass(frozen=True)
class TraceStep:
    index: int
    step: str
    state: str
    level: Optional[str] = None
    assertion: Optional[str] = None
    detail: str = ""


@dataclass(frozen=True)
class Trace:
    scenario: str
    element: str
    steps: Tuple[TraceStep, ...]
    final_level: Optional[str]
    aborted: Optional[str]
    counters: Tuple[Tuple[str, int], ...]
    transitions: Tuple[str, ...] = ()

    @property
    def assertions(self) -> Tuple[TraceStep, ...]:
        return tuple(s for s in self.steps if s.assertion is not None)

    @property
    def passed(self) -> bool:
        """Нет проваленных проверок и прогон не прерван (несравнимые - не провал)"""
        return self.aborted is None and all(s.assertion != "fail" for s in self.assertions)


COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")


def compare_levels(lattice: DecisionLattice, left: TrustLevel, op: str, right: TrustLevel) -> str:
    """
    Трёхзначная проверка 'left op right': pass, fail или incomparable.

    Порядковые сравнения несравнимых уровней дают incomparable.
    """
    relation = lattice.compare(left, right)
    if op == "==":
        return "pass" if relation == "eq" else "fail"
    if op == "!=":
        return "fail" if relation == "eq" else "pass"
    if relation == "incomparable":
        return "incomparable"
    accepted = {"<": ("lt",), "<=": ("lt", "eq"), ">": ("gt",), ">=": ("gt", "eq")}[op]
    return "pass" if relation in accepted else "fail"


class _ScenarioRun:
    """Состояние одного прогона сценария"""

    def __init__(self, env: Environment, script: ScenarioScript, ctx: Context,
                 sigmas: Mapping[str, SigmaOp]):
        self.env = env
        self.script = script
        self.ctx = ctx
        self.sigmas = dict(BUILTIN_SIGMAS)
        self.sigmas.update(sigmas)
        self.template = env.world.element(script.element)
        self.manager = LifecycleStateManager(ZERO)
        self.transitions: List[str] = []
        for kind in ("zero", "live", "terminal"):
            self.manager.register_state_callback(kind, self._record)
        self.last_level: Optional[TrustLevel] = None
        self.last_report: Optional[ForensicReport] = None
        self.phase_levels: Dict[str, TrustLevel] = {}

    def _record(self, old: LifecycleState, new: LifecycleState) -> None:
        if str(old) != str(new):
            self.transitions.append(f"{old} -> {new}")

    def _sigma(self, op: SigmaOp) -> None:
        new_state = apply_sigma(self.manager.current_state, op, self.ctx, self.template)
        self.manager.transition_to(new_state)

    def _current_element(self) -> Element:
        return self.manager.live_element() or dormant_element(self.template)

    def _phase(self) -> str:
        state = self.manager.current_state
        return state.phase if isinstance(state, LiveState) else str(state)

    def _term(self, term: str) -> Optional[TrustLevel]:
        if term in self.phase_levels:
            return self.phase_levels[term]
        if term in self.env.lattice:
            return self.env.lattice.level(term)
        return None

    def step(self, step: Step) -> Tuple[Optional[str], Optional[str], str]:
        """Выполняет шаг; возвращает (уровень, исход проверки, пояснение)"""
        lattice = self.env.lattice
        if isinstance(step, ApplySigma):
            if step.name not in self.sigmas:
                raise InvalidTransition(step.name, "undeclared")
            self._sigma(self.sigmas[step.name])
            return None, None, ""
        if isinstance(step, PowerCycle):
            self._sigma(SIGMA_POWER_CYCLE)
            return None, None, ""
        if isinstance(step, Restart):
            self._sigma(SIGMA_RESTART)
            return None, None, ""
        if isinstance(step, Tamper):
            if not self.manager.can_tamper():
                raise InvalidTransition("tamper", str(self.manager.current_state))
            stored = self.ctx.persisted.setdefault(self.template.id, {})
            if step.value is None:
                stored.pop(step.slot, None)
            else:
                stored[step.slot] = step.value
            return None, None, f"persisted {step.slot}"
        if isinstance(step, Advance):
            return None, None, f"clock {self.ctx.advance(step.ticks)}"
        if isinstance(step, AttestStep):
            point = step.point or preferred_point(self.env, self.template.id)
            if point is None:
                raise RestrictionViolation(self.template.id, "none")
            env = self.env.with_element(self._current_element())
            level, report = run_pipeline(env, self.template.id, point, self.ctx)
            self.last_level, self.last_report = level, report
            self.phase_levels[self._phase()] = level
            return level.name, None, f"{point} -> {report.outcome.result_class.label}"
        if isinstance(step, AssertLevel):
            if self.last_level is None:
                return None, "fail", "no decision recorded"
            outcome = compare_levels(lattice, self.last_level, step.comparison,
                                     lattice.level(step.level))
            return self.last_level.name, outcome, f"{self.last_level.name} {step.comparison} {step.level}"
        if isinstance(step, AssertMeet):
            actual = lattice.meet(step.a, step.b)
            outcome = "pass" if actual.name == step.expected else "fail"
            return None, outcome, f"{step.a} ∧ {step.b} = {actual.name}"
        if isinstance(step, AssertAtom):
            if self.last_report is None:
                return None, "fail", "no outcome recorded"
            value = self.last_report.outcome.atom_value(step.atom)
            outcome = "pass" if value == step.expected else "fail"
            return None, outcome, f"{step.atom} = {value}"
        if isinstance(step, AssertTransitionPolicy):
            return None, *self._transition(step)
        raise TypeError(f"неизвестный шаг {step!r}")

    def _transition(self, step: AssertTransitionPolicy) -> Tuple[str, str]:
        values = [self._term(t) for t in step.terms]
        missing = [t for t, v in zip(step.terms, values) if v is None]
        if missing:
            return "fail", f"no level for {', '.join(missing)}"
        outcomes = []
        details = []
        for (left, right), op, (lname, rname) in zip(zip(values, values[1:]), step.operators,
                                                      zip(step.terms, step.terms[1:])):
            outcome = compare_levels(self.env.lattice, left, op, right)
            outcomes.append(outcome)
            details.append(f"{lname}={left.name} {op} {rname}={right.name}: {outcome}")
        if "fail" in outcomes:
            return "fail", "; ".join(details)
        if "incomparable" in outcomes:
            return "incomparable", "; ".join(details)
        return "pass", "; ".join(details)


def run_scenario(env: Environment, script: ScenarioScript, ctx: Context,
                 sigmas: Optional[Mapping[str, SigmaOp]] = None) -> Trace:
    """
    Выполняет шаги сценария по порядку.

    Проваленные проверки записываются в трассу; InvalidTransition и нарушение
    ограничений прерывают прогон с частичной трассой.
    """
    run = _ScenarioRun(env, script, ctx, sigmas or {})
    eid = script.element
    if eid not in ctx.persisted:
        ctx.persisted[eid] = {s: v for s, v in run.template.state.items()
                              if s in run.template.persistent}

    steps: List[TraceStep] = []
    aborted = None
    for index, step in enumerate(script.steps):
        try:
            level, assertion, detail = run.step(step)
        except (InvalidTransition, RestrictionViolation) as e:
            aborted = str(e)
            steps.append(TraceStep(index, str(step), str(run.manager.current_state), detail=aborted))
            logger.warning("Сценарий %s прерван на шаге %d: %s", script.name, index, e)
            break
        steps.append(TraceStep(index, str(step), str(run.manager.current_state),
                               level, assertion, detail))

    counters = (("reset", ctx.reset_counter.get(eid, 0)),
                ("restart", ctx.restart_counter.get(eid, 0)))
    return Trace(
        scenario=script.name,
        element=eid,
        steps=tuple(steps),
        final_level=run.last_level.name if run.last_level else None,
        aborted=aborted,
        counters=counters,
        transitions=tuple(run.transitions),
    )


# === EVIL MAID ===

EVIL_MAID_VARIANTS = ("CaseTable", "ErrorRouting")


def evil_maid_fixture(variant: str, element: str = "pc1") -> ScenarioScript:
    """
    Сценарий подмены прошивки при выключенном питании.

    CaseTable использует standard_verify (итог D_S), ErrorRouting -
    error_routing_verify из fixtures/evil_maid_error.trust (итог BOTTOM).
    В обоих вариантах идентичность подтверждается (chi_s = true).
    """
    if variant not in EVIL_MAID_VARIANTS:
        raise ValueError(f"неизвестный вариант '{variant}', доступные: {EVIL_MAID_VARIANTS}")
    verify_policy = "standard_verify" if variant == "CaseTable" else "error_routing_verify"
    point = PipelinePoint("quote", verify_policy, "standard_decide")
    steps: List[Step] = [
        ApplySigma("on"),
        ApplySigma("start"),
        AttestStep(point),
        AssertLevel("==", "TOP"),
        PowerCycle(),
        Tamper("firmware", "fw-evil"),
        ApplySigma("on"),
        ApplySigma("start"),
        AttestStep(point),
        AssertAtom(PredicateAtom("chi_s"), True),
    ]
    if variant == "CaseTable":
        steps.append(AssertLevel("==", "D_S"))
    else:
        steps += [AssertLevel("==", "BOTTOM"), AssertMeet("D_AUTH", "BOTTOM", "BOTTOM")]
    name = "evil_maid_case" if variant == "CaseTable" else "evil_maid_error"
    return ScenarioScript(name, element, tuple(steps))
