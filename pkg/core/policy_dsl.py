"""
Язык описания моделей доверия (.trust).

Документ начинается с заголовка версии `trust-dsl 1` и состоит из секций
в фигурных скобках (lattice, mechanism, element, context, verify_policy,
decide_policy, rho, sigma, scenario, composition) и оператора `point default`.
Комментарии начинаются с '#'.

Разбор двухфазный: синтаксис каждого документа отдельно (грамматика
trust_grammar.lark), затем разрешение ссылок по всем документам сразу.
Документ с ошибками модели не даёт; каждая диагностика содержит позицию.
"""

import functools
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import lark

from .capability import Environment, PipelinePoint, RestrictionMaps
from .composition import CompositionView, MediationRule
from .decision import DecidePolicy, DecideRule, Guard
from .evidence import Context, Element, World, context_from_spec, digest_text
from .errors import NotALattice
from .lattice import DecisionLattice
from .lifecycle import (
    BUILTIN_SIGMAS, COUNTERS, Advance, ApplySigma, AssertAtom, AssertLevel, AssertMeet,
    AssertTransitionPolicy, AttestStep, Edit, PowerCycle, Restart, ScenarioScript, SigmaClass,
    SigmaOp, Tamper,
)
from .logger_module import init_logging
from .mechanism_loader import MechanismRegistry
from .verdict import (
    And, Atom, Const, Not, Or, PredicateAtom, ResultClass, VerifyCase, VerifyPolicy, Xi,
    ctx_guard, render_expr,
)

logger = init_logging("dsl")

HEADER = "trust-dsl 1"
ATOM_WORDS = ("chi_s", "chi_m", "chi_i", "chi_null")
BUILTIN_PHASES = ("boot", "zero", "terminal")
DERIVED_CONTEXT_KEYS = ("new",)


# === ДИАГНОСТИКА ===

@dataclass(frozen=True)
class SourceDocument:
    text: str
    origin: str = "<memory>"


@dataclass(frozen=True)
class ParseDiagnostic:
    origin: str
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.origin}:{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass(frozen=True)
class Pos:
    origin: str
    line: int
    column: int


Named = Tuple[str, Pos]


def _unescape(raw: str) -> str:
    return re.sub(r'\\(.)', r'\1', raw[1:-1])


def quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


# === СИНТАКСИС ===

@functools.lru_cache(maxsize=None)
def _parser() -> lark.Lark:
    """Общий LALR-разборщик грамматики .trust"""
    return lark.Lark.open("trust_grammar.lark", rel_to=__file__, parser="lalr",
                          propagate_positions=True, maybe_placeholders=True)


def strip_header(doc: SourceDocument, diagnostics: List[ParseDiagnostic]) -> str:
    """
    Проверяет заголовок версии и заменяет его строку пробелами,
    чтобы строки и столбцы остального текста не сдвинулись.
    """
    lines = doc.text.split("\n")
    for number, line in enumerate(lines):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            if stripped != HEADER:
                diagnostics.append(ParseDiagnostic(
                    doc.origin, number + 1, 1, f"ожидается заголовок '{HEADER}'"))
            lines[number] = " " * len(line)
            return "\n".join(lines)
    diagnostics.append(ParseDiagnostic(doc.origin, 1, 1, f"ожидается заголовок '{HEADER}'"))
    return doc.text


def _describe_terminal(name: str) -> str:
    try:
        pattern = _parser().get_terminal(name).pattern
    except KeyError:
        return "конец документа"
    if pattern.type == "str":
        return f"'{pattern.value}'"
    return name.lower()


def _syntax_diagnostic(error: lark.exceptions.UnexpectedInput, origin: str) -> ParseDiagnostic:
    line = error.line if isinstance(error.line, int) and error.line > 0 else 1
    column = error.column if isinstance(error.column, int) and error.column > 0 else 1
    if isinstance(error, lark.exceptions.UnexpectedCharacters):
        return ParseDiagnostic(origin, line, column, f"недопустимый символ {error.char!r}")
    expected = ", ".join(sorted({_describe_terminal(n) for n in error.expected}))
    if isinstance(error, lark.exceptions.UnexpectedEOF) or error.token.type == "$END":
        return ParseDiagnostic(origin, line, column, f"неожиданный конец документа, ожидается: {expected}")
    return ParseDiagnostic(origin, line, column, f"неожиданный токен '{error.token}', ожидается: {expected}")


# === ОБЪЯВЛЕНИЯ ПОСЛЕ СИНТАКСИСА ===

@dataclass
class _LatticeDecl:
    name: str
    pos: Pos
    levels: List[Named] = field(default_factory=list)
    orders: List[Tuple[str, str, Pos]] = field(default_factory=list)
    bottom: Optional[Named] = None
    top: Optional[Named] = None


@dataclass
class _MechanismDecl:
    name: str
    pos: Pos
    kind: Optional[Named] = None
    registers: List[Tuple[str, str, Pos]] = field(default_factory=list)
    key_slot: str = "ak"


@dataclass
class _ElementDecl:
    name: str
    pos: Pos
    attestable: bool = True
    capabilities: List[Named] = field(default_factory=list)
    state: List[Tuple[str, str, Pos]] = field(default_factory=list)
    persistent: List[Named] = field(default_factory=list)
    survives: List[Named] = field(default_factory=list)
    children: List[Named] = field(default_factory=list)


@dataclass
class _ContextDecl:
    expects: List[Tuple[str, str, str, Pos]] = field(default_factory=list)
    keys: List[Tuple[str, str, Pos]] = field(default_factory=list)
    known: List[Named] = field(default_factory=list)
    meta: List[Tuple[str, str, Pos]] = field(default_factory=list)
    seed: Optional[Tuple[str, Pos]] = None


@dataclass
class _VerifyDecl:
    name: str
    pos: Pos
    classes: List[Tuple[str, bool, Pos]] = field(default_factory=list)
    guards: List[Tuple[str, str, Pos]] = field(default_factory=list)
    cases: List[Tuple[object, str, Pos, List[Tuple[PredicateAtom, Pos]]]] = field(default_factory=list)
    default: Optional[Named] = None


@dataclass
class _DecideDecl:
    name: str
    pos: Pos
    lattice: Optional[Named] = None
    rules: List[Tuple[str, Optional[Guard], str, Pos]] = field(default_factory=list)
    defaults: List[Tuple[str, str, Pos]] = field(default_factory=list)


@dataclass
class _SigmaDecl:
    name: str
    pos: Pos
    sigma_class: Optional[Named] = None
    edits: List[Tuple[Edit, Pos]] = field(default_factory=list)


@dataclass
class _ScenarioDecl:
    name: str
    pos: Pos
    element: Optional[Named]
    steps: List[Tuple[object, Pos]] = field(default_factory=list)


@dataclass
class _CompositionDecl:
    name: str
    pos: Pos
    root: Optional[Named] = None
    mediations: List[Tuple[str, str, str, Pos]] = field(default_factory=list)


@dataclass
class _Declarations:
    lattices: List[_LatticeDecl] = field(default_factory=list)
    mechanisms: List[_MechanismDecl] = field(default_factory=list)
    elements: List[_ElementDecl] = field(default_factory=list)
    context: _ContextDecl = field(default_factory=_ContextDecl)
    verify: List[_VerifyDecl] = field(default_factory=list)
    decide: List[_DecideDecl] = field(default_factory=list)
    rho_a: List[Tuple[List[Named], List[Named], Pos]] = field(default_factory=list)
    rho_u: List[Tuple[Named, List[Named], Pos]] = field(default_factory=list)
    rho_d: List[Tuple[Named, List[Named], Pos]] = field(default_factory=list)
    points: List[Tuple[PipelinePoint, Pos]] = field(default_factory=list)
    sigmas: List[_SigmaDecl] = field(default_factory=list)
    scenarios: List[_ScenarioDecl] = field(default_factory=list)
    compositions: List[_CompositionDecl] = field(default_factory=list)


class _DeclarationBuilder(lark.Transformer):
    """
    Первая фаза: дерево разбора одного документа → объявления.

    Операторы секций возвращают пары (ключ, значение), секции собирают их
    в объявления. Оператор с ошибкой сообщает о ней и возвращает None.
    """

    def __init__(self, origin: str, decls: _Declarations, diagnostics: List[ParseDiagnostic]):
        super().__init__()
        self.origin = origin
        self.decls = decls
        self.diagnostics = diagnostics

    def _pos(self, item) -> Pos:
        return Pos(self.origin, item.line, item.column)

    def _named(self, token: lark.Token) -> Named:
        return str(token), self._pos(token)

    def _report(self, pos: Pos, message: str) -> None:
        self.diagnostics.append(ParseDiagnostic(pos.origin, pos.line, pos.column, message))

    # --- общие ---

    def STRING(self, token: lark.Token) -> lark.Token:
        return token.update(value=_unescape(token))

    def names(self, tokens) -> List[Named]:
        return [self._named(t) for t in tokens]

    @lark.v_args(inline=True)
    def boolean(self, token) -> bool:
        return token == "true"

    @lark.v_args(inline=True)
    def point(self, mechanism, verify, decide) -> Tuple[PipelinePoint, Pos]:
        return PipelinePoint(str(mechanism), str(verify), str(decide)), self._pos(mechanism)

    @lark.v_args(inline=True)
    def point_default(self, point):
        self.decls.points.append(point)

    # --- lattice ---

    @lark.v_args(inline=True)
    def level_stmt(self, names):
        return "level", names

    def order_stmt(self, chain):
        return "order", [(str(low), str(high), self._pos(low)) for low, high in zip(chain, chain[1:])]

    @lark.v_args(inline=True)
    def bottom_stmt(self, level):
        return "bottom", self._named(level)

    @lark.v_args(inline=True)
    def top_stmt(self, level):
        return "top", self._named(level)

    @lark.v_args(inline=True)
    def lattice(self, name, *statements):
        decl = _LatticeDecl(str(name), self._pos(name))
        for key, value in filter(None, statements):
            if key == "level":
                decl.levels.extend(value)
            elif key == "order":
                decl.orders.extend(value)
            else:
                setattr(decl, key, value)
        self.decls.lattices.append(decl)

    # --- mechanism ---

    @lark.v_args(inline=True)
    def kind_stmt(self, kind):
        return "kind", self._named(kind)

    @lark.v_args(inline=True)
    def register_stmt(self, register, slot):
        return "register", (str(register), str(slot), self._pos(register))

    @lark.v_args(inline=True)
    def key_slot_stmt(self, slot):
        return "key_slot", str(slot)

    @lark.v_args(inline=True)
    def mechanism(self, name, *statements):
        decl = _MechanismDecl(str(name), self._pos(name))
        for key, value in statements:
            if key == "register":
                decl.registers.append(value)
            else:
                setattr(decl, key, value)
        if decl.kind is None:
            self._report(decl.pos, f"механизм '{decl.name}' без kind")
        self.decls.mechanisms.append(decl)

    # --- element ---

    @lark.v_args(inline=True)
    def attestable_stmt(self, value):
        return "attestable", value

    @lark.v_args(inline=True)
    def capabilities_stmt(self, names):
        return "capabilities", names

    @lark.v_args(inline=True)
    def state_stmt(self, slot, value):
        return "state", (str(slot), str(value), self._pos(slot))

    @lark.v_args(inline=True)
    def persistent_stmt(self, names):
        return "persistent", names

    @lark.v_args(inline=True)
    def survives_stmt(self, names):
        return "survives", names

    @lark.v_args(inline=True)
    def children_stmt(self, names):
        return "children", names

    @lark.v_args(inline=True)
    def element(self, name, *statements):
        decl = _ElementDecl(str(name), self._pos(name))
        for key, value in statements:
            if key == "attestable":
                decl.attestable = value
            elif key == "state":
                decl.state.append(value)
            else:
                getattr(decl, key).extend(value)
        self.decls.elements.append(decl)

    # --- context: операторы пишут в общее объявление ---

    @lark.v_args(inline=True)
    def expect_stmt(self, element, register, value):
        self.decls.context.expects.append((str(element), str(register), str(value), self._pos(element)))

    @lark.v_args(inline=True)
    def key_stmt(self, ref, element):
        self.decls.context.keys.append((str(ref), str(element), self._pos(ref)))

    @lark.v_args(inline=True)
    def known_stmt(self, names):
        self.decls.context.known.extend(names)

    @lark.v_args(inline=True)
    def meta_stmt(self, key, value):
        self.decls.context.meta.append((str(key), str(value), self._pos(key)))

    @lark.v_args(inline=True)
    def seed_stmt(self, value):
        self.decls.context.seed = (str(value), self._pos(value))

    def context(self, _):
        return None

    # --- выражения: (выражение, ctx-атомы с позициями) или None ---

    @lark.v_args(inline=True)
    def word_atom(self, token):
        if token not in ATOM_WORDS:
            self._report(self._pos(token), f"необъявленный атом '{token}'")
            return None
        return PredicateAtom(str(token)), self._pos(token)

    @lark.v_args(inline=True)
    def ctx_atom(self, ctx, key, value):
        return ctx_guard(str(key), str(value)), self._pos(ctx)

    @lark.v_args(inline=True)
    def atom_expr(self, atom):
        if atom is None:
            return None
        predicate, pos = atom
        return Atom(predicate), [(predicate, pos)] if predicate.kind == "ctx" else []

    @lark.v_args(inline=True)
    def const_expr(self, value):
        return Const(value), []

    def xi_expr(self, _):
        return Xi(), []

    @lark.v_args(inline=True)
    def not_expr(self, operand):
        return None if operand is None else (Not(operand[0]), operand[1])

    @staticmethod
    def _binary(build, left, right):
        if left is None or right is None:
            return None
        return build(left[0], right[0]), left[1] + right[1]

    @lark.v_args(inline=True)
    def and_expr(self, left, right):
        return self._binary(And, left, right)

    @lark.v_args(inline=True)
    def or_expr(self, left, right):
        return self._binary(Or, left, right)

    # --- verify_policy ---

    @lark.v_args(inline=True)
    def class_stmt(self, label, error):
        return "class", (str(label), error is not None, self._pos(label))

    @lark.v_args(inline=True)
    def guard_stmt(self, key, value):
        return "guard", (str(key), str(value), self._pos(key))

    @lark.v_args(inline=True)
    def case_stmt(self, expr, target):
        if expr is None:
            return None
        return "case", (expr[0], str(target), self._pos(target), expr[1])

    @lark.v_args(inline=True)
    def verify_default_stmt(self, label):
        return "default", self._named(label)

    @lark.v_args(inline=True)
    def verify_policy(self, name, *statements):
        decl = _VerifyDecl(str(name), self._pos(name))
        buckets = {"class": decl.classes, "guard": decl.guards, "case": decl.cases}
        for key, value in filter(None, statements):
            if key == "default":
                decl.default = value
            else:
                buckets[key].append(value)
        self.decls.verify.append(decl)

    # --- decide_policy ---

    @lark.v_args(inline=True)
    def guard_ctx(self, _, key, value):
        return Guard("ctx_equals", str(key), str(value))

    def guard_null(self, _):
        return Guard("measurement_null")

    def guard_present(self, _):
        return Guard("measurement_present")

    @lark.v_args(inline=True)
    def decide_lattice_stmt(self, name):
        return "lattice", self._named(name)

    @lark.v_args(inline=True)
    def rule_stmt(self, label, guard, level):
        return "rule", (str(label), guard, str(level), self._pos(level))

    @lark.v_args(inline=True)
    def decide_default_stmt(self, label, level):
        return "default", (str(label), str(level), self._pos(level))

    @lark.v_args(inline=True)
    def decide_policy(self, name, *statements):
        decl = _DecideDecl(str(name), self._pos(name))
        for key, value in statements:
            if key == "lattice":
                decl.lattice = value
            elif key == "rule":
                decl.rules.append(value)
            else:
                decl.defaults.append(value)
        self.decls.decide.append(decl)

    # --- rho ---

    @lark.v_args(inline=True, meta=True)
    def rho_attest(self, meta, pattern, mechanisms):
        self.decls.rho_a.append((pattern, mechanisms, self._pos(meta)))

    @lark.v_args(inline=True, meta=True)
    def rho_verify(self, meta, source, targets):
        self.decls.rho_u.append((self._named(source), targets, self._pos(meta)))

    @lark.v_args(inline=True, meta=True)
    def rho_decide(self, meta, source, targets):
        self.decls.rho_d.append((self._named(source), targets, self._pos(meta)))

    def rho(self, _):
        return None

    # --- sigma ---

    @lark.v_args(inline=True)
    def sigma_class_stmt(self, name):
        return "class", self._named(name)

    @lark.v_args(inline=True)
    def set_stmt(self, slot, value):
        return "edit", (Edit("set", str(slot), str(value)), self._pos(slot))

    @lark.v_args(inline=True)
    def clear_stmt(self, slot):
        return "edit", (Edit("clear", str(slot)), self._pos(slot))

    @lark.v_args(inline=True)
    def phase_stmt(self, value):
        return "edit", (Edit("phase", value=str(value)), self._pos(value))

    @lark.v_args(inline=True)
    def increment_stmt(self, counter):
        return "edit", (Edit("increment", str(counter)), self._pos(counter))

    @lark.v_args(inline=True)
    def sigma(self, name, *statements):
        decl = _SigmaDecl(str(name), self._pos(name))
        for key, value in statements:
            if key == "class":
                decl.sigma_class = value
            else:
                decl.edits.append(value)
        self.decls.sigmas.append(decl)

    # --- scenario: шаг помечается позицией своего ключевого слова ---

    @lark.v_args(inline=True, meta=True)
    def step_sigma(self, meta, name):
        return ApplySigma(str(name)), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_attest(self, meta, point):
        return AttestStep(point[0] if point else None), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_assert_level(self, meta, op, level):
        return AssertLevel(str(op), str(level)), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_assert_transition(self, meta, first, *rest):
        terms = (str(first),) + tuple(str(t) for t in rest[1::2])
        return AssertTransitionPolicy(terms, tuple(str(op) for op in rest[0::2])), self._pos(meta)

    @lark.v_args(meta=True)
    def step_power_cycle(self, meta, _):
        return PowerCycle(), self._pos(meta)

    @lark.v_args(meta=True)
    def step_restart(self, meta, _):
        return Restart(), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_tamper(self, meta, slot, value):
        return Tamper(str(slot), str(value)), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_tamper_clear(self, meta, slot):
        return Tamper(str(slot), None), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_assert_meet(self, meta, a, b, expected):
        return AssertMeet(str(a), str(b), str(expected)), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_assert_atom(self, meta, atom, value):
        if atom is None:
            return None
        return AssertAtom(atom[0], value), self._pos(meta)

    @lark.v_args(inline=True, meta=True)
    def step_advance(self, meta, ticks):
        if not ticks.isdigit():
            self._report(self._pos(ticks), "ожидается неотрицательное целое")
            return None
        return Advance(int(ticks)), self._pos(meta)

    @lark.v_args(inline=True)
    def scenario(self, name, target, *steps):
        if target is None:
            self._report(self._pos(name), f"сценарий '{name}' без 'on <элемент>'")
        decl = _ScenarioDecl(str(name), self._pos(name),
                             self._named(target) if target is not None else None)
        decl.steps.extend(filter(None, steps))
        self.decls.scenarios.append(decl)

    # --- composition ---

    @lark.v_args(inline=True)
    def root_stmt(self, element):
        return "root", self._named(element)

    @lark.v_args(inline=True)
    def mediate_stmt(self, element, level, rationale):
        return "mediate", (str(element), str(level), str(rationale or ""), self._pos(element))

    @lark.v_args(inline=True)
    def composition(self, name, *statements):
        decl = _CompositionDecl(str(name), self._pos(name))
        for key, value in statements:
            if key == "root":
                decl.root = value
            else:
                decl.mediations.append(value)
        if decl.root is None:
            self._report(decl.pos, f"композиция '{decl.name}' без root")
        self.decls.compositions.append(decl)


def read_declarations(doc: SourceDocument, decls: _Declarations,
                      diagnostics: List[ParseDiagnostic]) -> None:
    """Синтаксический разбор одного документа; первая синтаксическая ошибка останавливает документ"""
    text = strip_header(doc, diagnostics)
    try:
        tree = _parser().parse(text)
    except lark.exceptions.UnexpectedInput as error:
        diagnostics.append(_syntax_diagnostic(error, doc.origin))
        return
    _DeclarationBuilder(doc.origin, decls, diagnostics).transform(tree)


# === МОДЕЛЬ ===

@dataclass
class MechanismSpec:
    """Объявление механизма: вид, регистры и слот ключа"""
    id: str
    kind: str
    registers: Mapping[str, str] = field(default_factory=dict)
    key_slot: str = "ak"


@dataclass
class ContextSpec:
    """Исходное описание Ξ; значения эталонов - значения слотов, не дайджесты"""
    expectations: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    key_registry: Mapping[str, str] = field(default_factory=dict)
    known_elements: FrozenSet[str] = frozenset()
    metadata: Mapping[str, str] = field(default_factory=dict)
    seed: str = "trust"

    def is_empty(self) -> bool:
        return not (self.expectations or self.key_registry or self.known_elements
                    or self.metadata) and self.seed == "trust"


@dataclass
class TrustModel:
    """Разобранная модель: решётки, мир, Ξ, политики, ρ, σ, сценарии, композиции"""
    lattices: Dict[str, DecisionLattice] = field(default_factory=dict)
    mechanisms: Dict[str, MechanismSpec] = field(default_factory=dict)
    elements: Dict[str, Element] = field(default_factory=dict)
    context: ContextSpec = field(default_factory=ContextSpec)
    verify_policies: Dict[str, VerifyPolicy] = field(default_factory=dict)
    decide_policies: Dict[str, DecidePolicy] = field(default_factory=dict)
    restrictions: RestrictionMaps = field(default_factory=RestrictionMaps)
    default_point: Optional[PipelinePoint] = None
    sigmas: Dict[str, SigmaOp] = field(default_factory=dict)
    scenarios: Dict[str, ScenarioScript] = field(default_factory=dict)
    compositions: Dict[str, CompositionView] = field(default_factory=dict)
    scenario_origins: Dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    @property
    def lattice(self) -> Optional[DecisionLattice]:
        """Решётка решений мира (одна на мир)"""
        used = {p.lattice.name for p in self.decide_policies.values()}
        if used:
            return self.lattices[sorted(used)[0]]
        if len(self.lattices) == 1:
            return next(iter(self.lattices.values()))
        return None

    def world(self) -> World:
        registry = MechanismRegistry()
        for spec in self.mechanisms.values():
            registry.register(spec.id, spec.kind, spec.registers, spec.key_slot)
        return World(dict(self.elements), registry)

    def environment(self) -> Environment:
        """
        Окружение для конвейера; политики проверяются при сборке,
        непрошедшие проверку остаются непомеченными.
        """
        lattice = self.lattice
        if lattice is None:
            raise ValueError("в модели нет решётки решений")
        env = Environment(
            world=self.world(),
            verify_policies=dict(self.verify_policies),
            decide_policies=dict(self.decide_policies),
            restrictions=self.restrictions,
            lattice=lattice,
            default_point=self.default_point,
        )
        failed = [d for d in env.check_policies(bool(self.context.expectations))
                  if d.severity == "error"]
        for diagnostic in failed:
            logger.warning("%s", diagnostic)
        return env

    def new_context(self) -> Context:
        expectations = {e: {r: digest_text(v) for r, v in regs.items()}
                        for e, regs in self.context.expectations.items()}
        ctx = context_from_spec(expectations, self.context.key_registry,
                                self.context.known_elements, self.context.metadata,
                                self.elements.values())
        ctx.seed = self.context.seed
        return ctx


# === РАЗРЕШЕНИЕ ССЫЛОК ===

class _Resolver:
    """Вторая фаза: объявления всех документов → TrustModel"""

    def __init__(self, decls: _Declarations, diagnostics: List[ParseDiagnostic]):
        self.d = decls
        self.diagnostics = diagnostics
        self.model = TrustModel()

    def report(self, pos: Pos, message: str, severity: str = "error") -> None:
        self.diagnostics.append(ParseDiagnostic(pos.origin, pos.line, pos.column, message, severity))

    def _unique(self, items, kind: str) -> List:
        seen: Dict[str, Pos] = {}
        result = []
        for item in items:
            if item.name in seen:
                self.report(item.pos, f"{kind} '{item.name}' уже объявлен(а) в "
                                      f"{seen[item.name].origin}:{seen[item.name].line}")
                continue
            seen[item.name] = item.pos
            result.append(item)
        return result

    def run(self) -> TrustModel:
        self._lattices()
        self._mechanisms()
        self._elements()
        self._context()
        self._verify()
        self._decide()
        self._rho()
        self._point()
        self._sigmas()
        self._scenarios()
        self._compositions()
        return self.model

    def _lattices(self) -> None:
        for decl in self._unique(self.d.lattices, "решётка"):
            names = [n for n, _ in decl.levels]
            for level, pos in decl.levels:
                if names.count(level) > 1:
                    self.report(pos, f"уровень '{level}' объявлен повторно")
            if not names:
                self.report(decl.pos, f"решётка '{decl.name}' без уровней")
                continue
            orders = []
            for low, high, pos in decl.orders:
                missing = [n for n in (low, high) if n not in names]
                if missing:
                    self.report(pos, f"необъявленный уровень '{missing[0]}' в order")
                else:
                    orders.append((low, high))
            bounds = {}
            for attr in ("bottom", "top"):
                bound = getattr(decl, attr)
                if bound is not None and bound[0] not in names:
                    self.report(bound[1], f"необъявленный уровень '{bound[0]}' в {attr}")
                    bound = None
                bounds[attr] = bound[0] if bound else None
            lattice = DecisionLattice(decl.name, names, orders, **bounds)
            if not lattice.is_poset:
                cyclic = next(d for d in lattice.validate() if d.kind == "NotAPoset")
                pos = next(p for low, high, p in decl.orders if {low, high} & set(cyclic.witnesses))
                self.report(pos, f"цикл в порядке решётки '{decl.name}': "
                                 f"{' < '.join(cyclic.witnesses + cyclic.witnesses[:1])}")
                continue
            for attr in ("bottom", "top"):
                if bounds[attr] is None:
                    try:
                        getattr(lattice, attr)
                    except NotALattice:
                        self.report(decl.pos, f"у решётки '{decl.name}' нет единственного {attr}",
                                    "warning")
            self.model.lattices[decl.name] = lattice

    def _mechanisms(self) -> None:
        kinds = MechanismRegistry().kinds
        for decl in self._unique(self.d.mechanisms, "механизм"):
            if decl.kind is None:
                continue
            if decl.kind[0] not in kinds:
                self.report(decl.kind[1], f"неизвестный вид механизма '{decl.kind[0]}'")
                continue
            registers = {}
            for register, slot, pos in decl.registers:
                if register in registers:
                    self.report(pos, f"регистр '{register}' объявлен повторно")
                registers[register] = slot
            if not registers:
                registers = dict(kinds[decl.kind[0]].default_registers)
            self.model.mechanisms[decl.name] = MechanismSpec(decl.name, decl.kind[0], registers,
                                                             decl.key_slot)

    def _elements(self) -> None:
        decls = self._unique(self.d.elements, "элемент")
        ids = {d.name for d in decls}
        for decl in decls:
            ok = True
            for cap, pos in decl.capabilities:
                if cap not in self.model.mechanisms:
                    self.report(pos, f"возможность '{cap}' не является объявленным механизмом")
                    ok = False
            children = [c for c, _ in decl.children]
            for child, pos in decl.children:
                if child not in ids:
                    self.report(pos, f"необъявленный дочерний элемент '{child}'")
                    ok = False
                elif child == decl.name:
                    self.report(pos, f"элемент '{child}' не может быть собственным потомком")
                    ok = False
                elif children.count(child) > 1:
                    self.report(pos, f"дочерний элемент '{child}' повторяется")
                    ok = False
            if not ok:
                continue
            self.model.elements[decl.name] = Element(
                id=decl.name,
                attestable=decl.attestable,
                capabilities=frozenset(c for c, _ in decl.capabilities),
                state={s: v for s, v, _ in decl.state},
                children=tuple(dict.fromkeys(children)),
                persistent=frozenset(s for s, _ in decl.persistent),
                survives_restart=frozenset(s for s, _ in decl.survives),
            )

    def _element_ref(self, name: str, pos: Pos) -> bool:
        if name not in self.model.elements:
            self.report(pos, f"необъявленный элемент '{name}'")
            return False
        return True

    def _context(self) -> None:
        c = self.d.context
        expectations: Dict[str, Dict[str, str]] = {}
        for element, register, value, pos in c.expects:
            if self._element_ref(element, pos):
                expectations.setdefault(element, {})[register] = value
        keys = {}
        for ref, element, pos in c.keys:
            if self._element_ref(element, pos):
                if ref in keys and keys[ref] != element:
                    self.report(pos, f"ключ '{ref}' уже принадлежит '{keys[ref]}'")
                keys[ref] = element
        known = {e for e, pos in c.known if self._element_ref(e, pos)}
        metadata = {}
        for key, value, pos in c.meta:
            if key in DERIVED_CONTEXT_KEYS:
                self.report(pos, f"ключ '{key}' вычисляется и не задаётся в meta")
                continue
            metadata[key] = value
        self.model.context = ContextSpec(expectations, keys, frozenset(known), metadata,
                                         c.seed[0] if c.seed else "trust")

    def _verify(self) -> None:
        for decl in self._unique(self.d.verify, "политика verify"):
            labels = [label for label, _, _ in decl.classes]
            ok = True
            for label, _, pos in decl.classes:
                if labels.count(label) > 1:
                    self.report(pos, f"класс '{label}' объявлен повторно")
                    ok = False
            guards = {}
            for key, value, pos in decl.guards:
                if key in guards:
                    self.report(pos, f"охрана '{key}' объявлена повторно")
                    ok = False
                guards[key] = value
            guard_keys = set(guards) | set(DERIVED_CONTEXT_KEYS)
            cases = []
            for expr, target, pos, refs in decl.cases:
                if target not in labels:
                    self.report(pos, f"необъявленный класс '{target}'")
                    ok = False
                for atom, atom_pos in refs:
                    if atom.key not in guard_keys:
                        self.report(atom_pos, f"ctx-атом ссылается на необъявленную охрану '{atom.key}'")
                        ok = False
                cases.append(VerifyCase(expr, target))
            default = None
            if decl.default is not None:
                if decl.default[0] not in labels:
                    self.report(decl.default[1], f"необъявленный класс по умолчанию '{decl.default[0]}'")
                    ok = False
                default = decl.default[0]
            if not ok:
                continue
            classes = tuple(sorted({ResultClass(l, e) for l, e, _ in decl.classes},
                                   key=lambda rc: rc.label))
            self.model.verify_policies[decl.name] = VerifyPolicy(
                decl.name, classes, tuple(cases), default,
                tuple(sorted(ctx_guard(k, v) for k, v in guards.items())),
            )

    def _decide(self) -> None:
        for decl in self._unique(self.d.decide, "политика decide"):
            if decl.lattice is not None:
                lattice = self.model.lattices.get(decl.lattice[0])
                if lattice is None:
                    self.report(decl.lattice[1], f"необъявленная решётка '{decl.lattice[0]}'")
                    continue
            elif len(self.model.lattices) == 1:
                lattice = next(iter(self.model.lattices.values()))
            else:
                self.report(decl.pos, f"политика '{decl.name}': укажите lattice")
                continue
            ok = True
            rules = []
            for label, guard, level, pos in decl.rules:
                if level not in lattice:
                    self.report(pos, f"уровень '{level}' не принадлежит решётке '{lattice.name}'")
                    ok = False
                    continue
                rules.append(DecideRule(label, guard, lattice.level(level)))
            defaults = {}
            for label, level, pos in decl.defaults:
                if level not in lattice:
                    self.report(pos, f"уровень '{level}' не принадлежит решётке '{lattice.name}'")
                    ok = False
                    continue
                defaults[label] = lattice.level(level)
            if ok:
                self.model.decide_policies[decl.name] = DecidePolicy(
                    decl.name, lattice, tuple(rules), tuple(sorted(defaults.items())))
        used = {p.lattice.name for p in self.model.decide_policies.values()}
        if len(used) > 1:
            first = self.d.decide[0].pos
            self.report(first, f"политики decide ссылаются на разные решётки: {sorted(used)}")

    def _rho(self) -> None:
        mechanisms, verify, decide = (self.model.mechanisms, self.model.verify_policies,
                                      self.model.decide_policies)

        def check(names: Iterable[Named], registry, kind: str) -> bool:
            ok = True
            for name, pos in names:
                if name not in registry:
                    self.report(pos, f"необъявленный {kind} '{name}'")
                    ok = False
            return ok

        rho_a: Dict[FrozenSet[str], set] = {}
        for pattern, targets, _ in self.d.rho_a:
            if check(targets, mechanisms, "механизм"):
                rho_a.setdefault(frozenset(p for p, _ in pattern), set()).update(t for t, _ in targets)
        rho_u: Dict[str, set] = {}
        for source, targets, _ in self.d.rho_u:
            if check([source], mechanisms, "механизм") and check(targets, verify, "verify"):
                rho_u.setdefault(source[0], set()).update(t for t, _ in targets)
        rho_d: Dict[str, set] = {}
        for source, targets, _ in self.d.rho_d:
            if check([source], verify, "verify") and check(targets, decide, "decide"):
                rho_d.setdefault(source[0], set()).update(t for t, _ in targets)
        self.model.restrictions = RestrictionMaps(
            rho_a=tuple(sorted(((p, frozenset(m)) for p, m in rho_a.items()),
                               key=lambda item: (sorted(item[0]), sorted(item[1])))),
            rho_u={k: frozenset(v) for k, v in rho_u.items()},
            rho_d={k: frozenset(v) for k, v in rho_d.items()},
        )

    def _point_ok(self, point: PipelinePoint, pos: Pos) -> bool:
        for name, registry, kind in ((point.mechanism, self.model.mechanisms, "механизм"),
                                     (point.verify_policy, self.model.verify_policies, "verify"),
                                     (point.decide_policy, self.model.decide_policies, "decide")):
            if name not in registry:
                self.report(pos, f"точка {point}: необъявленный {kind} '{name}'")
                return False
        return True

    def _point(self) -> None:
        points = {p for p, _ in self.d.points}
        if len(points) > 1:
            self.report(self.d.points[1][1], "point default объявлена с разными значениями")
        for point, pos in self.d.points[:1]:
            if self._point_ok(point, pos):
                self.model.default_point = point

    def _declared_slots(self) -> set:
        slots = set()
        for element in self.model.elements.values():
            slots |= set(element.state) | element.persistent | element.survives_restart
        for spec in self.model.mechanisms.values():
            slots |= set(spec.registers.values()) | {spec.key_slot}
        return slots

    def _sigmas(self) -> None:
        slots = self._declared_slots()
        classes = {c.value: c for c in SigmaClass}
        for decl in self._unique(self.d.sigmas, "операция σ"):
            if decl.name in BUILTIN_SIGMAS:
                self.report(decl.pos, f"операция '{decl.name}' встроенная и не переопределяется")
                continue
            ok = True
            sigma_class = SigmaClass.UNCLASSIFIED
            if decl.sigma_class is not None:
                if decl.sigma_class[0] not in classes:
                    self.report(decl.sigma_class[1], f"неизвестный класс операции '{decl.sigma_class[0]}'")
                    ok = False
                else:
                    sigma_class = classes[decl.sigma_class[0]]
            for edit, pos in decl.edits:
                if edit.kind in ("set", "clear") and edit.slot not in slots:
                    self.report(pos, f"необъявленный слот '{edit.slot}'")
                    ok = False
                if edit.kind == "increment" and edit.slot not in COUNTERS:
                    self.report(pos, f"неизвестный счётчик '{edit.slot}'")
                    ok = False
            if ok:
                self.model.sigmas[decl.name] = SigmaOp(decl.name, sigma_class,
                                                       tuple(e for e, _ in decl.edits))

    def _scenarios(self) -> None:
        lattice = self.model.lattice
        phases = set(BUILTIN_PHASES)
        for op in self.model.sigmas.values():
            phases |= {e.value for e in op.edits if e.kind == "phase"}
        sigmas = set(self.model.sigmas) | set(BUILTIN_SIGMAS)
        slots = self._declared_slots()

        def level_ok(name: str, pos: Pos) -> bool:
            if lattice is None or name not in lattice:
                self.report(pos, f"неизвестный уровень '{name}'")
                return False
            return True

        for decl in self._unique(self.d.scenarios, "сценарий"):
            if decl.element is None or not self._element_ref(*decl.element):
                continue
            ok = True
            for step, pos in decl.steps:
                if isinstance(step, ApplySigma) and step.name not in sigmas:
                    self.report(pos, f"необъявленная операция '{step.name}'")
                    ok = False
                elif isinstance(step, AttestStep) and step.point is not None:
                    ok &= self._point_ok(step.point, pos)
                elif isinstance(step, AssertLevel):
                    ok &= level_ok(step.level, pos)
                elif isinstance(step, AssertMeet):
                    ok &= all([level_ok(step.a, pos), level_ok(step.b, pos), level_ok(step.expected, pos)])
                elif isinstance(step, AssertTransitionPolicy):
                    for term in step.terms:
                        if term not in phases and (lattice is None or term not in lattice):
                            self.report(pos, f"'{term}' не уровень и не фаза")
                            ok = False
                elif isinstance(step, Tamper) and step.slot not in slots:
                    self.report(pos, f"необъявленный слот '{step.slot}'")
                    ok = False
            if ok:
                self.model.scenarios[decl.name] = ScenarioScript(
                    decl.name, decl.element[0], tuple(s for s, _ in decl.steps))
                self.model.scenario_origins[decl.name] = decl.pos.origin

    def _compositions(self) -> None:
        lattice = self.model.lattice
        for decl in self._unique(self.d.compositions, "композиция"):
            if decl.root is None or not self._element_ref(*decl.root):
                continue
            ok = True
            mediation = {}
            for element, level, rationale, pos in decl.mediations:
                if not self._element_ref(element, pos):
                    ok = False
                elif lattice is None or level not in lattice:
                    self.report(pos, f"неизвестный уровень '{level}'")
                    ok = False
                else:
                    mediation[element] = MediationRule(lattice.level(level), rationale)
            if ok:
                self.model.compositions[decl.name] = CompositionView(decl.root[0], mediation)


# === ПУБЛИЧНЫЙ ИНТЕРФЕЙС ===

def parse_documents(docs: Sequence[SourceDocument]) -> Tuple[Optional[TrustModel], List[ParseDiagnostic]]:
    """
    Разбирает и объединяет несколько документов.

    Returns:
        (модель, диагностика); при любой ошибке модель None
    """
    diagnostics: List[ParseDiagnostic] = []
    decls = _Declarations()
    for doc in docs:
        read_declarations(doc, decls, diagnostics)
    model = _Resolver(decls, diagnostics).run()
    diagnostics.sort(key=lambda d: (d.origin, d.line, d.column))
    if any(d.severity == "error" for d in diagnostics):
        return None, diagnostics
    return model, diagnostics


def parse(doc: SourceDocument) -> Tuple[Optional[TrustModel], List[ParseDiagnostic]]:
    """Разбирает один документ"""
    return parse_documents([doc])


def _join(names: Iterable[str]) -> str:
    return ", ".join(sorted(names))


def render(model: TrustModel) -> str:
    """
    Каноническая запись модели.

    Уровни, элементы, слоты и записи ρ сортируются; порядок случаев verify,
    правил decide, правок σ и шагов сценариев сохраняется.
    """
    out: List[str] = [HEADER]

    def section(header: str, body: List[str]) -> None:
        out.append("")
        out.append(header + " {")
        out.extend("  " + line for line in body)
        out.append("}")

    for name in sorted(model.lattices):
        lattice = model.lattices[name]
        body = [f"level {level};" for level in sorted(lattice.level_names)]
        body += [f"order {low} < {high};" for low, high in lattice.covering_pairs()]
        canonical = lattice.canonical()
        if canonical["bottom"] is not None:
            body.append(f"bottom {canonical['bottom']};")
        if canonical["top"] is not None:
            body.append(f"top {canonical['top']};")
        section(f"lattice {name}", body)

    for name in sorted(model.mechanisms):
        spec = model.mechanisms[name]
        body = [f"kind {spec.kind};"]
        body += [f"register {r} = {s};" for r, s in sorted(spec.registers.items())]
        body.append(f"key_slot {spec.key_slot};")
        section(f"mechanism {name}", body)

    for name in sorted(model.elements):
        element = model.elements[name]
        body = [f"attestable {'true' if element.attestable else 'false'};"]
        if element.capabilities:
            body.append(f"capabilities {_join(element.capabilities)};")
        body += [f"state {s} = {quote(v)};" for s, v in sorted(element.state.items())]
        if element.persistent:
            body.append(f"persistent {_join(element.persistent)};")
        if element.survives_restart:
            body.append(f"survives_restart {_join(element.survives_restart)};")
        if element.children:
            body.append(f"children {', '.join(element.children)};")
        section(f"element {name}", body)

    ctx = model.context
    if not ctx.is_empty():
        body = []
        if ctx.seed != "trust":
            body.append(f"seed {quote(ctx.seed)};")
        for element in sorted(ctx.expectations):
            body += [f"expect {element} {r} = {quote(v)};"
                     for r, v in sorted(ctx.expectations[element].items())]
        body += [f"key {ref} = {element};" for ref, element in sorted(ctx.key_registry.items())]
        if ctx.known_elements:
            body.append(f"known {_join(ctx.known_elements)};")
        body += [f"meta {k} = {quote(v)};" for k, v in sorted(ctx.metadata.items())]
        section("context", body)

    for name in sorted(model.verify_policies):
        policy = model.verify_policies[name]
        body = [f"class {c.label}{' error' if c.is_error else ''};" for c in policy.classes]
        body += [f"guard {g.key} = {quote(g.expected)};" for g in policy.context_guards]
        body += [f"case {render_expr(case.condition)} -> {case.target};" for case in policy.cases]
        if policy.default is not None:
            body.append(f"default {policy.default};")
        section(f"verify_policy {name}", body)

    for name in sorted(model.decide_policies):
        policy = model.decide_policies[name]
        body = [f"lattice {policy.lattice.name};"]
        for rule in policy.rules:
            body.append(f"rule {rule};")
        body += [f"default {label} -> {level.name};" for label, level in policy.defaults]
        section(f"decide_policy {name}", body)

    rho = model.restrictions
    if rho.rho_a or rho.rho_u or rho.rho_d:
        body = [f"attest {_join(p)} => {_join(m)};" for p, m in rho.rho_a]
        body += [f"verify {m} => {_join(v)};" for m, v in sorted(rho.rho_u.items())]
        body += [f"decide {v} => {_join(d)};" for v, d in sorted(rho.rho_d.items())]
        section("rho", body)

    if model.default_point is not None:
        out.append("")
        out.append(f"point default {model.default_point};")

    for name in sorted(model.sigmas):
        op = model.sigmas[name]
        body = [f"class {op.sigma_class.value};"] + [f"{edit};" for edit in op.edits]
        section(f"sigma {name}", body)

    for name in sorted(model.scenarios):
        script = model.scenarios[name]
        section(f"scenario {name} on {script.element}", [f"{step};" for step in script.steps])

    for name in sorted(model.compositions):
        view = model.compositions[name]
        body = [f"root {view.root};"]
        for element, rule in sorted(view.mediation.items()):
            rationale = f" {quote(rule.rationale)}" if rule.rationale else ""
            body.append(f"mediate {element} floor {rule.floor.name}{rationale};")
        section(f"composition {name}", body)

    return "\n".join(out) + "\n"
