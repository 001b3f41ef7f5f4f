"""
Исключения движка доверия.

Проверки (validate, check_*_policy, validate_tree, parse) не бросают исключений,
а возвращают диагностику. Исключения ниже используются только там, где операция
не может вернуть осмысленный результат.
"""

from typing import Sequence, Tuple


class TrustError(Exception):
    """Базовое исключение движка."""


class UnknownLevel(TrustError, KeyError):
    """Уровень доверия не принадлежит решётке."""

    def __init__(self, level: str, lattice: str):
        super().__init__(f"уровень '{level}' не принадлежит решётке '{lattice}'")
        self.level = level
        self.lattice = lattice


class UnknownElement(TrustError, KeyError):
    """Элемент не зарегистрирован в мире."""

    def __init__(self, element_id: str):
        super().__init__(f"неизвестный элемент '{element_id}'")
        self.element_id = element_id


class UnknownMechanism(TrustError, KeyError):
    """Механизм аттестации не зарегистрирован."""

    def __init__(self, mechanism_id: str):
        super().__init__(f"неизвестный механизм '{mechanism_id}'")
        self.mechanism_id = mechanism_id


class UnknownPolicy(TrustError, KeyError):
    """Политика verify/decide не найдена в окружении."""

    def __init__(self, name: str, kind: str):
        super().__init__(f"неизвестная {kind}-политика '{name}'")
        self.name = name
        self.kind = kind


class NoImplication(TrustError):
    """Относительное псевдодополнение a → b не существует."""

    def __init__(self, a: str, b: str, maximal: Sequence[str]):
        names = ", ".join(sorted(maximal))
        super().__init__(f"NoImplication({a}, {b}): максимальные элементы {{{names}}} несравнимы")
        self.a = a
        self.b = b
        self.maximal: Tuple[str, ...] = tuple(sorted(maximal))


class NotALattice(TrustError):
    """У пары уровней нет точной нижней или верхней грани."""

    def __init__(self, a: str, b: str, operation: str):
        super().__init__(f"NotALattice: для ({a}, {b}) не существует {operation}")
        self.a = a
        self.b = b
        self.operation = operation


class PolicyUnchecked(TrustError):
    """Политика используется до успешной статической проверки."""

    def __init__(self, name: str):
        super().__init__(f"политика '{name}' не прошла проверку")
        self.name = name


class RestrictionViolation(TrustError):
    """Тройка (механизм, verify, decide) не допускается отображениями ρ."""

    def __init__(self, element_id: str, point: str):
        super().__init__(f"точка {point} не допускается для элемента '{element_id}'")
        self.element_id = element_id
        self.point = point


class InvalidTransition(TrustError):
    """Операция σ неприменима в текущем состоянии жизненного цикла."""

    def __init__(self, operation: str, state: str):
        super().__init__(f"операция '{operation}' недопустима в состоянии '{state}'")
        self.operation = operation
        self.state = state


class CycleDetected(TrustError):
    """Отношение κ содержит цикл."""

    def __init__(self, nodes: Sequence[str]):
        super().__init__(f"цикл в композиции: {' -> '.join(nodes)}")
        self.nodes = tuple(nodes)


class DecisionGap(TrustError):
    """Для класса результата нет ни правила, ни значения по умолчанию."""

    def __init__(self, policy: str, result_class: str):
        super().__init__(f"политика '{policy}' не покрывает класс '{result_class}'")
        self.policy = policy
        self.result_class = result_class


class ModelError(TrustError):
    """Документ DSL содержит ошибки; модель не построена."""

    def __init__(self, diagnostics):
        first = diagnostics[0] if diagnostics else None
        super().__init__(f"ошибок разбора: {len(diagnostics)}" + (f"; первая: {first}" if first else ""))
        self.diagnostics = tuple(diagnostics)
