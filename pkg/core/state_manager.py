"""
Менеджер состояний жизненного цикла элемента.

Централизованное управление состоянием 0 → Live(фаза) → ! для предотвращения
недопустимых операций (например, σ над выключенным элементом).
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

from .evidence import Element
from .logger_module import init_logging

logger = init_logging("state")


@dataclass(frozen=True)
class ZeroState:
    """Начальный объект 0: элемент не включён, состояние только в Ξ"""
    kind: str = "zero"

    def __str__(self) -> str:
        return "zero"


@dataclass(frozen=True)
class TerminalState:
    """Терминальный объект !: элемент выключен"""
    kind: str = "terminal"

    def __str__(self) -> str:
        return "terminal"


@dataclass(frozen=True)
class LiveState:
    """Работающий элемент и текущая фаза (boot, run, shutdown, ...)"""
    element: Element
    phase: str
    kind: str = "live"

    def __str__(self) -> str:
        return f"live:{self.phase}"


LifecycleState = Union[ZeroState, TerminalState, LiveState]
ZERO = ZeroState()
TERMINAL = TerminalState()


class LifecycleStateManager:
    """
    Менеджер состояний жизненного цикла.

    Хранит текущее состояние, проверяет допустимость операций и вызывает
    зарегистрированные callback при переходах.
    """

    def __init__(self, initial: LifecycleState = ZERO) -> None:
        self._current_state: LifecycleState = initial
        self._state_callbacks: Dict[str, List[Callable[[LifecycleState, LifecycleState], None]]] = {}

    def register_state_callback(self, kind: str,
                                callback: Callable[[LifecycleState, LifecycleState], None]) -> None:
        """
        Регистрирует callback для вызова при переходе в состояние вида kind.

        Args:
            kind: 'zero', 'live' или 'terminal'
            callback: Функция (старое состояние, новое состояние)
        """
        self._state_callbacks.setdefault(kind, []).append(callback)

    @property
    def current_state(self) -> LifecycleState:
        return self._current_state

    def transition_to(self, new_state: LifecycleState) -> None:
        """
        Переводит элемент в новое состояние.

        Example:
            >>> manager.transition_to(LiveState(element, "boot"))
        """
        old_state = self._current_state
        if new_state == old_state:
            return
        if str(new_state) != str(old_state):
            logger.info("[StateManager] %s -> %s", old_state, new_state)
        self._current_state = new_state
        for callback in self._state_callbacks.get(new_state.kind, []):
            callback(old_state, new_state)

    def live_element(self) -> Optional[Element]:
        """Элемент текущего состояния (None для 0 и !)"""
        if isinstance(self._current_state, LiveState):
            return self._current_state.element
        return None

    def can_tamper(self) -> bool:
        """Внешнее изменение сохранённого состояния - только при выключенном элементе"""
        return not isinstance(self._current_state, LiveState)
