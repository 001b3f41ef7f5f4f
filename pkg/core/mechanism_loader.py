"""
Динамический загрузчик механизмов аттестации.

Автоматически обнаруживает классы механизмов в папке mechanisms/,
позволяя добавлять новые механизмы без изменения основного кода.
"""

import importlib
import inspect
import os
import sys
from typing import Dict, List, Mapping, Optional, Type

from .errors import UnknownMechanism
from .logger_module import init_logging

logger = init_logging("mechanisms")


def discover_mechanisms(mechanisms_dir: str = "mechanisms") -> Dict[str, Type]:
    """
    Обнаруживает все доступные виды механизмов.

    Сканирует папку mechanisms/ и находит все классы, наследующие BaseMechanism.

    Args:
        mechanisms_dir: Путь к папке с механизмами (относительно корня проекта)

    Returns:
        Словарь {kind: Class}

    Example:
        >>> kinds = discover_mechanisms()
        >>> sorted(kinds)
        ['measure_only', 'quote', 'serial_read', 'token_only']
    """
    kinds: Dict[str, Type] = {}

    if not os.path.isabs(mechanisms_dir):
        project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        mechanisms_dir = os.path.join(project_root, mechanisms_dir)

    if not os.path.exists(mechanisms_dir):
        logger.warning("Папка механизмов не найдена: %s", mechanisms_dir)
        return kinds

    if os.path.dirname(mechanisms_dir) not in sys.path:
        sys.path.insert(0, os.path.dirname(mechanisms_dir))

    try:
        base_module = importlib.import_module("mechanisms.base_mechanism")
        BaseMechanism = getattr(base_module, "BaseMechanism")
    except (ImportError, AttributeError) as e:
        logger.error("Не удалось импортировать BaseMechanism: %s", e)
        return kinds

    for filename in sorted(os.listdir(mechanisms_dir)):
        if not filename.endswith('.py') or filename.startswith('_'):
            continue
        module_name = filename[:-3]
        try:
            module = importlib.import_module(f"mechanisms.{module_name}")
        except Exception as e:
            logger.warning("Не удалось загрузить модуль %s: %s", module_name, e)
            continue

        for _, obj in inspect.getmembers(module, inspect.isclass):
            if (issubclass(obj, BaseMechanism)
                    and obj is not BaseMechanism
                    and not inspect.isabstract(obj)
                    and obj.kind):
                kinds[obj.kind] = obj
                logger.info("Обнаружен механизм: %s (%s)", obj.kind, module_name)

    logger.info("Всего видов механизмов: %d", len(kinds))
    return kinds


class MechanismRegistry:
    """
    Реестр механизмов модели: идентификатор → экземпляр.

    Example:
        >>> registry = MechanismRegistry()
        >>> registry.register("quote", "quote")
        >>> registry.get("quote").produces
        ((True, True),)
    """

    _kinds_cache: Optional[Dict[str, Type]] = None

    def __init__(self, mechanisms_dir: str = "mechanisms"):
        self.mechanisms_dir = mechanisms_dir
        self._instances: Dict[str, object] = {}

    @property
    def kinds(self) -> Dict[str, Type]:
        """Виды механизмов (обнаруживаются один раз на процесс)"""
        if MechanismRegistry._kinds_cache is None:
            MechanismRegistry._kinds_cache = discover_mechanisms(self.mechanisms_dir)
        return MechanismRegistry._kinds_cache

    def register(self, mechanism_id: str, kind: str,
                 registers: Optional[Mapping[str, str]] = None,
                 key_slot: str = "ak") -> object:
        """
        Создаёт и регистрирует механизм.

        Raises:
            KeyError: Если вид механизма не обнаружен
        """
        mechanism_class = self.kinds.get(kind)
        if mechanism_class is None:
            raise KeyError(f"Вид механизма '{kind}' не найден. Доступные: {sorted(self.kinds)}")
        instance = mechanism_class(mechanism_id, registers=registers, key_slot=key_slot)
        self._instances[mechanism_id] = instance
        return instance

    def get(self, mechanism_id: str):
        """
        Возвращает механизм по идентификатору.

        Raises:
            UnknownMechanism
        """
        try:
            return self._instances[mechanism_id]
        except KeyError:
            raise UnknownMechanism(mechanism_id) from None

    def ids(self) -> List[str]:
        """Отсортированные идентификаторы зарегистрированных механизмов"""
        return sorted(self._instances)

    def __contains__(self, mechanism_id: str) -> bool:
        return mechanism_id in self._instances

    def __len__(self) -> int:
        return len(self._instances)
