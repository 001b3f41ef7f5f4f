"""
Логирование движка.

init_logging() выдаёт модульный логгер с единым форматом, AuditLogger ведёт
журнал оценок в JSON-формате, сгруппированный по сессиям и датам.
"""

import json
import logging
import sys
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

_configured = False


def init_logging(name: str, level: int = logging.WARNING) -> logging.Logger:
    """
    Возвращает логгер пространства имён `trust.<name>`.

    Обработчик на корневой логгер `trust` ставится один раз, повторные вызовы
    только создают дочерние логгеры.
    """
    global _configured
    root = logging.getLogger("trust")
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        root.setLevel(level)
        root.propagate = False
        _configured = True
    return root.getChild(name)


def set_verbosity(verbose: bool) -> None:
    """Переключает уровень корневого логгера (флаг --verbose в CLI)."""
    logging.getLogger("trust").setLevel(logging.INFO if verbose else logging.WARNING)


class AuditLogger:
    """Журнал оценок доверия в JSON-формате"""

    def __init__(self, logs_dir: str = "logs", enabled: bool = True):
        self.logs_dir = Path(logs_dir)
        self.enabled = enabled
        if self.enabled:
            self.logs_dir.mkdir(parents=True, exist_ok=True)

        self.session_id = str(uuid.uuid4())
        self.session_start = datetime.now().isoformat()
        self.actions: List[Dict[str, Any]] = []

    def log_action(self, action_type: str, **kwargs):
        """
        Записывает действие в журнал

        Args:
            action_type: Тип действия (evaluate, forensics, scenario, ...)
            **kwargs: Параметры действия (только JSON-совместимые значения)
        """
        action = {
            "timestamp": datetime.now().isoformat(),
            "action": action_type,
            **kwargs
        }
        self.actions.append(action)
        if self.enabled:
            self._save_to_file()

    def _get_log_file_path(self) -> Path:
        """Возвращает путь к файлу журнала за сегодняшний день"""
        today = datetime.now().strftime("%Y-%m-%d")
        return self.logs_dir / f"{today}.json"

    def _save_to_file(self):
        """Сохраняет текущую сессию в файл"""
        log_file = self._get_log_file_path()

        if log_file.exists():
            try:
                with open(log_file, 'r', encoding='utf-8') as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError):
                data = {"sessions": []}
        else:
            data = {"sessions": []}

        for session in data["sessions"]:
            if session.get("session_id") == self.session_id:
                session["actions"] = self.actions
                break
        else:
            data["sessions"].append({
                "session_id": self.session_id,
                "session_start": self.session_start,
                "actions": self.actions
            })

        with open(log_file, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)

    # Предопределенные методы для частых действий

    def log_validation(self, files: List[str], errors: int, warnings: int):
        """Логирует проверку решёток и политик"""
        self.log_action("validate", files=files, errors=errors, warnings=warnings)

    def log_evaluation(self, element: str, point: str, level: str, result_class: str):
        """Логирует прогон конвейера attest → verify → decide"""
        self.log_action("evaluate", element=element, point=point, level=level,
                        result_class=result_class)

    def log_forensics(self, element: str, failed_atoms: List[str], findings: List[str]):
        """Логирует форензик-отчёт"""
        self.log_action("forensics", element=element, failed_atoms=failed_atoms,
                        findings=findings)

    def log_scenario(self, scenario: str, passed: bool, final_level: Optional[str]):
        """Логирует прогон сценария жизненного цикла"""
        self.log_action("scenario", scenario=scenario, passed=passed, final_level=final_level)

    def log_wire_message(self, direction: str, message_type: str, correlation_id: Optional[str]):
        """Логирует сообщение протокола агент/верификатор"""
        self.log_action("wire", direction=direction, message_type=message_type,
                        correlation_id=correlation_id)
