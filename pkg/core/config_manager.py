"""
Менеджер конфигурации: адреса агента и верификатора, формат вывода,
строгость проверки решёток, журнал аудита и модели по умолчанию.
"""

import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .logger_module import init_logging

logger = init_logging("config")

ENV_CONFIG_PATH = "TRUST_CONFIG"
ENV_ENDPOINTS = {
    "agent": "TRUST_AGENT_ENDPOINT",
    "verifier": "TRUST_VERIFIER_ENDPOINT",
}


class ConfigManager:
    """Управление глобальной конфигурацией движка"""

    DEFAULT_CONFIG = {
        "endpoints": {
            "agent": "127.0.0.1:7401",
            "verifier": "127.0.0.1:7402"
        },
        "output": {
            "format": "text"
        },
        "lattice": {
            "allow_nonheyting": False
        },
        "audit": {
            "enabled": False,
            "dir": "logs"
        },
        "model_files": []
    }

    def __init__(self, config_path: Optional[str] = None, persist_defaults: bool = False):
        if config_path is None:
            config_path = os.environ.get(ENV_CONFIG_PATH, "trust_config.json")
        self.config_path = Path(config_path)
        self.persist_defaults = persist_defaults
        self.config = self._load_or_create_config()

    def _load_or_create_config(self) -> dict:
        """Загружает конфигурацию поверх значений по умолчанию"""
        config = copy.deepcopy(self.DEFAULT_CONFIG)
        if not self.config_path.exists():
            if self.persist_defaults:
                self._save_config(config)
                logger.info("Создан файл конфигурации: %s", self.config_path)
            return config

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("Ошибка загрузки конфигурации %s: %s", self.config_path, e)
            return config

        for section, value in loaded.items():
            if isinstance(value, dict) and isinstance(config.get(section), dict):
                config[section].update(value)
            else:
                config[section] = value
        return config

    def _save_config(self, config: dict = None) -> bool:
        """Сохраняет конфигурацию в файл"""
        if config is None:
            config = self.config

        try:
            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(config, f, indent=2, ensure_ascii=False)
        except OSError as e:
            logger.warning("Ошибка сохранения конфигурации: %s", e)
            return False
        return True

    def save(self) -> bool:
        """Сохраняет текущую конфигурацию; False, если файл не записан"""
        return self._save_config()

    # === АДРЕСА СЕРВИСОВ ===

    def get_endpoint(self, role: str) -> Tuple[str, int]:
        """
        Возвращает (host, port) агента или верификатора.

        Переменная окружения TRUST_AGENT_ENDPOINT / TRUST_VERIFIER_ENDPOINT
        имеет приоритет над файлом.
        """
        if role not in ENV_ENDPOINTS:
            raise KeyError(f"Роль '{role}' не найдена. Доступные: {list(ENV_ENDPOINTS)}")
        raw = os.environ.get(ENV_ENDPOINTS[role]) or self.config["endpoints"][role]
        return parse_endpoint(raw)

    def set_endpoint(self, role: str, endpoint: str):
        """Устанавливает адрес сервиса в формате host:port"""
        if role not in ENV_ENDPOINTS:
            raise KeyError(f"Роль '{role}' не найдена. Доступные: {list(ENV_ENDPOINTS)}")
        parse_endpoint(endpoint)
        self.config["endpoints"][role] = endpoint

    # === ВЫВОД И ПРОВЕРКИ ===

    def get_output_format(self) -> str:
        """Возвращает формат отчётов (text | structured)"""
        return self.config["output"].get("format", "text")

    def set_output_format(self, fmt: str):
        """Устанавливает формат отчётов"""
        if fmt not in ("text", "structured"):
            raise ValueError(f"Неизвестный формат '{fmt}'")
        self.config["output"]["format"] = fmt

    def allow_nonheyting(self) -> bool:
        """Понижать ли нарушения гейтинговости решётки до предупреждений"""
        return bool(self.config["lattice"].get("allow_nonheyting", False))

    def set_allow_nonheyting(self, value: bool):
        self.config["lattice"]["allow_nonheyting"] = bool(value)

    def get_audit_settings(self) -> Dict[str, Any]:
        """Возвращает настройки журнала аудита"""
        return dict(self.config["audit"])

    def get_model_files(self) -> List[str]:
        """Возвращает документы модели, подключаемые по умолчанию"""
        return list(self.config.get("model_files", []))


def parse_endpoint(raw: str) -> Tuple[str, int]:
    """Разбирает строку host:port"""
    host, sep, port = raw.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"Некорректный адрес '{raw}', ожидается host:port")
    return host, int(port)
