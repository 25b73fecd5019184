import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from errors import UsageError

load_dotenv()


def _get_env_optional(key: str, default: str = "") -> str:
    """Получение опциональной переменной окружения со значением по умолчанию."""
    return os.getenv(key, default)


def _get_env_int(key: str, default: int) -> int:
    """Получение целочисленной переменной окружения."""
    value = os.getenv(key)
    if not value:
        return default
    try:
        return int(value)
    except ValueError:
        print(f"ОШИБКА: Переменная {key} должна быть целым числом, получено: {value}")
        sys.exit(2)


# Environment
LOG_FILE_PATH = _get_env_optional('FEATFORGE_LOG_FILE', 'featforge.log')
LOG_LEVEL = _get_env_optional('FEATFORGE_LOG_LEVEL', 'INFO')
OUTPUT_DIR = _get_env_optional('FEATFORGE_OUT', 'out')
DEFAULT_JOBS = _get_env_int('FEATFORGE_JOBS', os.cpu_count() or 1)

# Defaults
DEFAULT_SEED = 1
DEFAULT_CACHE_DIR = '.featforge-cache'
DEFAULT_SPLIT_RATIO = 70.0


class ProjectEntry(BaseModel):
    """Описание одного проекта из конфигурации."""

    name: str
    repo: str
    tag_glob: str = '*'
    split_ratio: float = DEFAULT_SPLIT_RATIO

    @field_validator('name')
    @classmethod
    def _name_not_empty(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError('имя проекта не может быть пустым')
        return value

    @field_validator('split_ratio')
    @classmethod
    def _ratio_in_range(cls, value: float) -> float:
        if not 0 < value < 100:
            raise ValueError(f'доля обучающей выборки должна быть в (0, 100), получено: {value}')
        return value


class FeatforgeConfig(BaseModel):
    """Конфигурация запуска: проекты, кэш, seed, ключевые слова."""

    projects: list[ProjectEntry] = Field(min_length=1)
    cache_dir: str = DEFAULT_CACHE_DIR
    seed: int = DEFAULT_SEED
    jobs: Optional[int] = None
    keywords: Optional[list[str]] = None
    refactor_keywords: Optional[list[str]] = None
    output_dir: Optional[str] = None
    hyperparameters: dict[str, dict[str, Any]] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _unique_names(self) -> 'FeatforgeConfig':
        names = [project.name for project in self.projects]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f'имена проектов должны быть уникальны: {", ".join(duplicates)}')
        return self

    def project(self, name: str) -> ProjectEntry:
        for entry in self.projects:
            if entry.name == name:
                return entry
        raise UsageError(f"Проект '{name}' отсутствует в конфигурации")

    def split_ratios(self) -> dict[str, float]:
        return {entry.name: entry.split_ratio for entry in self.projects}


def load_project_config(
    path: str | Path,
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
) -> FeatforgeConfig:
    """
    Загрузить конфигурацию проектов из JSON.

    Приоритет: флаги > переменные окружения > файл > значения по умолчанию.

    Args:
        path: путь к JSON-файлу
        seed: значение флага --seed (если задан)
        jobs: значение флага --jobs (если задан)

    Returns:
        Проверенная конфигурация
    """
    config_path = Path(path)
    try:
        raw = json.loads(config_path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise UsageError(f"Файл конфигурации не найден: {config_path}")
    except json.JSONDecodeError as e:
        raise UsageError(f"Файл конфигурации {config_path} не является корректным JSON: {e}")

    try:
        config = FeatforgeConfig.model_validate(raw)
    except ValidationError as e:
        raise UsageError(f"Неверная конфигурация {config_path}:\n{e}")

    # Относительные пути репозиториев считаются от каталога конфигурации
    base = config_path.resolve().parent
    for entry in config.projects:
        repo_path = Path(entry.repo).expanduser()
        if not repo_path.is_absolute():
            entry.repo = str(base / repo_path)

    cache_override = _get_env_optional('FEATFORGE_CACHE')
    if cache_override:
        config.cache_dir = cache_override
    if seed is not None:
        config.seed = seed
    if jobs is not None:
        config.jobs = jobs
    if config.jobs is None:
        config.jobs = DEFAULT_JOBS
    if config.output_dir is None:
        config.output_dir = OUTPUT_DIR
    return config
