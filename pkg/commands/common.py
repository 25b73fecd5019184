"""
Общая подготовка запуска подкоманд: конфигурация, кэш, выбор проектов.
"""
import argparse
import logging
from typing import Optional

from cache import cache
from config import FeatforgeConfig, ProjectEntry, load_project_config
from services.dataset import LabeledProject, load_labeled
from services.metrics import DEFAULT_REFACTOR_KEYWORDS, MetricSettings
from services.scenarios import ScenarioSettings

logger = logging.getLogger(__name__)


def prepare_run(args: argparse.Namespace) -> FeatforgeConfig:
    """
    Загрузить конфигурацию с учётом флагов и открыть кэш.

    Raises:
        UsageError: конфигурация отсутствует или неверна
    """
    config = load_project_config(args.config, seed=args.seed, jobs=args.jobs)
    cache.open(config.cache_dir)
    logger.debug(f"Запуск: seed={config.seed}, jobs={config.jobs}, кэш={config.cache_dir}")
    return config


def select_projects(config: FeatforgeConfig, names: Optional[list[str]]) -> list[ProjectEntry]:
    """Проекты из флагов --project или все проекты конфигурации."""
    if not names:
        return list(config.projects)
    return [config.project(name) for name in names]


def metric_settings(config: FeatforgeConfig) -> MetricSettings:
    return MetricSettings(
        keywords=tuple(config.keywords) if config.keywords else None,
        refactor_keywords=tuple(config.refactor_keywords) if config.refactor_keywords else DEFAULT_REFACTOR_KEYWORDS,
    )


def scenario_settings(config: FeatforgeConfig) -> ScenarioSettings:
    return ScenarioSettings(
        seed=config.seed,
        jobs=config.jobs,
        split_ratios=config.split_ratios(),
        metrics=metric_settings(config),
        hyperparameters=dict(config.hyperparameters),
    )


def labeled_projects(entries: list[ProjectEntry]) -> list[LabeledProject]:
    """
    Прочитать размеченные проекты из кэша.

    Raises:
        TableIoError: для проекта не выполнены mine/label
    """
    return [load_labeled(entry.name, cache) for entry in entries]
