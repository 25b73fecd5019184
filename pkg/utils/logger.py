"""
Настройка логирования и журнал запусков.
"""
import logging
from datetime import datetime

from config import LOG_FILE_PATH, LOG_LEVEL


def setup_logging(level: str | None = None) -> None:
    """
    Настроить корневой логгер.

    Args:
        level: уровень логирования (по умолчанию из FEATFORGE_LOG_LEVEL)
    """
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
    )
    # GitPython слишком болтлив на DEBUG
    logging.getLogger('git').setLevel(logging.WARNING)


def log_run_action(action: str, project: str | None = None) -> None:
    """
    Записать выполненное действие в журнал запусков.

    Args:
        action: описание действия
        project: имя проекта (если действие относится к проекту)
    """
    try:
        timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
        scope = f"Project: {project} - " if project else ""
        log_entry = f"[{timestamp}] {scope}Action: {action}\n"

        with open(LOG_FILE_PATH, 'a', encoding='utf-8') as log_file:
            log_file.write(log_entry)
    except Exception as e:
        logging.getLogger(__name__).warning(f"Ошибка при записи в журнал запусков: {e}")
