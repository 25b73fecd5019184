"""
Вспомогательные функции.
Содержит общую логику, используемую в разных модулях: атомарная запись,
пул исполнителей, форматирование.
"""
import asyncio
import csv
import io
import logging
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')

_UNSAFE_CHARS = re.compile(r'[^A-Za-z0-9._+=-]+')


def atomic_write_text(path: str | Path, text: str) -> None:
    """
    Записать текст в файл атомарно: временный файл, затем замена.

    Args:
        path: путь к итоговому файлу
        text: содержимое (пишется в UTF-8, переводы строк LF)
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = None
    try:
        with tempfile.NamedTemporaryFile(
            mode='w',
            encoding='utf-8',
            newline='\n',
            dir=target.parent,
            delete=False,
            suffix='.tmp'
        ) as tmp_file:
            tmp_path = Path(tmp_file.name)
            tmp_file.write(text)
        tmp_path.replace(target)
    except Exception as e:
        logger.error(f"Ошибка при записи файла {target}: {e}")
        if tmp_path:
            try:
                tmp_path.unlink()
            except OSError:
                pass
        raise


def atomic_write_lines(path: str | Path, lines: Iterable[str]) -> None:
    """Записать строки (без завершающих \\n) атомарно, по одной на строку файла."""
    atomic_write_text(path, ''.join(f"{line}\n" for line in lines))


async def _gather_in_pool(jobs: int, tasks: list[Callable[[], T]]) -> list[T]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        futures = [loop.run_in_executor(executor, task) for task in tasks]
        return list(await asyncio.gather(*futures))


def run_in_pool(jobs: int, tasks: list[Callable[[], T]]) -> list[T]:
    """
    Выполнить независимые задачи в ограниченном пуле потоков.

    Результаты возвращаются в порядке задач, а не в порядке завершения,
    поэтому итог не зависит от числа потоков.

    Args:
        jobs: размер пула
        tasks: вызываемые объекты без аргументов

    Returns:
        Список результатов
    """
    if not tasks:
        return []
    if jobs <= 1 or len(tasks) == 1:
        return [task() for task in tasks]
    return asyncio.run(_gather_in_pool(jobs, tasks))


def safe_filename(key: str) -> str:
    """Превратить ключ ячейки в имя файла."""
    return _UNSAFE_CHARS.sub('_', key).strip('_') or 'cell'


def format_float(value: float | None) -> str:
    """Форматировать число для CSV: 17 значащих цифр, пустая строка для None."""
    if value is None:
        return ''
    return f"{value:.17g}"


def format_ratio(train: int, test: int) -> str:
    """
    Форматировать соотношение обучающей и тестовой выборок.

    Args:
        train: количество релизов в обучающей выборке
        test: количество релизов в тестовой выборке

    Returns:
        Строка вида "70:30"
    """
    total = train + test
    if total == 0:
        return "0:0"
    train_pct = round(100 * train / total)
    return f"{train_pct}:{100 - train_pct}"


def render_csv(rows: Iterable[Iterable[str]]) -> str:
    """Сформировать CSV-текст (UTF-8, переводы строк LF)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerows(rows)
    return buffer.getvalue()


async def run_blocking(func: Callable[..., T], *args) -> T:
    """Выполнить блокирующую функцию в исполнителе цикла событий."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(None, func, *args)


def report_error(action: str, error: Exception) -> int:
    """
    Сообщить об ошибке подкоманды пользователю.

    Args:
        action: имя подкоманды
        error: исключение (FeatforgeError несёт код выхода)

    Returns:
        Код выхода: 2 для ошибок использования, 1 для остальных
    """
    exit_code = getattr(error, 'exit_code', 1)
    logger.error(f"Команда {action} завершилась с ошибкой: {error}")
    print(f"Ошибка ({action}): {error}", file=sys.stderr)
    return exit_code
