"""
Файловый кэш результатов майнинга.
Для каждого проекта хранит JSONL/JSON-файлы в каталоге <cache>/<project>/.
Все записи атомарные.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, Optional

from errors import TableIoError
from services.repo_miner import CommitRecord, Release
from utils.utils import atomic_write_lines, atomic_write_text, safe_filename

logger = logging.getLogger(__name__)

COMMITS_FILE = 'commits.jsonl'
RELEASES_FILE = 'releases.json'
SNAPSHOTS_FILE = 'snapshots.jsonl'
TRACES_FILE = 'traces.jsonl'
LABELS_FILE = 'labels.json'
DIAGNOSTICS_FILE = 'diagnostics.json'


def _dumps(data) -> str:
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(',', ':'))


def release_fingerprint(releases: Iterable[Release]) -> list[list[str]]:
    """Отпечаток релизов: пары (тег, хэш тегированного коммита)."""
    return [[release.tag, release.end_commit] for release in releases]


class MiningCache:
    """Кэш майнинга в файловой системе."""

    def __init__(self):
        self.root: Optional[Path] = None

    def open(self, root: str | Path) -> None:
        """
        Открыть кэш в каталоге (создаётся при необходимости).

        Args:
            root: корневой каталог кэша
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        logger.info(f"Кэш открыт: {self.root}")

    def close(self) -> None:
        self.root = None

    def _require_open(self) -> Path:
        if self.root is None:
            raise RuntimeError("Кэш не открыт. Вызовите open() перед использованием.")
        return self.root

    def project_dir(self, project: str) -> Path:
        """Каталог проекта в кэше."""
        return self._require_open() / safe_filename(project)

    def _path(self, project: str, name: str) -> Path:
        return self.project_dir(project) / name

    def _read_json(self, path: Path):
        try:
            return json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise TableIoError(f"Файл кэша не найден: {path}. Сначала выполните mine/label.")
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Ошибка при чтении кэша {path}: {e}")
            raise TableIoError(f"Файл кэша повреждён: {path} ({e})")

    def _read_jsonl(self, path: Path) -> list:
        try:
            with open(path, 'r', encoding='utf-8') as cache_file:
                return [json.loads(line) for line in cache_file if line.strip()]
        except FileNotFoundError:
            raise TableIoError(f"Файл кэша не найден: {path}. Сначала выполните mine/label.")
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Ошибка при чтении кэша {path}: {e}")
            raise TableIoError(f"Файл кэша повреждён: {path} ({e})")

    # Майнинг

    def has_mining(self, project: str, releases: list[Release]) -> bool:
        """
        Проверить попадание в кэш майнинга.

        Returns:
            True, если файлы на месте и теги указывают на те же коммиты
        """
        names = (COMMITS_FILE, RELEASES_FILE, SNAPSHOTS_FILE)
        if not all(self._path(project, name).exists() for name in names):
            return False
        try:
            cached = self.read_releases(project)
        except TableIoError:
            return False
        return release_fingerprint(cached) == release_fingerprint(releases)

    def write_mining(
        self,
        project: str,
        releases: list[Release],
        records: list[CommitRecord],
        snapshots: list[dict],
    ) -> None:
        """Записать релизы, коммиты и снимки проекта."""
        atomic_write_lines(self._path(project, COMMITS_FILE), (_dumps(record.to_dict()) for record in records))
        atomic_write_lines(self._path(project, SNAPSHOTS_FILE), (_dumps(snapshot) for snapshot in snapshots))
        # releases.json пишется последним: по нему определяется попадание в кэш
        atomic_write_text(
            self._path(project, RELEASES_FILE),
            _dumps([release.to_dict() for release in releases]) + '\n',
        )
        logger.info(f"Кэш {project}: {len(records)} коммитов, {len(snapshots)} снимков")

    def read_releases(self, project: str) -> list[Release]:
        return [Release.from_dict(item) for item in self._read_json(self._path(project, RELEASES_FILE))]

    def read_commits(self, project: str) -> list[CommitRecord]:
        return [CommitRecord.from_dict(item) for item in self._read_jsonl(self._path(project, COMMITS_FILE))]

    def read_snapshots(self, project: str) -> list[dict]:
        return self._read_jsonl(self._path(project, SNAPSHOTS_FILE))

    def write_diagnostics(self, project: str, diagnostics: dict) -> None:
        atomic_write_text(self._path(project, DIAGNOSTICS_FILE), _dumps(diagnostics) + '\n')

    def read_diagnostics(self, project: str) -> dict:
        return self._read_json(self._path(project, DIAGNOSTICS_FILE))

    # Разметка

    def has_labels(self, project: str) -> bool:
        """Разметка актуальна, если построена по текущему кэшу майнинга."""
        labels_path = self._path(project, LABELS_FILE)
        if not labels_path.exists() or not self._path(project, TRACES_FILE).exists():
            return False
        try:
            labels = self._read_json(labels_path)
            releases = self.read_releases(project)
        except TableIoError:
            return False
        return labels.get('fingerprint') == release_fingerprint(releases)

    def write_labels(self, project: str, traces: list[dict], labels: dict) -> None:
        """
        Записать трассы SZZ и разметку.

        Args:
            project: имя проекта
            traces: BugTrace в виде словарей, по одной на исправляющий коммит
            labels: {introducers, corrective, releases, commits}
        """
        atomic_write_lines(self._path(project, TRACES_FILE), (_dumps(trace) for trace in traces))
        payload = dict(labels)
        payload['fingerprint'] = release_fingerprint(self.read_releases(project))
        atomic_write_text(self._path(project, LABELS_FILE), _dumps(payload) + '\n')

    def read_traces(self, project: str) -> list[dict]:
        return self._read_jsonl(self._path(project, TRACES_FILE))

    def read_labels(self, project: str) -> dict:
        return self._read_json(self._path(project, LABELS_FILE))


# Глобальный экземпляр кэша
cache = MiningCache()
