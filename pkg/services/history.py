"""
История проекта из кэша и построение контекстов релизов и коммитов.
Контекст содержит окно коммитов R, накопленную историю C, изменённые файлы F,
затронутые фичи T и отображение фича -> файлы A.
"""
import bisect
import logging
from dataclasses import dataclass, field
from typing import Optional

from cache import MiningCache, cache as default_cache
from services.feature_extract import (
    MODE_DIFF,
    ExtractDiagnostics,
    FeatureRef,
    extract_refs,
    filter_header_macros,
)
from services.repo_miner import CommitRecord, Release, is_source_file

logger = logging.getLogger(__name__)

LEVEL_RELEASE = 'release'
LEVEL_COMMIT = 'commit'
LEVELS = (LEVEL_RELEASE, LEVEL_COMMIT)


@dataclass
class ProjectHistory:
    """Коммиты, релизы и снимки проекта, прочитанные из кэша."""
    name: str
    releases: list[Release]
    records: dict[str, CommitRecord]
    order: list[str]
    refs: dict[str, dict[str, tuple[FeatureRef, ...]]]
    diagnostics: ExtractDiagnostics = field(default_factory=ExtractDiagnostics)
    _snapshots: dict[str, tuple[list[int], list[Optional[str]]]] = field(default_factory=dict)
    _position: dict[str, int] = field(default_factory=dict)
    _created: dict[str, int] = field(default_factory=dict)

    def position(self, commit: str) -> int:
        return self._position[commit]

    def snapshot_at(self, path: str, commit: str) -> Optional[str]:
        """
        Текст файла после коммита.

        Returns:
            Последний известный снимок не позже коммита или None, если файла нет
        """
        entry = self._snapshots.get(path)
        if entry is None:
            return None
        positions, texts = entry
        index = bisect.bisect_right(positions, self._position[commit]) - 1
        if index < 0:
            return None
        return texts[index]

    def created_at(self, path: str) -> Optional[int]:
        """Время первого коммита, изменившего файл."""
        return self._created.get(path)

    def feature_names(self, commit: str) -> set[str]:
        return {ref.name for refs in self.refs.get(commit, {}).values() for ref in refs}


def build_history(
    name: str,
    releases: list[Release],
    records: list[CommitRecord],
    snapshots: list[dict],
) -> ProjectHistory:
    """
    Собрать историю проекта из данных майнинга.

    Args:
        name: имя проекта
        releases: релизы
        records: коммиты всех релизов
        snapshots: снимки {commit, path, text}

    Returns:
        ProjectHistory
    """
    by_hash = {record.hash: record for record in records}
    order = [sha for release in releases for sha in release.commits if sha in by_hash]
    position = {sha: index for index, sha in enumerate(order)}

    diagnostics = ExtractDiagnostics()
    refs: dict[str, dict[str, tuple[FeatureRef, ...]]] = {}
    created: dict[str, int] = {}
    for sha in order:
        record = by_hash[sha]
        per_path = {}
        for change in record.changes:
            created.setdefault(change.path, record.timestamp)
            if not is_source_file(change.path):
                continue
            found = extract_refs(change.diff_text, MODE_DIFF, change.path, diagnostics)
            kept = filter_header_macros(found, diagnostics)
            if kept:
                per_path[change.path] = tuple(kept)
        refs[sha] = per_path

    snapshot_index: dict[str, tuple[list[int], list[Optional[str]]]] = {}
    for snapshot in sorted(
        (s for s in snapshots if s['commit'] in position),
        key=lambda s: position[s['commit']],
    ):
        positions, texts = snapshot_index.setdefault(snapshot['path'], ([], []))
        positions.append(position[snapshot['commit']])
        texts.append(snapshot['text'])

    history = ProjectHistory(
        name=name,
        releases=releases,
        records=by_hash,
        order=order,
        refs=refs,
        diagnostics=diagnostics,
    )
    history._snapshots = snapshot_index
    history._position = position
    history._created = created
    return history


def load_history(project: str, store: Optional[MiningCache] = None) -> ProjectHistory:
    """Прочитать историю проекта из кэша майнинга."""
    store = store or default_cache
    history = build_history(
        project,
        store.read_releases(project),
        store.read_commits(project),
        store.read_snapshots(project),
    )
    logger.info(f"История {project}: {len(history.order)} коммитов, {len(history.releases)} релизов")
    return history


@dataclass(frozen=True)
class ReleaseContext:
    """
    Контекст одного скоупа (релиза или коммита).

    Для релиза окно R - коммиты релиза; для коммита - все коммиты
    от первого до текущего включительно.
    """
    project: str
    level: str
    scope: str
    scope_index: int
    release: Release
    cumulative_commits: tuple[str, ...]
    changed_files: frozenset[str]
    features: frozenset[str]
    files_of: dict[str, frozenset[str]]
    label_commits: tuple[str, ...]
    scope_files: frozenset[str]
    snapshot_commit: str
    end_timestamp: int
    history: ProjectHistory

    @property
    def records(self) -> dict[str, CommitRecord]:
        return self.history.records

    def refs_in(self, commit: str) -> dict[str, tuple[FeatureRef, ...]]:
        return self.history.refs.get(commit, {})

    def snapshot(self, path: str) -> Optional[str]:
        return self.history.snapshot_at(path, self.snapshot_commit)

    def features_in_file(self, path: str) -> set[str]:
        return {feature for feature, files in self.files_of.items() if path in files}


def _map_features(history: ProjectHistory, window: list[str]) -> tuple[set[str], dict[str, set[str]]]:
    changed: set[str] = set()
    files_of: dict[str, set[str]] = {}
    for sha in window:
        changed.update(history.records[sha].paths)
        for path, refs in history.refs.get(sha, {}).items():
            for ref in refs:
                files_of.setdefault(ref.name, set()).add(path)
    return changed, files_of


def release_contexts(history: ProjectHistory) -> list[ReleaseContext]:
    """
    Контексты всех непустых релизов проекта.

    Returns:
        Список ReleaseContext в хронологическом порядке
    """
    contexts = []
    cumulative: list[str] = []
    for release in history.releases:
        window = [sha for sha in release.commits if sha in history.records]
        cumulative.extend(window)
        if not window:
            logger.warning(f"Релиз {release.tag} проекта {history.name} не содержит коммитов, пропущен")
            continue
        changed, files_of = _map_features(history, window)
        last = window[-1]
        contexts.append(ReleaseContext(
            project=history.name,
            level=LEVEL_RELEASE,
            scope=release.tag,
            scope_index=release.index,
            release=release,
            cumulative_commits=tuple(cumulative),
            changed_files=frozenset(changed),
            features=frozenset(files_of),
            files_of={name: frozenset(paths) for name, paths in files_of.items()},
            label_commits=tuple(window),
            scope_files=frozenset(changed),
            snapshot_commit=last,
            end_timestamp=history.records[last].timestamp,
            history=history,
        ))
    return contexts


def commit_contexts(history: ProjectHistory) -> list[ReleaseContext]:
    """
    Контексты для JIT-предсказания: по одному на коммит.

    Метрики коммита n считаются по всем коммитам 1..n, фичи скоупа -
    те, на которые ссылается дифф коммита n.
    """
    contexts = []
    changed: set[str] = set()
    files_of: dict[str, set[str]] = {}
    for index, sha in enumerate(history.order):
        record = history.records[sha]
        changed.update(record.paths)
        for path, refs in history.refs.get(sha, {}).items():
            for ref in refs:
                files_of.setdefault(ref.name, set()).add(path)
        window = tuple(history.order[:index + 1])
        scope_features = history.feature_names(sha)
        contexts.append(ReleaseContext(
            project=history.name,
            level=LEVEL_COMMIT,
            scope=sha,
            scope_index=index,
            release=Release(tag=sha, index=index, end_commit=sha, commits=window),
            cumulative_commits=window,
            changed_files=frozenset(changed),
            features=frozenset(scope_features),
            files_of={name: frozenset(files_of[name]) for name in scope_features},
            label_commits=(sha,),
            scope_files=frozenset(record.paths),
            snapshot_commit=sha,
            end_timestamp=record.timestamp,
            history=history,
        ))
    return contexts


def contexts_for(history: ProjectHistory, level: str) -> list[ReleaseContext]:
    if level == LEVEL_RELEASE:
        return release_contexts(history)
    if level == LEVEL_COMMIT:
        return commit_contexts(history)
    raise ValueError(f"Неизвестный уровень: {level}")
