"""
Сервис обхода истории git-репозитория.
Разрешает теги релизов, строит записи коммитов с диффами (3 строки контекста)
и отдаёт снимки файлов.
"""
import fnmatch
import logging
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import git
from git.exc import BadName, BadObject, GitCommandError, InvalidGitRepositoryError, NoSuchPathError

from errors import CorruptRepository, MissingObject, NoTagsMatched, NotARepository

logger = logging.getLogger(__name__)

DIFF_CONTEXT = 3
SOURCE_EXTENSIONS = ('.c', '.h', '.cpp', '.hpp', '.cc', '.hh')

CHANGE_KINDS = ('added', 'modified', 'deleted', 'renamed')

HUNK_HEADER_PATTERN = re.compile(r'^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@')


@dataclass(frozen=True)
class FileChange:
    """Изменение одного файла в коммите."""
    path: str
    kind: str
    added_lines: tuple[tuple[int, str], ...] = ()
    deleted_lines: tuple[tuple[int, str], ...] = ()
    diff_text: str = ''
    old_path: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'path': self.path,
            'kind': self.kind,
            'added_lines': [[number, text] for number, text in self.added_lines],
            'deleted_lines': [[number, text] for number, text in self.deleted_lines],
            'diff_text': self.diff_text,
            'old_path': self.old_path,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'FileChange':
        return cls(
            path=data['path'],
            kind=data['kind'],
            added_lines=tuple((int(n), t) for n, t in data['added_lines']),
            deleted_lines=tuple((int(n), t) for n, t in data['deleted_lines']),
            diff_text=data['diff_text'],
            old_path=data.get('old_path'),
        )


@dataclass(frozen=True)
class CommitRecord:
    """Один коммит истории с диффами по файлам."""
    hash: str
    parent_hashes: tuple[str, ...]
    author: str
    timestamp: int
    message_first_line: str
    message_full: str
    changes: tuple[FileChange, ...] = ()

    def to_dict(self) -> dict:
        return {
            'hash': self.hash,
            'parent_hashes': list(self.parent_hashes),
            'author': self.author,
            'timestamp': self.timestamp,
            'message_first_line': self.message_first_line,
            'message_full': self.message_full,
            'changes': [change.to_dict() for change in self.changes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'CommitRecord':
        return cls(
            hash=data['hash'],
            parent_hashes=tuple(data['parent_hashes']),
            author=data['author'],
            timestamp=int(data['timestamp']),
            message_first_line=data['message_first_line'],
            message_full=data['message_full'],
            changes=tuple(FileChange.from_dict(change) for change in data['changes']),
        )

    @property
    def paths(self) -> tuple[str, ...]:
        return tuple(change.path for change in self.changes)


@dataclass(frozen=True)
class Release:
    """Релиз: тег и коммиты от предыдущего тега (не включая) до тегированного."""
    tag: str
    index: int
    end_commit: str
    commits: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            'tag': self.tag,
            'index': self.index,
            'end_commit': self.end_commit,
            'commits': list(self.commits),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Release':
        return cls(
            tag=data['tag'],
            index=int(data['index']),
            end_commit=data['end_commit'],
            commits=tuple(data['commits']),
        )


@dataclass(frozen=True)
class HunkLine:
    """Строка ханка: тег (' ', '+', '-'), номера строк в старой/новой версии, текст."""
    tag: str
    old_number: Optional[int]
    new_number: Optional[int]
    text: str


def author_id(name: str, email: str) -> str:
    """Стабильный идентификатор автора: имя<email> в нижнем регистре."""
    return f"{(name or '').strip().lower()}<{(email or '').strip().lower()}>"


def is_source_file(path: str) -> bool:
    """Файл C-семейства, в котором ищутся фичи."""
    return path.lower().endswith(SOURCE_EXTENSIONS)


class RepoHandle:
    """Доступ только для чтения к git-репозиторию."""

    def __init__(self, repo: git.Repo, path: str):
        self._repo = repo
        self.path = path
        # GitPython держит постоянные процессы cat-file, доступ к ним сериализуется
        self._lock = threading.RLock()

    @property
    def repo(self) -> git.Repo:
        return self._repo

    def commit_count(self) -> int:
        """Количество коммитов, достижимых из всех ссылок."""
        with self._lock:
            try:
                return int(self._repo.git.rev_list('--all', '--count') or 0)
            except GitCommandError:
                return 0

    def commit(self, sha: str) -> git.Commit:
        """
        Получить объект коммита.

        Raises:
            MissingObject: коммит отсутствует
        """
        with self._lock:
            try:
                return self._repo.commit(sha)
            except (BadName, BadObject, ValueError, GitCommandError) as e:
                raise MissingObject(f"Коммит {sha} не найден в {self.path}: {e}")

    def rev_list(self, sha: str) -> list[str]:
        """Все предки коммита (включая его) в хронологическом порядке."""
        with self._lock:
            try:
                output = self._repo.git.rev_list('--date-order', '--reverse', sha)
            except GitCommandError as e:
                raise MissingObject(f"Не удалось получить историю {sha}: {e}")
        return output.split()

    def diff(self, parent: Optional[str], sha: str) -> list[FileChange]:
        """
        Изменения коммита относительно родителя; parent=None - корневой коммит.

        Raises:
            MissingObject: коммит или родитель отсутствует
        """
        with self._lock:
            try:
                commit = self._repo.commit(sha)
                if parent is None:
                    index = commit.diff(git.NULL_TREE, create_patch=True, unified=DIFF_CONTEXT)
                else:
                    index = self._repo.commit(parent).diff(commit, create_patch=True, M=True, unified=DIFF_CONTEXT)
            except (BadName, BadObject, ValueError, GitCommandError) as e:
                raise MissingObject(f"Не удалось построить дифф {parent or 'root'}..{sha}: {e}")
        return changes_from_diffs(index)

    def blame(self, rev: str, path: str) -> dict[int, str]:
        """
        Построчная атрибуция файла в ревизии.

        Returns:
            Словарь {номер строки: хэш коммита, последним изменившего строку}
        """
        line_owner: dict[int, str] = {}
        with self._lock:
            for entry in self._repo.blame_incremental(rev, path):
                for line_number in entry.linenos:
                    line_owner[line_number] = entry.commit.hexsha
        return line_owner

    def is_ancestor(self, ancestor: str, descendant: str) -> bool:
        with self._lock:
            return self._repo.is_ancestor(ancestor, descendant)

    def close(self) -> None:
        with self._lock:
            self._repo.close()


def open_repo(path: str | Path) -> RepoHandle:
    """
    Открыть репозиторий только для чтения.

    Args:
        path: путь к рабочей копии или bare-репозиторию

    Returns:
        RepoHandle

    Raises:
        NotARepository: по пути нет репозитория
        CorruptRepository: репозиторий не читается
    """
    repo_path = str(path)
    try:
        repo = git.Repo(repo_path)
    except (InvalidGitRepositoryError, NoSuchPathError) as e:
        raise NotARepository(f"Не является git-репозиторием: {repo_path} ({e})")

    try:
        list(repo.refs)
        repo.git.rev_parse('--git-dir')
    except (GitCommandError, ValueError, OSError) as e:
        logger.error(f"Репозиторий {repo_path} повреждён: {e}")
        raise CorruptRepository(f"Репозиторий повреждён: {repo_path} ({e})")

    logger.info(f"Открыт репозиторий {repo_path}")
    return RepoHandle(repo, repo_path)


def resolve_releases(repo: RepoHandle, tag_filter: str) -> list[Release]:
    """
    Разрешить теги релизов и распределить коммиты по релизам.

    Каждый коммит попадает в самый ранний релиз, тегированный коммит которого
    является его потомком. Коммиты до первого тега относятся к релизу 0,
    коммиты после последнего тега не попадают никуда.

    Args:
        repo: открытый репозиторий
        tag_filter: glob-шаблон имён тегов

    Returns:
        Релизы, упорядоченные по времени тегированного коммита

    Raises:
        NoTagsMatched: ни один тег не подошёл
    """
    with repo._lock:
        tagged = []
        for tag in repo.repo.tags:
            if not fnmatch.fnmatchcase(tag.name, tag_filter):
                continue
            try:
                commit = tag.commit
            except (ValueError, GitCommandError) as e:
                logger.warning(f"Тег {tag.name} не указывает на коммит: {e}")
                continue
            tagged.append((commit.committed_date, tag.name, commit.hexsha))

    if not tagged:
        raise NoTagsMatched(f"Ни один тег не соответствует шаблону '{tag_filter}' в {repo.path}")

    tagged.sort()
    releases = []
    assigned: set[str] = set()
    for index, (_, tag_name, end_commit) in enumerate(tagged):
        commits = [sha for sha in repo.rev_list(end_commit) if sha not in assigned]
        assigned.update(commits)
        releases.append(Release(tag=tag_name, index=index, end_commit=end_commit, commits=tuple(commits)))
        logger.info(f"Релиз {tag_name}: {len(commits)} коммитов")

    return releases


def iter_hunk_lines(diff_text: str) -> Iterator[HunkLine]:
    """
    Пройти по строкам ханков с номерами строк.

    Args:
        diff_text: ханки унифицированного диффа (начиная с @@)

    Yields:
        HunkLine для каждой строки контекста, добавления или удаления
    """
    old_number = new_number = 0
    for line in diff_text.split('\n'):
        header = HUNK_HEADER_PATTERN.match(line)
        if header:
            old_number = int(header.group(1))
            new_number = int(header.group(3))
            continue
        if not line or line.startswith('\\'):
            continue
        tag, text = line[0], line[1:]
        if tag == '-':
            yield HunkLine('-', old_number, None, text)
            old_number += 1
        elif tag == '+':
            yield HunkLine('+', None, new_number, text)
            new_number += 1
        elif tag == ' ':
            yield HunkLine(' ', old_number, new_number, text)
            old_number += 1
            new_number += 1


def change_from_hunks(path: str, kind: str, diff_text: str, old_path: Optional[str] = None) -> FileChange:
    """
    Построить FileChange по ханкам файла.

    Args:
        path: путь файла
        kind: один из CHANGE_KINDS
        diff_text: ханки унифицированного диффа (начиная с @@)
        old_path: прежний путь для переименования

    Returns:
        FileChange с пронумерованными добавленными и удалёнными строками
    """
    added, deleted = [], []
    for hunk_line in iter_hunk_lines(diff_text):
        if hunk_line.tag == '+':
            added.append((hunk_line.new_number, hunk_line.text))
        elif hunk_line.tag == '-':
            deleted.append((hunk_line.old_number, hunk_line.text))

    return FileChange(
        path=path,
        kind=kind,
        added_lines=tuple(added),
        deleted_lines=tuple(deleted),
        diff_text=diff_text,
        old_path=old_path,
    )


def _change_kind(diff: git.Diff) -> str:
    if diff.new_file:
        return 'added'
    if diff.deleted_file:
        return 'deleted'
    if diff.renamed_file:
        return 'renamed'
    return 'modified'


def changes_from_diffs(diffs: Iterable[git.Diff]) -> list[FileChange]:
    """
    Изменения по файлам из диффов GitPython.

    Returns:
        Список FileChange в порядке вывода git, путь уникален в пределах коммита
    """
    unique: dict[str, FileChange] = {}
    for diff in diffs:
        kind = _change_kind(diff)
        path = diff.a_path if kind == 'deleted' else diff.b_path
        if not path:
            logger.warning(f"Дифф без пути файла: {diff.a_path} -> {diff.b_path}")
            continue
        raw = diff.diff or b''
        diff_text = raw.decode('utf-8', errors='replace') if isinstance(raw, bytes) else raw
        old_path = diff.a_path if kind == 'renamed' else None
        unique.setdefault(path, change_from_hunks(path, kind, diff_text.rstrip('\n'), old_path))
    return list(unique.values())


def build_record(repo: RepoHandle, sha: str) -> CommitRecord:
    """
    Построить запись коммита. Для merge-коммитов дифф берётся к первому родителю.

    Raises:
        MissingObject: коммит отсутствует
    """
    commit = repo.commit(sha)
    with repo._lock:
        parents = tuple(parent.hexsha for parent in commit.parents)
        message = commit.message if isinstance(commit.message, str) else commit.message.decode('utf-8', 'replace')
        author = author_id(commit.author.name, commit.author.email)
        timestamp = int(commit.committed_date)
    changes = repo.diff(parents[0] if parents else None, sha)
    return CommitRecord(
        hash=sha,
        parent_hashes=parents,
        author=author,
        timestamp=timestamp,
        message_first_line=message.split('\n', 1)[0],
        message_full=message,
        changes=tuple(changes),
    )


def walk_commits(repo: RepoHandle, release: Release) -> list[CommitRecord]:
    """
    Построить записи всех коммитов релиза в хронологическом порядке.

    Args:
        repo: открытый репозиторий
        release: релиз, полученный resolve_releases на том же репозитории

    Returns:
        Список CommitRecord

    Raises:
        MissingObject: репозиторий изменился после resolve_releases
    """
    records = [build_record(repo, sha) for sha in release.commits]
    logger.info(f"Релиз {release.tag}: обработано {len(records)} коммитов")
    return records


def file_snapshot(repo: RepoHandle, commit: str, path: str) -> Optional[str]:
    """
    Получить содержимое файла в коммите.

    Args:
        repo: открытый репозиторий
        commit: хэш коммита
        path: путь относительно корня репозитория

    Returns:
        Текст файла (UTF-8 с заменой недекодируемых байтов) или None, если файла нет

    Raises:
        MissingObject: коммит отсутствует
    """
    commit_obj = repo.commit(commit)
    with repo._lock:
        try:
            blob = commit_obj.tree / path
        except KeyError:
            return None
        if blob.type != 'blob':
            return None
        data = blob.data_stream.read()
    return data.decode('utf-8', errors='replace')


def source_snapshots(repo: RepoHandle, record: CommitRecord) -> list[dict]:
    """
    Снимки файлов C-семейства, изменённых коммитом, после коммита.

    Returns:
        Список {commit, path, text}; text=None для удалённых файлов
    """
    snapshots = []
    for change in record.changes:
        if change.old_path and is_source_file(change.old_path):
            snapshots.append({'commit': record.hash, 'path': change.old_path, 'text': None})
        if not is_source_file(change.path):
            continue
        text = None if change.kind == 'deleted' else file_snapshot(repo, record.hash, change.path)
        snapshots.append({'commit': record.hash, 'path': change.path, 'text': text})
    return snapshots


def reconstruct(parent_text: str, change: FileChange) -> str:
    """
    Применить удалённые/добавленные строки изменения к родительскому снимку.

    Args:
        parent_text: текст файла в родительском коммите
        change: изменение файла

    Returns:
        Текст файла после изменения (строки без завершающего перевода строки)
    """
    deleted = {number for number, _ in change.deleted_lines}
    lines = [line for number, line in enumerate(parent_text.splitlines(), start=1) if number not in deleted]
    for number, text in sorted(change.added_lines):
        lines.insert(number - 1, text)
    return '\n'.join(lines)
