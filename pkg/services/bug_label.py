"""
Сервис разметки дефектов.
Находит исправляющие коммиты по ключевым словам, трассирует коммиты,
внёсшие ошибку (SZZ), и размечает файлы и фичи как defective/clean.
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, TYPE_CHECKING

from git.exc import GitCommandError

from errors import FeatureWithoutFiles, MissingObject
from services.feature_extract import code_lines
from services.repo_miner import CommitRecord, RepoHandle, file_snapshot, is_source_file

if TYPE_CHECKING:
    from services.history import ReleaseContext

logger = logging.getLogger(__name__)

DEFECTIVE = 'defective'
CLEAN = 'clean'
CLASS_VALUES = (DEFECTIVE, CLEAN)

DEFAULT_KEYWORDS = ('bug', 'bugs', 'bugfix', 'error', 'fail', 'fix', 'fixed', 'fixes')


@dataclass(frozen=True)
class CorrectiveVerdict:
    commit: str
    is_corrective: bool
    matched_keyword: Optional[str] = None


@dataclass
class BugTrace:
    """Результат SZZ для одного исправляющего коммита."""
    corrective: str
    introducers: set[str] = field(default_factory=set)
    blamed_lines: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'corrective': self.corrective,
            'introducers': sorted(self.introducers),
            'blamed_lines': {
                sha: [[path, line] for path, line in sorted(lines)]
                for sha, lines in sorted(self.blamed_lines.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'BugTrace':
        return cls(
            corrective=data['corrective'],
            introducers=set(data['introducers']),
            blamed_lines={sha: [(path, int(line)) for path, line in lines] for sha, lines in data['blamed_lines'].items()},
        )


@dataclass(frozen=True)
class LabelMap:
    """Разметка одного скоупа (релиза или коммита)."""
    scope: str
    file_labels: dict[str, str]
    feature_labels: dict[str, str]

    def to_dict(self) -> dict:
        return {
            'scope': self.scope,
            'files': dict(sorted(self.file_labels.items())),
            'features': dict(sorted(self.feature_labels.items())),
        }


def keyword_pattern(keywords: Iterable[str]) -> re.Pattern:
    """Регулярное выражение для поиска ключевых слов целым словом без учёта регистра."""
    ordered = sorted({keyword.lower() for keyword in keywords}, key=lambda word: (-len(word), word))
    alternatives = '|'.join(re.escape(word) for word in ordered)
    return re.compile(rf'(?<![A-Za-z0-9_])({alternatives})(?![A-Za-z0-9_])', re.IGNORECASE)


_DEFAULT_PATTERN = keyword_pattern(DEFAULT_KEYWORDS)


def classify_corrective(
    message_first_line: str,
    keywords: Optional[Iterable[str]] = None,
    commit: str = '',
) -> CorrectiveVerdict:
    """
    Определить, является ли коммит исправляющим.

    Args:
        message_first_line: первая строка сообщения коммита
        keywords: ключевые слова (по умолчанию стандартный список)
        commit: хэш коммита для вердикта

    Returns:
        CorrectiveVerdict с первым найденным ключевым словом
    """
    pattern = _DEFAULT_PATTERN if keywords is None else keyword_pattern(keywords)
    first_line = message_first_line.split('\n', 1)[0]
    match = pattern.search(first_line)
    if match is None:
        return CorrectiveVerdict(commit=commit, is_corrective=False)
    return CorrectiveVerdict(commit=commit, is_corrective=True, matched_keyword=match.group(1).lower())


def _blameable_lines(repo: RepoHandle, parent: str, path: str, deleted_lines) -> list[int]:
    """Номера удалённых строк без пустых строк и строк-комментариев."""
    if is_source_file(path):
        parent_text = file_snapshot(repo, parent, path) or ''
        code = code_lines(parent_text)
    else:
        code = None
    numbers = []
    for number, text in deleted_lines:
        if not text.strip():
            continue
        if code is not None and 0 < number <= len(code) and not code[number - 1].strip():
            continue
        numbers.append(number)
    return numbers


def szz_trace(repo: RepoHandle, corrective: CommitRecord) -> BugTrace:
    """
    Найти коммиты, внёсшие строки, удалённые исправляющим коммитом.

    Args:
        repo: открытый репозиторий
        corrective: исправляющий коммит

    Returns:
        BugTrace; для корневого коммита - пустая трасса
    """
    trace = BugTrace(corrective=corrective.hash)
    if not corrective.parent_hashes:
        logger.info(f"Коммит {corrective.hash[:10]} не имеет родителя, трасса пуста")
        return trace

    parent = corrective.parent_hashes[0]
    for change in corrective.changes:
        if not change.deleted_lines:
            continue
        source_path = change.old_path or change.path
        numbers = _blameable_lines(repo, parent, source_path, change.deleted_lines)
        if not numbers:
            continue
        try:
            owners = repo.blame(parent, source_path)
        except (GitCommandError, MissingObject) as e:
            logger.warning(f"Не удалось выполнить blame {source_path} в {parent[:10]}: {e}")
            continue

        for number in numbers:
            introducer = owners.get(number)
            if introducer is None:
                continue
            if not repo.is_ancestor(introducer, corrective.hash):
                logger.warning(f"Коммит {introducer[:10]} не является предком {corrective.hash[:10]}, пропущен")
                continue
            trace.introducers.add(introducer)
            trace.blamed_lines.setdefault(introducer, []).append((source_path, number))

    logger.debug(f"SZZ {corrective.hash[:10]}: {len(trace.introducers)} коммитов-источников")
    return trace


def label_files(ctx: 'ReleaseContext', introducers: set[str]) -> dict[str, str]:
    """
    Разметить файлы контекста.

    Файл дефектный, если его изменяет коммит-источник ошибки из коммитов скоупа
    (всех коммитов релиза или одного коммита для JIT-разметки).

    Args:
        ctx: контекст релиза или коммита
        introducers: коммиты-источники по всей истории

    Returns:
        {путь: defective|clean} для всех ctx.changed_files
    """
    defective = set()
    for sha in ctx.label_commits:
        if sha in introducers:
            defective.update(ctx.records[sha].paths)
    return {path: (DEFECTIVE if path in defective else CLEAN) for path in sorted(ctx.changed_files)}


def label_features(ctx: 'ReleaseContext', file_labels: dict[str, str]) -> dict[str, str]:
    """
    Разметить фичи: дефектна, если дефектен хотя бы один её файл.

    Raises:
        FeatureWithoutFiles: фича не сопоставлена ни одному файлу
    """
    labels = {}
    for feature in sorted(ctx.features):
        files = ctx.files_of.get(feature)
        if not files:
            raise FeatureWithoutFiles(f"Фича {feature} в скоупе {ctx.scope} не сопоставлена файлам")
        defective = any(file_labels.get(path) == DEFECTIVE for path in files)
        labels[feature] = DEFECTIVE if defective else CLEAN
    return labels


def label_scope(ctx: 'ReleaseContext', introducers: set[str]) -> LabelMap:
    """Разметка скоупа: файлы скоупа и фичи."""
    file_labels = label_files(ctx, introducers)
    return LabelMap(
        scope=ctx.scope,
        file_labels={path: file_labels[path] for path in sorted(ctx.scope_files)},
        feature_labels=label_features(ctx, file_labels),
    )
