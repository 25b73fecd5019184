"""
Сервис метрик.
Процессные и структурные метрики фич (14), процессные метрики файлов (17)
и агрегация метрик фич на уровень файла по максимуму.
"""
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Optional

from errors import FeatureNotInRelease
from services.bug_label import classify_corrective, keyword_pattern
from services.feature_extract import code_lines, structure_profile
from services.history import ReleaseContext

logger = logging.getLogger(__name__)

SECONDS_PER_WEEK = 7 * 24 * 3600

DEFAULT_REFACTOR_KEYWORDS = ('refactor', 'refactoring', 'refactored')

FEATURE_PROCESS_IDS = ('fcomm', 'fadev', 'fddev', 'fexp', 'foexp', 'fmodd', 'faddl', 'freml')
FEATURE_STRUCTURE_IDS = ('fnloc', 'fcyco', 'lofc', 'scat', 'tanga', 'ndep')
FEATURE_METRIC_IDS = FEATURE_PROCESS_IDS + FEATURE_STRUCTURE_IDS
FILE_METRIC_IDS = (
    'revi', 'refa', 'bugf', 'auth',
    'addl', 'addm', 'adda', 'reml', 'remm', 'rema',
    'cchn', 'cchm', 'ccha', 'maxc', 'avgc', 'aage', 'wage',
)
AGGREGATED_IDS = FEATURE_METRIC_IDS + ('fnof',)

DECISION_PATTERN = re.compile(r'\b(?:if|for|while|case)\b|&&|\|\||\?')


@dataclass(frozen=True)
class MetricSettings:
    """Параметры метрик, зависящие от конфигурации."""
    keywords: Optional[tuple[str, ...]] = None
    refactor_keywords: tuple[str, ...] = DEFAULT_REFACTOR_KEYWORDS


def _without_directives(lines: list[str]) -> list[str]:
    kept = []
    continued = False
    for line in lines:
        directive = continued or line.lstrip().startswith('#')
        continued = directive and line.rstrip().endswith('\\')
        if not directive:
            kept.append(line)
    return kept


def cyclomatic_complexity(file_text: str) -> int:
    """
    Цикломатическая сложность файла: 1 + число ветвлений вне комментариев и строк.

    Директивы препроцессора (включая их продолжения через обратный слэш)
    не считаются ветвлениями.

    Args:
        file_text: текст файла

    Returns:
        Сложность
    """
    return 1 + sum(len(DECISION_PATTERN.findall(line)) for line in _without_directives(code_lines(file_text)))


def count_loc(file_text: str) -> int:
    """Количество непустых строк."""
    return sum(1 for line in file_text.splitlines() if line.strip())


def geometric_mean(values: list[float]) -> float:
    """
    Среднее геометрическое опыта разработчиков.

    Если среди значений есть ноль, значения сдвигаются на 1 до усреднения
    и обратно после.
    """
    if not values:
        return 0.0
    if len(values) == 1:
        return float(values[0])
    shift = 1 if any(value == 0 for value in values) else 0
    product = math.prod(float(value + shift) for value in values)
    if math.isfinite(product) and product > 0:
        return product ** (1 / len(values)) - shift
    log_sum = sum(math.log(value + shift) for value in values)
    return math.exp(log_sum / len(values)) - shift


def _file_churn(ctx: ReleaseContext, sha: str, path: str) -> tuple[int, int]:
    for change in ctx.records[sha].changes:
        if change.path == path:
            return len(change.added_lines), len(change.deleted_lines)
    return 0, 0


def _feature_commits(feature: str, ctx: ReleaseContext, commits: Iterable[str]) -> list[str]:
    return [
        sha for sha in commits
        if any(ref.name == feature for refs in ctx.refs_in(sha).values() for ref in refs)
    ]


def developer_experience(dev: str, ctx: ReleaseContext, files: Iterable[str]) -> int:
    """
    Опыт разработчика: сумма добавленных и удалённых строк в файлах A за релиз.

    Args:
        dev: идентификатор автора
        ctx: контекст релиза
        files: множество файлов A

    Returns:
        Количество строк (0, если автор не менял эти файлы)
    """
    wanted = set(files)
    total = 0
    for sha in ctx.release.commits:
        record = ctx.records[sha]
        if record.author != dev:
            continue
        for change in record.changes:
            if change.path in wanted:
                total += len(change.added_lines) + len(change.deleted_lines)
    return total


def feature_process_metrics(feature: str, ctx: ReleaseContext) -> dict[str, float]:
    """
    Восемь процессных метрик фичи.

    Args:
        feature: имя фичи
        ctx: контекст релиза

    Returns:
        {fcomm, fadev, fddev, fexp, foexp, fmodd, faddl, freml}

    Raises:
        FeatureNotInRelease: фича не затронута изменениями релиза
    """
    if feature not in ctx.features:
        raise FeatureNotInRelease(f"Фича {feature} не изменялась в скоупе {ctx.scope}")

    files = sorted(ctx.files_of[feature])
    commits = _feature_commits(feature, ctx, ctx.release.commits)
    authors = sorted({ctx.records[sha].author for sha in commits})
    all_authors = {ctx.records[sha].author for sha in _feature_commits(feature, ctx, ctx.cumulative_commits)}

    experience = {author: developer_experience(author, ctx, files) for author in authors}

    top_experiences = []
    for path in files:
        per_author = Counter(
            ctx.records[sha].author for sha in commits
            if any(ref.name == feature for ref in ctx.refs_in(sha).get(path, ()))
        )
        if not per_author:
            top_experiences.append(0)
            continue
        top = min(per_author, key=lambda author: (-per_author[author], author))
        top_experiences.append(developer_experience(top, ctx, files))

    ref_counts = [
        sum(1 for refs in ctx.refs_in(sha).values() for ref in refs if ref.name == feature)
        for sha in commits
    ]

    added, deleted = [], []
    for path in files:
        churn = [_file_churn(ctx, sha, path) for sha in ctx.release.commits]
        added.append(sum(a for a, _ in churn))
        deleted.append(sum(d for _, d in churn))

    return {
        'fcomm': float(len(commits)),
        'fadev': float(len(authors)),
        'fddev': float(len(all_authors)),
        'fexp': geometric_mean([float(experience[author]) for author in authors]),
        'foexp': fmean(top_experiences) if top_experiences else 0.0,
        'fmodd': fmean(ref_counts) if ref_counts else 0.0,
        'faddl': fmean(added) if added else 0.0,
        'freml': fmean(deleted) if deleted else 0.0,
    }


def feature_structure_metrics(
    feature: str,
    ctx: ReleaseContext,
    snapshot_commit: Optional[str] = None,
) -> dict[str, float]:
    """
    Шесть структурных метрик фичи по снимку последнего коммита скоупа.

    Файлы, отсутствующие в снимке, не участвуют в средних.

    Returns:
        {fnloc, fcyco, lofc, scat, tanga, ndep}
    """
    if feature not in ctx.features:
        raise FeatureNotInRelease(f"Фича {feature} не изменялась в скоупе {ctx.scope}")

    commit = snapshot_commit or ctx.snapshot_commit
    snapshots = {}
    for path in sorted(ctx.files_of[feature]):
        text = ctx.history.snapshot_at(path, commit)
        if text is None:
            logger.debug(f"Файл {path} отсутствует в снимке {commit[:10]}")
            continue
        snapshots[path] = text

    if not snapshots:
        return {metric: 0.0 for metric in FEATURE_STRUCTURE_IDS}

    profile = structure_profile(snapshots, {feature})[feature]
    return {
        'fnloc': fmean(count_loc(text) for text in snapshots.values()),
        'fcyco': fmean(cyclomatic_complexity(text) for text in snapshots.values()),
        'lofc': float(profile.lofc),
        'scat': float(profile.scat),
        'tanga': float(profile.tanga),
        'ndep': float(profile.ndep),
    }


def feature_metrics(feature: str, ctx: ReleaseContext) -> dict[str, float]:
    """Все 14 метрик фичи."""
    values = feature_process_metrics(feature, ctx)
    values.update(feature_structure_metrics(feature, ctx))
    return values


def file_process_metrics(
    path: str,
    ctx: ReleaseContext,
    settings: MetricSettings = MetricSettings(),
) -> dict[str, float]:
    """
    17 процессных метрик файла (метрики Мозера) по ревизиям окна.

    Args:
        path: путь файла
        ctx: контекст релиза или коммита
        settings: ключевые слова исправлений и рефакторингов

    Returns:
        {revi, ..., wage}
    """
    refactor_pattern = keyword_pattern(settings.refactor_keywords)
    revisions = [sha for sha in ctx.release.commits if path in ctx.records[sha].paths]

    added, deleted, changeset, ages = [], [], [], []
    refactorings = fixes = 0
    authors = set()
    for sha in revisions:
        record = ctx.records[sha]
        a, d = _file_churn(ctx, sha, path)
        added.append(a)
        deleted.append(d)
        changeset.append(len(record.changes))
        ages.append((ctx.end_timestamp - record.timestamp) / SECONDS_PER_WEEK)
        authors.add(record.author)
        if refactor_pattern.search(record.message_first_line):
            refactorings += 1
        if classify_corrective(record.message_first_line, settings.keywords).is_corrective:
            fixes += 1

    churn = [a + d for a, d in zip(added, deleted)]
    created = ctx.history.created_at(path)
    aage = (ctx.end_timestamp - created) / SECONDS_PER_WEEK if created is not None else 0.0
    weighted_added = sum(age * a for age, a in zip(ages, added))

    return {
        'revi': float(len(revisions)),
        'refa': float(refactorings),
        'bugf': float(fixes),
        'auth': float(len(authors)),
        'addl': float(sum(added)),
        'addm': float(max(added, default=0)),
        'adda': fmean(added) if added else 0.0,
        'reml': float(sum(deleted)),
        'remm': float(max(deleted, default=0)),
        'rema': fmean(deleted) if deleted else 0.0,
        'cchn': float(sum(churn)),
        'cchm': float(max(churn, default=0)),
        'ccha': fmean(churn) if churn else 0.0,
        'maxc': float(max(changeset, default=0)),
        'avgc': fmean(changeset) if changeset else 0.0,
        'aage': max(aage, 0.0),
        'wage': weighted_added / sum(added) if sum(added) else 0.0,
    }


def max_aggregate_to_file(
    path: str,
    features_in_file: Iterable[str],
    vectors: dict[str, dict[str, float]],
) -> dict[str, float]:
    """
    Агрегировать метрики фич файла по максимуму и добавить fnof.

    Args:
        path: путь файла
        features_in_file: фичи файла
        vectors: {фича: 14 метрик}

    Returns:
        15 значений; для файла без фич - нули
    """
    features = sorted(set(features_in_file))
    aggregated = {
        metric: max((vectors[feature][metric] for feature in features), default=0.0)
        for metric in FEATURE_METRIC_IDS
    }
    aggregated['fnof'] = float(len(features))
    logger.debug(f"Файл {path}: агрегировано {len(features)} фич")
    return aggregated
