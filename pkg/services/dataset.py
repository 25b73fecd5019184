"""
Сервис наборов данных.
Сборка размеченных экземпляров, хронологическое разбиение, SMOTE
и обмен таблицами CSV/ARFF.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from imblearn.over_sampling import SMOTE
from scipy.io import arff
from sklearn.neighbors import NearestNeighbors
from sklearn.preprocessing import MinMaxScaler

from cache import MiningCache, cache as default_cache
from errors import EmptyDataset, SchemaMismatch, TableIoError, TooFewMinority, TooFewReleases
from services.bug_label import CLASS_VALUES, CLEAN, DEFECTIVE, label_scope
from services.history import LEVEL_RELEASE, ProjectHistory, contexts_for, load_history
from services.metrics import (
    FEATURE_METRIC_IDS,
    FEATURE_PROCESS_IDS,
    FILE_METRIC_IDS,
    AGGREGATED_IDS,
    MetricSettings,
    feature_metrics,
    file_process_metrics,
    max_aggregate_to_file,
)
from utils.utils import atomic_write_text, format_float, format_ratio, render_csv, run_in_pool

logger = logging.getLogger(__name__)

RELATION_NAME = 'featforge'
PROVENANCE_COLUMNS = ('project', 'scope_index', 'scope', 'name')
CLASS_COLUMN = 'class'

ENTITY_FEATURE = 'feature'
ENTITY_FILE = 'file'

METRIC_SETS: dict[str, tuple[str, tuple[str, ...]]] = {
    'QueirozMet': (ENTITY_FEATURE, ('fcomm', 'fadev', 'fddev', 'fexp', 'foexp')),
    'ProcMet': (ENTITY_FEATURE, FEATURE_PROCESS_IDS),
    'ProcStructMet': (ENTITY_FEATURE, FEATURE_METRIC_IDS),
    'FileMoser17': (ENTITY_FILE, FILE_METRIC_IDS),
    'FileCombined32': (ENTITY_FILE, FILE_METRIC_IDS + AGGREGATED_IDS),
}
FEATURE_METRIC_SETS = ('QueirozMet', 'ProcMet', 'ProcStructMet')

SMOTE_NEIGHBORS = 5
SMOTE_PERCENT = 100


@dataclass(frozen=True)
class Instance:
    """Один размеченный экземпляр (фича или файл в скоупе)."""
    project: str
    scope_index: int
    scope: str
    name: str
    vector: tuple[float, ...]
    label: str


@dataclass(frozen=True)
class Dataset:
    """Схема атрибутов и экземпляры."""
    attributes: tuple[str, ...]
    instances: tuple[Instance, ...] = ()

    def __post_init__(self):
        width = len(self.attributes)
        for instance in self.instances:
            if len(instance.vector) != width:
                raise SchemaMismatch(
                    f"Экземпляр {instance.name}: {len(instance.vector)} значений при {width} атрибутах"
                )
            if instance.label not in CLASS_VALUES:
                raise SchemaMismatch(f"Неизвестный класс '{instance.label}' у {instance.name}")
            if not all(math.isfinite(value) for value in instance.vector):
                raise SchemaMismatch(f"Экземпляр {instance.name} содержит NaN или бесконечность")

    def __len__(self) -> int:
        return len(self.instances)

    def matrix(self) -> np.ndarray:
        """Матрица значений атрибутов (n x m)."""
        if not self.instances:
            return np.zeros((0, len(self.attributes)))
        return np.array([instance.vector for instance in self.instances], dtype=float)

    def targets(self) -> np.ndarray:
        """Вектор классов: 1 - defective, 0 - clean."""
        return np.array([1 if instance.label == DEFECTIVE else 0 for instance in self.instances], dtype=int)

    def class_counts(self) -> dict[str, int]:
        defective = sum(1 for instance in self.instances if instance.label == DEFECTIVE)
        return {DEFECTIVE: defective, CLEAN: len(self.instances) - defective}

    def projects(self) -> list[str]:
        return list(dict.fromkeys(instance.project for instance in self.instances))

    def where(self, predicate) -> 'Dataset':
        return Dataset(self.attributes, tuple(i for i in self.instances if predicate(i)))

    def project_attributes(self, attributes: Iterable[str]) -> 'Dataset':
        """Оставить только указанные атрибуты (в указанном порядке)."""
        selected = tuple(attributes)
        missing = [name for name in selected if name not in self.attributes]
        if missing:
            raise SchemaMismatch(f"Атрибуты отсутствуют в наборе: {', '.join(missing)}")
        index = [self.attributes.index(name) for name in selected]
        return Dataset(
            selected,
            tuple(replace(i, vector=tuple(i.vector[j] for j in index)) for i in self.instances),
        )

    def concat(self, other: 'Dataset') -> 'Dataset':
        if other.attributes != self.attributes:
            raise SchemaMismatch("Нельзя объединить наборы с разными атрибутами")
        return Dataset(self.attributes, self.instances + other.instances)


@dataclass(frozen=True)
class SplitSpec:
    """Разбиение по релизам для каждого проекта."""
    train_releases: dict[str, tuple[int, ...]]
    test_releases: dict[str, tuple[int, ...]]
    ratio: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LabeledProject:
    """История проекта и множество коммитов-источников ошибок."""
    history: ProjectHistory
    introducers: frozenset[str]

    @property
    def name(self) -> str:
        return self.history.name


def load_labeled(project: str, store: Optional[MiningCache] = None) -> LabeledProject:
    """Прочитать историю и разметку проекта из кэша."""
    store = store or default_cache
    labels = store.read_labels(project)
    return LabeledProject(load_history(project, store), frozenset(labels.get('introducers', [])))


def metric_set_attributes(metric_set: str) -> tuple[str, ...]:
    try:
        return METRIC_SETS[metric_set][1]
    except KeyError:
        raise SchemaMismatch(f"Неизвестный набор метрик: {metric_set}")


def _project_instances(
    project: LabeledProject,
    level: str,
    metric_set: str,
    settings: MetricSettings,
) -> list[Instance]:
    entity, attributes = METRIC_SETS[metric_set]
    instances = []
    for ctx in contexts_for(project.history, level):
        labels = label_scope(ctx, set(project.introducers))
        if entity == ENTITY_FEATURE:
            for feature in sorted(ctx.features):
                values = feature_metrics(feature, ctx)
                instances.append(Instance(
                    project=project.name,
                    scope_index=ctx.scope_index,
                    scope=ctx.scope,
                    name=feature,
                    vector=tuple(values[metric] for metric in attributes),
                    label=labels.feature_labels[feature],
                ))
            continue

        vectors = {}
        if metric_set == 'FileCombined32':
            vectors = {feature: feature_metrics(feature, ctx) for feature in sorted(ctx.features)}
        for path in sorted(ctx.scope_files):
            values = file_process_metrics(path, ctx, settings)
            if metric_set == 'FileCombined32':
                values.update(max_aggregate_to_file(path, ctx.features_in_file(path), vectors))
            instances.append(Instance(
                project=project.name,
                scope_index=ctx.scope_index,
                scope=ctx.scope,
                name=path,
                vector=tuple(values[metric] for metric in attributes),
                label=labels.file_labels[path],
            ))
    logger.info(f"{project.name}: {len(instances)} экземпляров ({level}, {metric_set})")
    return instances


def assemble(
    projects: list[LabeledProject],
    level: str = LEVEL_RELEASE,
    metric_set: str = 'ProcStructMet',
    settings: MetricSettings = MetricSettings(),
    jobs: int = 1,
) -> Dataset:
    """
    Собрать набор данных по проектам.

    Args:
        projects: размеченные проекты
        level: release или commit
        metric_set: имя набора метрик
        settings: ключевые слова метрик
        jobs: число потоков (параллельно по проектам)

    Returns:
        Dataset

    Raises:
        EmptyDataset: ни одного экземпляра
    """
    attributes = metric_set_attributes(metric_set)
    tasks = [
        (lambda project=project: _project_instances(project, level, metric_set, settings))
        for project in projects
    ]
    instances = [instance for chunk in run_in_pool(jobs, tasks) for instance in chunk]
    if not instances:
        raise EmptyDataset(f"Набор {metric_set} ({level}) пуст")
    return Dataset(attributes, tuple(instances))


def characteristics(ds: Dataset) -> dict[str, float]:
    """Ключевые характеристики: всего, defective, clean и коэффициент дисбаланса."""
    counts = ds.class_counts()
    imbalance = counts[CLEAN] / counts[DEFECTIVE] if counts[DEFECTIVE] else float('inf')
    return {
        'total': len(ds),
        'defective': counts[DEFECTIVE],
        'clean': counts[CLEAN],
        'imbalance': imbalance,
    }


def split_point(releases: int, target_ratio: float) -> int:
    """Число обучающих релизов: ближайшее к доле, в пределах [1, releases-1]."""
    k = math.floor(target_ratio / 100 * releases + 0.5)
    return min(max(k, 1), releases - 1)


def chronological_split(
    ds: Dataset,
    target_ratio: float | dict[str, float],
) -> tuple[Dataset, Dataset, SplitSpec]:
    """
    Разбить набор по релизам: ранние релизы в обучение, поздние в тест.

    Args:
        ds: набор данных
        target_ratio: доля обучения в процентах (общая или по проектам)

    Returns:
        (train, test, SplitSpec с достигнутыми соотношениями)

    Raises:
        TooFewReleases: у проекта меньше двух релизов
    """
    train_releases, test_releases, ratios = {}, {}, {}
    for project in ds.projects():
        scopes = sorted({i.scope_index for i in ds.instances if i.project == project})
        if len(scopes) < 2:
            raise TooFewReleases(f"У проекта {project} только {len(scopes)} релиз(ов) с экземплярами")
        ratio = target_ratio.get(project, 70.0) if isinstance(target_ratio, dict) else target_ratio
        k = split_point(len(scopes), ratio)
        train_releases[project] = tuple(scopes[:k])
        test_releases[project] = tuple(scopes[k:])
        ratios[project] = format_ratio(k, len(scopes) - k)
        logger.info(f"{project}: разбиение {ratios[project]} (цель {ratio:g})")

    train = ds.where(lambda i: i.scope_index in train_releases[i.project])
    test = ds.where(lambda i: i.scope_index in test_releases[i.project])
    return train, test, SplitSpec(train_releases, test_releases, ratios)


def minority_class(ds: Dataset) -> str:
    counts = ds.class_counts()
    return DEFECTIVE if counts[DEFECTIVE] <= counts[CLEAN] else CLEAN


def smote_balance(
    train: Dataset,
    k: int = SMOTE_NEIGHBORS,
    percent: int = SMOTE_PERCENT,
    seed: int = 1,
) -> Dataset:
    """
    Дополнить миноритарный класс синтетическими экземплярами (SMOTE).

    Синтетический экземпляр - v + gap * (n - v), где n - один из k ближайших
    миноритарных соседей v (евклидово расстояние на min-max-нормированных
    атрибутах), gap из [0, 1). Происхождение синтетического экземпляра
    берётся от ближайшего к нему исходного миноритарного экземпляра.

    Args:
        train: обучающий набор
        k: число соседей
        percent: процент добавляемых экземпляров от размера миноритарного класса
        seed: seed генератора

    Returns:
        Набор с добавленными экземплярами в конце

    Raises:
        TooFewMinority: миноритарных экземпляров меньше k+1
    """
    minority = minority_class(train)
    members = [i for i in train.instances if i.label == minority]
    if len(members) < k + 1:
        raise TooFewMinority(f"Для SMOTE нужно {k + 1} экземпляров класса {minority}, есть {len(members)}")
    total = int(round(percent / 100 * len(members)))
    if not total:
        return train

    scaler = MinMaxScaler().fit(train.matrix())
    targets = train.targets()
    target = 1 if minority == DEFECTIVE else 0
    sampler = SMOTE(
        sampling_strategy={target: len(members) + total},
        k_neighbors=k,
        random_state=seed,
    )
    resampled, _ = sampler.fit_resample(scaler.transform(train.matrix()), targets)
    # fit_resample дописывает синтетические строки после исходных
    created = resampled[len(train):]

    scaled_members = scaler.transform(np.array([i.vector for i in members], dtype=float))
    nearest = NearestNeighbors(n_neighbors=1).fit(scaled_members).kneighbors(created, return_distance=False)[:, 0]
    values = scaler.inverse_transform(created)

    synthetic = []
    for t, (row, source_index) in enumerate(zip(values, nearest)):
        source = members[source_index]
        synthetic.append(Instance(
            project=source.project,
            scope_index=source.scope_index,
            scope=source.scope,
            name=f"{source.name}#smote{t + 1}",
            vector=tuple(float(value) for value in row),
            label=minority,
        ))
    logger.info(f"SMOTE: добавлено {len(synthetic)} экземпляров класса {minority}")
    return Dataset(train.attributes, train.instances + tuple(synthetic))


def provenance_path(path: Path) -> Path:
    """Путь CSV с происхождением экземпляров для ARFF-файла."""
    return path.with_name(f"{path.stem}.provenance.csv")


def export_table(ds: Dataset, fmt: str, path: str | Path) -> None:
    """
    Выгрузить набор в CSV или ARFF.

    CSV содержит столбцы происхождения перед атрибутами; ARFF - только
    атрибуты и класс, происхождение пишется рядом в *.provenance.csv.

    Raises:
        TableIoError: ошибка записи
    """
    target = Path(path)
    provenance = [[i.project, str(i.scope_index), i.scope, i.name] for i in ds.instances]
    try:
        if fmt == 'csv':
            rows = [list(PROVENANCE_COLUMNS) + list(ds.attributes) + [CLASS_COLUMN]]
            for row, instance in zip(provenance, ds.instances):
                rows.append(row + [format_float(v) for v in instance.vector] + [instance.label])
            atomic_write_text(target, render_csv(rows))
        elif fmt == 'arff':
            lines = [f"@relation {RELATION_NAME}", '']
            lines.extend(f"@attribute {name} numeric" for name in ds.attributes)
            lines.append(f"@attribute {CLASS_COLUMN} {{{','.join(CLASS_VALUES)}}}")
            lines.extend(['', '@data'])
            lines.extend(
                ','.join([format_float(v) for v in instance.vector] + [instance.label])
                for instance in ds.instances
            )
            atomic_write_text(target, '\n'.join(lines) + '\n')
            atomic_write_text(provenance_path(target), render_csv([list(PROVENANCE_COLUMNS)] + provenance))
        else:
            raise TableIoError(f"Неизвестный формат таблицы: {fmt}")
    except OSError as e:
        logger.error(f"Ошибка при записи таблицы {target}: {e}")
        raise TableIoError(f"Не удалось записать {target}: {e}")
    logger.info(f"Набор выгружен: {target} ({len(ds)} экземпляров)")


def _parse_label(value: str, where: str) -> str:
    label = value.strip()
    if label not in CLASS_VALUES:
        raise SchemaMismatch(f"{where}: неизвестный класс '{label}'")
    return label


def _import_csv(target: Path) -> Dataset:
    rows = list(csv.reader(io.StringIO(target.read_text(encoding='utf-8'))))
    if not rows:
        raise SchemaMismatch(f"{target}: пустой файл")
    header = rows[0]
    head = tuple(header[:len(PROVENANCE_COLUMNS)])
    if head != PROVENANCE_COLUMNS or not header or header[-1] != CLASS_COLUMN:
        raise SchemaMismatch(f"{target}: ожидаются столбцы {', '.join(PROVENANCE_COLUMNS)} ... {CLASS_COLUMN}")
    attributes = tuple(header[len(PROVENANCE_COLUMNS):-1])
    instances = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaMismatch(f"{target}:{number}: {len(row)} столбцов при {len(header)} в заголовке")
        try:
            vector = tuple(float(value) for value in row[len(PROVENANCE_COLUMNS):-1])
            scope_index = int(row[1])
        except ValueError as e:
            raise SchemaMismatch(f"{target}:{number}: нечисловое значение ({e})")
        instances.append(Instance(
            project=row[0],
            scope_index=scope_index,
            scope=row[2],
            name=row[3],
            vector=vector,
            label=_parse_label(row[-1], f"{target}:{number}"),
        ))
    return Dataset(attributes, tuple(instances))


def _import_arff(target: Path) -> Dataset:
    try:
        data, meta = arff.loadarff(str(target))
    except (ValueError, arff.ParseArffError) as e:
        raise SchemaMismatch(f"{target}: некорректный ARFF ({e})")
    names = list(meta.names())
    if not names or names[-1] != CLASS_COLUMN:
        raise SchemaMismatch(f"{target}: отсутствует атрибут {CLASS_COLUMN}")
    attributes = tuple(names[:-1])

    provenance_file = provenance_path(target)
    provenance = []
    if provenance_file.exists():
        rows = list(csv.reader(io.StringIO(provenance_file.read_text(encoding='utf-8'))))
        provenance = rows[1:]
    if provenance and len(provenance) != len(data):
        raise SchemaMismatch(f"{provenance_file}: {len(provenance)} строк при {len(data)} экземплярах")

    instances = []
    for index, row in enumerate(data):
        raw_label = row[CLASS_COLUMN]
        label = raw_label.decode('utf-8') if isinstance(raw_label, bytes) else str(raw_label)
        project, scope_index, scope, name = provenance[index] if provenance else ('', str(index), '', str(index))
        instances.append(Instance(
            project=project,
            scope_index=int(scope_index),
            scope=scope,
            name=name,
            vector=tuple(float(row[attribute]) for attribute in attributes),
            label=_parse_label(label, f"{target}:{index + 1}"),
        ))
    return Dataset(attributes, tuple(instances))


def import_table(path: str | Path, expected_attributes: Optional[Iterable[str]] = None) -> Dataset:
    """
    Прочитать набор из CSV или ARFF (формат по расширению).

    Raises:
        TableIoError: файл не читается
        SchemaMismatch: неверная схема или атрибуты не совпадают с ожидаемыми
    """
    target = Path(path)
    try:
        ds = _import_arff(target) if target.suffix.lower() == '.arff' else _import_csv(target)
    except OSError as e:
        logger.error(f"Ошибка при чтении таблицы {target}: {e}")
        raise TableIoError(f"Не удалось прочитать {target}: {e}")
    if expected_attributes is not None and tuple(expected_attributes) != ds.attributes:
        raise SchemaMismatch(f"{target}: атрибуты не совпадают с ожидаемыми")
    return ds
