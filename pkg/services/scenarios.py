"""
Сценарии экспериментов rq1-rq5.
Каждый сценарий собирает наборы, обучает модели на сбалансированной
обучающей выборке, оценивает на нетронутой тестовой и формирует таблицы.
"""
import csv
import json
import logging
import statistics
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

from errors import EmptyDataset, FeatforgeError, SingleClassTraining, TooFewInstances, TooFewMinority, UnmappedFeature
from services.bug_label import CLASS_VALUES, CLEAN, DEFECTIVE
from services.dataset import (
    FEATURE_METRIC_SETS,
    SMOTE_NEIGHBORS,
    Dataset,
    LabeledProject,
    assemble,
    chronological_split,
    smote_balance,
)
from services.evaluation import (
    RELIEFF_NEIGHBORS,
    EvalReport,
    evaluate,
    evaluate_scores,
    influence_summary,
    relieff_rank,
    top_fraction,
    wrapper_influence,
)
from services.history import LEVEL_RELEASE, release_contexts
from services.learn import CLASSIFIER_KINDS, ClassifierSpec, predict_labels, predict_scores, train
from services.metrics import AGGREGATED_IDS, MetricSettings
from utils.utils import atomic_write_text, format_float, render_csv, run_in_pool, safe_filename

logger = logging.getLogger(__name__)

SCENARIOS = ('rq1', 'rq2', 'rq3', 'rq4', 'rq5')
FEATURE_SET_FOR_FILES = 'ProcStructMet'
FILE_SET = 'FileMoser17'
COMBINED_SET = 'FileCombined32'
TOP_FRACTIONS = (('all', 1.0), ('top75', 0.75), ('top50', 0.5))


@dataclass(frozen=True)
class ScenarioSettings:
    """Общие параметры запуска сценариев."""
    seed: int = 1
    jobs: int = 1
    split_ratios: dict[str, float] = field(default_factory=dict)
    default_ratio: float = 70.0
    metrics: MetricSettings = MetricSettings()
    hyperparameters: dict[str, dict] = field(default_factory=dict)

    def spec(self, kind: str) -> ClassifierSpec:
        return ClassifierSpec(kind, dict(self.hyperparameters.get(kind, {})), self.seed)

    def ratio_for(self, projects: list[str]) -> dict[str, float]:
        return {name: self.split_ratios.get(name, self.default_ratio) for name in projects}


@dataclass
class CellResult:
    """Одна ячейка сценария: модель, оценённая на тестовой выборке."""
    key: str
    meta: dict
    report: Optional[EvalReport] = None
    flags: list[str] = field(default_factory=list)
    predicted: list[str] = field(default_factory=list, repr=False)

    @property
    def auc(self) -> Optional[float]:
        return self.report.auc if self.report else None

    def to_dict(self) -> dict:
        return {
            'key': self.key,
            'meta': self.meta,
            'flags': sorted(set(self.flags + (self.report.flags if self.report else []))),
            'report': self.report.to_dict() if self.report else None,
        }


@dataclass
class ScenarioResult:
    """Ячейки сценария и итоговые таблицы (первая строка таблицы - заголовок)."""
    scenario: str
    cells: dict[str, CellResult] = field(default_factory=dict)
    summary: list[list[str]] = field(default_factory=list)
    tables: dict[str, list[list[str]]] = field(default_factory=dict)

    def add(self, cell: CellResult) -> None:
        self.cells[cell.key] = cell


def _number(value: Optional[float]) -> str:
    return format_float(value) if value is not None else ''


def balance(train_set: Dataset, seed: int) -> tuple[Dataset, list[str]]:
    """SMOTE для обучающей выборки; при нехватке миноритарного класса - без балансировки с флагом."""
    try:
        return smote_balance(train_set, k=SMOTE_NEIGHBORS, seed=seed), []
    except TooFewMinority as e:
        logger.warning(f"SMOTE пропущен: {e}")
        return train_set, ['smote_skipped']


def run_cell(key: str, meta: dict, spec: ClassifierSpec, train_set: Dataset, test: Dataset) -> CellResult:
    """Обучить и оценить одну ячейку; обучение на одном классе не прерывает сценарий."""
    cell = CellResult(key=key, meta=meta)
    try:
        model = train(spec, train_set)
    except SingleClassTraining as e:
        logger.warning(f"Ячейка {key}: {e}")
        cell.flags.append('single_class_training')
        return cell
    scores = predict_scores(model, test)
    cell.report = evaluate_scores([i.label for i in test.instances], scores)
    cell.predicted = predict_labels(scores)
    return cell


def write_result(result: ScenarioResult, out_dir: str | Path) -> Path:
    """
    Записать результат сценария в каталог: summary.csv, cells/*.json, roc/*.csv
    и дополнительные таблицы.
    """
    target = Path(out_dir)
    atomic_write_text(target / 'summary.csv', render_csv(result.summary))
    for name, rows in sorted(result.tables.items()):
        atomic_write_text(target / f"{name}.csv", render_csv(rows))
    for key, cell in sorted(result.cells.items()):
        filename = safe_filename(key)
        atomic_write_text(target / 'cells' / f"{filename}.json", json.dumps(cell.to_dict(), indent=2, sort_keys=True) + '\n')
        if cell.report and cell.report.roc:
            atomic_write_text(target / 'roc' / f"{filename}.csv", cell.report.roc_csv())
    logger.info(f"Результат {result.scenario} записан в {target}")
    return target


# rq1

def rq1_grid(
    projects: list[LabeledProject],
    settings: ScenarioSettings = ScenarioSettings(),
    classifiers: tuple[str, ...] = CLASSIFIER_KINDS,
    metric_sets: tuple[str, ...] = FEATURE_METRIC_SETS,
    with_influence: bool = False,
) -> ScenarioResult:
    """
    Сетка классификатор x набор метрик на релизных наборах фич.

    Returns:
        ScenarioResult с ячейками '<классификатор>-<набор>'
    """
    result = ScenarioResult('rq1')
    names = [project.name for project in projects]
    tasks, keys = [], []
    splits = {}
    for metric_set in metric_sets:
        ds = assemble(projects, LEVEL_RELEASE, metric_set, settings.metrics, settings.jobs)
        train_set, test, split = chronological_split(ds, settings.ratio_for(names))
        balanced, flags = balance(train_set, settings.seed)
        splits[metric_set] = (balanced, test)
        for kind in classifiers:
            key = f"{kind}-{metric_set}"
            meta = {'classifier': kind, 'metric_set': metric_set, 'split': split.ratio}

            def task(key=key, meta=meta, kind=kind, balanced=balanced, test=test, flags=flags):
                cell = run_cell(key, meta, settings.spec(kind), balanced, test)
                cell.flags.extend(flags)
                return cell

            tasks.append(task)
            keys.append(key)

    for cell in run_in_pool(settings.jobs, tasks):
        result.add(cell)

    result.summary = [['classifier', 'metric_set', 'class', 'precision', 'recall', 'f', 'auc']]
    for key in keys:
        cell = result.cells[key]
        report = cell.report
        if report is None:
            result.summary.append([cell.meta['classifier'], cell.meta['metric_set'], 'w.a.', '', '', '', ''])
            continue
        rows = [(cls, report.per_class[cls]) for cls in CLASS_VALUES] + [('w.a.', report.weighted)]
        for name, scores in rows:
            result.summary.append([
                cell.meta['classifier'], cell.meta['metric_set'], name,
                format_float(scores.precision), format_float(scores.recall), format_float(scores.f),
                _number(report.auc),
            ])

    if with_influence:
        influence_rows = [['classifier', 'metric_set', 'attribute', 'influence']]
        influences = []
        for key in keys:
            cell = result.cells[key]
            if cell.report is None:
                continue
            balanced, test = splits[cell.meta['metric_set']]
            values = wrapper_influence(settings.spec(cell.meta['classifier']), balanced, test, settings.jobs)
            influences.append(values)
            for attribute, value in values.items():
                influence_rows.append([cell.meta['classifier'], cell.meta['metric_set'], attribute, format_float(value)])
        result.tables['influence'] = influence_rows
        result.tables['influence_summary'] = [['attribute', 'mean', 'std']] + [
            [attribute, format_float(mean), format_float(std)]
            for attribute, (mean, std) in sorted(influence_summary(influences).items())
        ]
    return result


# rq2

def _ranking(train_set: Dataset, seed: int) -> list[tuple[str, float]]:
    smallest = min(train_set.class_counts().values())
    neighbors = min(RELIEFF_NEIGHBORS, smallest - 1)
    if neighbors < 1:
        raise TooFewInstances(f"Для ReliefF нужно хотя бы 2 экземпляра каждого класса, есть {train_set.class_counts()}")
    return relieff_rank(train_set, neighbors=neighbors, seed=seed)


def rq2_file_level(
    projects: list[LabeledProject],
    settings: ScenarioSettings = ScenarioSettings(),
    classifiers: tuple[str, ...] = CLASSIFIER_KINDS,
) -> ScenarioResult:
    """
    Предсказание на уровне файлов: только файловые метрики и с метриками фич.

    Сначала все классификаторы сравниваются на 17 файловых метриках, затем
    лес оценивается на шести вариантах атрибутов (все, 75% и 50% по ReliefF).
    """
    result = ScenarioResult('rq2')
    names = [project.name for project in projects]
    prepared = {}
    for metric_set in (FILE_SET, COMBINED_SET):
        ds = assemble(projects, LEVEL_RELEASE, metric_set, settings.metrics, settings.jobs)
        train_set, test, split = chronological_split(ds, settings.ratio_for(names))
        balanced, flags = balance(train_set, settings.seed)
        prepared[metric_set] = (train_set, balanced, test, flags, split)

    train_17, balanced_17, test_17, flags_17, split_17 = prepared[FILE_SET]
    selection_keys = [f"select-{kind}" for kind in classifiers]
    selection_tasks = [
        (lambda kind=kind: run_cell(
            f"select-{kind}", {'classifier': kind, 'metric_set': FILE_SET, 'split': split_17.ratio},
            settings.spec(kind), balanced_17, test_17,
        ))
        for kind in classifiers
    ]

    variant_keys, variant_tasks = [], []
    rankings = {}
    for metric_set, suffix in ((FILE_SET, '17'), (COMBINED_SET, '32')):
        train_set, balanced, test, flags, split = prepared[metric_set]
        ranking = _ranking(train_set, settings.seed)
        rankings[metric_set] = ranking
        for label, fraction in TOP_FRACTIONS:
            selected = top_fraction(ranking, fraction) if fraction < 1 else list(balanced.attributes)
            key = f"forest-{label}{suffix}"
            meta = {'classifier': 'forest', 'metric_set': metric_set, 'variant': f"{label}{suffix}",
                    'attributes': selected, 'split': split.ratio}

            def task(key=key, meta=meta, selected=selected, balanced=balanced, test=test, flags=flags):
                cell = run_cell(key, meta, settings.spec('forest'),
                                balanced.project_attributes(selected), test.project_attributes(selected))
                cell.flags.extend(flags)
                return cell

            variant_keys.append(key)
            variant_tasks.append(task)

    for cell in run_in_pool(settings.jobs, selection_tasks + variant_tasks):
        cell.flags.extend(flags_17 if cell.key.startswith('select-') else [])
        result.add(cell)

    result.tables['classifier_selection'] = [['classifier', 'auc', 'weighted_f']] + [
        [result.cells[key].meta['classifier'], _number(result.cells[key].auc),
         _number(result.cells[key].report.weighted.f if result.cells[key].report else None)]
        for key in selection_keys
    ]
    result.summary = [['variant', 'metric_set', 'attributes', 'auc', 'weighted_f']]
    for key in variant_keys:
        cell = result.cells[key]
        result.summary.append([
            cell.meta['variant'], cell.meta['metric_set'], str(len(cell.meta['attributes'])),
            _number(cell.auc), _number(cell.report.weighted.f if cell.report else None),
        ])
    result.tables['relieff_ranking'] = [['rank', 'attribute', 'weight', 'feature_derived']] + [
        [str(rank), name, format_float(weight), 'yes' if name in AGGREGATED_IDS else 'no']
        for rank, (name, weight) in enumerate(rankings[COMBINED_SET], start=1)
    ]
    return result


# rq3

FeatureFiles = dict[tuple[str, int, str], tuple[str, list[str]]]


def _class_rows(kind: str, train_set: Dataset, test: Dataset) -> list[list[str]]:
    rows = []
    for part, ds in (('train', train_set), ('test', test), ('total', train_set.concat(test))):
        counts = ds.class_counts()
        total = len(ds) or 1
        rows.append([
            kind, part, str(counts[CLEAN]), str(counts[DEFECTIVE]),
            format_float(100 * counts[CLEAN] / total), format_float(100 * counts[DEFECTIVE] / total),
        ])
    return rows


def feature_file_mapping(projects: list[LabeledProject]) -> FeatureFiles:
    """{(проект, индекс релиза, фича): (имя релиза, файлы фичи)} по всем релизам."""
    mapping = {}
    for project in projects:
        for ctx in release_contexts(project.history):
            for feature, files in ctx.files_of.items():
                mapping[(project.name, ctx.scope_index, feature)] = (ctx.scope, sorted(files))
    return mapping


def rq3_from_datasets(
    feature_ds: Dataset,
    file_ds: Dataset,
    mapping: FeatureFiles,
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
) -> ScenarioResult:
    """
    Сравнить предсказания для фич и для их файлов на одних и тех же релизах.

    Релизы обучения и теста определяются разбиением файлового набора;
    экземпляры фич из других релизов отбрасываются.

    Raises:
        EmptyDataset: в тестовых релизах нет ни одной фичи
        UnmappedFeature: фича не сопоставлена файлам или у её файла нет предсказания
        SingleClassTraining: одна из обучающих выборок содержит один класс
    """
    result = ScenarioResult('rq3')
    file_train, file_test, split = chronological_split(file_ds, settings.ratio_for(file_ds.projects()))

    def in_scopes(releases: dict[str, tuple[int, ...]]):
        return lambda i: i.scope_index in releases.get(i.project, ())

    feature_train = feature_ds.where(in_scopes(split.train_releases))
    feature_test = feature_ds.where(in_scopes(split.test_releases))
    dropped = len(feature_ds) - len(feature_train) - len(feature_test)
    if dropped:
        logger.warning(f"rq3: {dropped} экземпляров фич вне релизов файлового набора отброшены")
    if not len(feature_test):
        raise EmptyDataset(f"rq3: в тестовых релизах {split.test_releases} нет фич")

    predictions = {}
    for side, train_set, test in (
        ('feature', feature_train, feature_test),
        ('file', file_train, file_test),
    ):
        balanced, flags = balance(train_set, settings.seed)
        cell = run_cell(side, {'classifier': classifier, 'side': side, 'split': split.ratio},
                        settings.spec(classifier), balanced, test)
        cell.flags.extend(flags)
        result.add(cell)
        if cell.report is None:
            raise SingleClassTraining(f"Сравнение невозможно: обучающая выборка ({side}) содержит один класс")
        predictions[side] = {
            (i.project, i.scope_index, i.name): (i.label, label) for i, label in zip(test.instances, cell.predicted)
        }

    joined = [['project', 'release', 'feature', 'feature_label', 'feature_predicted',
               'file', 'file_label', 'file_predicted']]
    counts = {'defective_features': 0, 'feature_correct': 0, 'file_correct': 0,
              'feature_only': 0, 'file_only': 0, 'both': 0, 'neither': 0}
    for (project, scope_index, feature), (truth, guess) in sorted(predictions['feature'].items()):
        if (project, scope_index, feature) not in mapping:
            raise UnmappedFeature(f"Фича {feature} ({project}, {scope_index}) не сопоставлена файлам")
        scope, files = mapping[(project, scope_index, feature)]
        file_correct = False
        for path in files:
            if (project, scope_index, path) not in predictions['file']:
                raise UnmappedFeature(f"Для файла {path} фичи {feature} ({project}, {scope}) нет предсказания")
            file_truth, file_guess = predictions['file'][(project, scope_index, path)]
            joined.append([project, scope, feature, truth, guess, path, file_truth, file_guess])
            if file_truth == DEFECTIVE and file_guess == DEFECTIVE:
                file_correct = True
        if truth != DEFECTIVE:
            continue
        feature_correct = guess == DEFECTIVE
        counts['defective_features'] += 1
        counts['feature_correct'] += feature_correct
        counts['file_correct'] += file_correct
        if feature_correct and file_correct:
            counts['both'] += 1
        elif feature_correct:
            counts['feature_only'] += 1
        elif file_correct:
            counts['file_only'] += 1
        else:
            counts['neither'] += 1

    result.tables['mapping'] = joined
    result.summary = [['measure', 'count']] + [[name, str(value)] for name, value in counts.items()]
    result.tables['imbalance'] = (
        [['entity', 'part', 'clean', 'defective', 'clean_pct', 'defective_pct']]
        + _class_rows('files', file_train, file_test)
        + _class_rows('features', feature_train, feature_test)
    )
    return result


def rq3_compare(
    projects: list[LabeledProject],
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
) -> ScenarioResult:
    """Сравнение предсказаний для фич и для реализующих их файлов."""
    feature_ds = assemble(projects, LEVEL_RELEASE, FEATURE_SET_FOR_FILES, settings.metrics, settings.jobs)
    file_ds = assemble(projects, LEVEL_RELEASE, FILE_SET, settings.metrics, settings.jobs)
    return rq3_from_datasets(feature_ds, file_ds, feature_file_mapping(projects), settings, classifier)


# rq4

def rq4_series(
    ds: Dataset,
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
    project: str = '',
    level: str = LEVEL_RELEASE,
) -> ScenarioResult:
    """
    Инкрементальное предсказание: обучение на скоупах 1..n, тест на n+1.

    Тестовые скоупы с одним классом пропускаются с флагом.
    """
    result = ScenarioResult('rq4')
    scopes = sorted({i.scope_index for i in ds.instances})
    tasks = []
    for n in range(1, len(scopes)):
        train_scopes = set(scopes[:n])
        test_scope = scopes[n]
        train_set = ds.where(lambda i, s=train_scopes: i.scope_index in s)
        test = ds.where(lambda i, t=test_scope: i.scope_index == t)
        if max(train_scopes) >= test_scope:
            raise FeatforgeError(f"Утечка данных: обучающий скоуп {max(train_scopes)} не раньше тестового {test_scope}")
        key = f"{project or 'project'}-{level}-{n:05d}"
        meta = {'project': project, 'level': level, 'n': n,
                'train_last_scope': max(train_scopes), 'test_scope': test_scope,
                'test_name': test.instances[0].scope}

        def task(key=key, meta=meta, train_set=train_set, test=test):
            if len(set(i.label for i in test.instances)) < 2:
                return CellResult(key=key, meta=meta, flags=['single_class_test'])
            balanced, flags = balance(train_set, settings.seed)
            cell = run_cell(key, meta, settings.spec(classifier), balanced, test)
            cell.flags.extend(flags)
            return cell

        tasks.append(task)

    for cell in run_in_pool(settings.jobs, tasks):
        result.add(cell)

    result.summary = [['project', 'level', 'n', 'test_scope', 'auc', 'flags']]
    aucs = []
    for key in sorted(result.cells):
        cell = result.cells[key]
        if cell.auc is not None:
            aucs.append(cell.auc)
        result.summary.append([
            project, level, str(cell.meta['n']), cell.meta['test_name'], _number(cell.auc),
            ';'.join(sorted(set(cell.flags))),
        ])
    result.tables['series_summary'] = [
        ['project', 'level', 'datasets', 'evaluated', 'median_auc'],
        [project, level, str(len(scopes)), str(len(aucs)), _number(statistics.median(aucs) if aucs else None)],
    ]
    return result


def rq4_incremental(
    project: LabeledProject,
    level: str = LEVEL_RELEASE,
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
) -> ScenarioResult:
    """Инкрементальное предсказание для одного проекта по релизам или коммитам."""
    ds = assemble([project], level, FEATURE_SET_FOR_FILES, settings.metrics, 1)
    return rq4_series(ds, settings, classifier, project.name, level)


def merge_results(scenario: str, results: list[ScenarioResult]) -> ScenarioResult:
    """Объединить результаты одного сценария по нескольким проектам."""
    merged = ScenarioResult(scenario)
    for part in results:
        merged.cells.update(part.cells)
        if not merged.summary:
            merged.summary = [list(row) for row in part.summary]
        else:
            merged.summary.extend(part.summary[1:])
        for name, rows in part.tables.items():
            if name not in merged.tables:
                merged.tables[name] = [list(row) for row in rows]
            else:
                merged.tables[name].extend(rows[1:])
    return merged


# rq5

def rq5_from_datasets(
    datasets: dict[str, Dataset],
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
    level: str = LEVEL_RELEASE,
) -> ScenarioResult:
    """
    Межпроектное предсказание: для каждого k обучение на всех сочетаниях
    k проектов и оценка на каждом из оставшихся.
    """
    result = ScenarioResult('rq5')
    names = sorted(datasets)
    tasks = []
    for k in range(1, len(names)):
        for combo in combinations(names, k):
            train_set = datasets[combo[0]]
            for name in combo[1:]:
                train_set = train_set.concat(datasets[name])
            tests = [name for name in names if name not in combo]

            def task(k=k, combo=combo, train_set=train_set, tests=tests):
                balanced, flags = balance(train_set, settings.seed)
                cells = []
                try:
                    model = train(settings.spec(classifier), balanced)
                except SingleClassTraining as e:
                    logger.warning(f"Сочетание {'+'.join(combo)}: {e}")
                    model = None
                for test_name in tests:
                    key = f"k{k}-{'+'.join(combo)}-to-{test_name}"
                    meta = {'k': k, 'train': list(combo), 'test': test_name, 'level': level}
                    cell = CellResult(key=key, meta=meta, flags=list(flags))
                    if model is None:
                        cell.flags.append('single_class_training')
                    else:
                        cell.report = evaluate(model, datasets[test_name])
                    cells.append(cell)
                return cells

            tasks.append(task)

    for cells in run_in_pool(settings.jobs, tasks):
        for cell in cells:
            result.add(cell)

    ordered = sorted(result.cells.values(), key=lambda c: (c.meta['k'], c.meta['train'], c.meta['test']))
    result.summary = [['k', 'train', 'test', 'auc', 'flags']] + [
        [str(c.meta['k']), '+'.join(c.meta['train']), c.meta['test'], _number(c.auc), ';'.join(sorted(set(c.flags)))]
        for c in ordered
    ]

    medians = [['k', 'pairs', 'evaluated', 'median_auc']]
    for k in range(1, len(names)):
        aucs = [c.auc for c in ordered if c.meta['k'] == k and c.auc is not None]
        pairs = sum(1 for c in ordered if c.meta['k'] == k)
        medians.append([str(k), str(pairs), str(len(aucs)), _number(statistics.median(aucs) if aucs else None)])
    result.tables['medians'] = medians

    heatmap = [['train'] + names]
    for train_name in names:
        row = [train_name]
        for test_name in names:
            cell = result.cells.get(f"k1-{train_name}-to-{test_name}")
            row.append(_number(cell.auc) if cell else '')
        heatmap.append(row)
    result.tables['heatmap_k1'] = heatmap
    return result


def rq5_cross_project(
    projects: list[LabeledProject],
    level: str = LEVEL_RELEASE,
    settings: ScenarioSettings = ScenarioSettings(),
    classifier: str = 'forest',
) -> ScenarioResult:
    """Межпроектное предсказание по наборам фич всей истории каждого проекта."""
    tasks = [
        (lambda project=project: assemble([project], level, FEATURE_SET_FOR_FILES, settings.metrics, 1))
        for project in projects
    ]
    datasets = {project.name: ds for project, ds in zip(projects, run_in_pool(settings.jobs, tasks))}
    return rq5_from_datasets(datasets, settings, classifier, level)


# Отчёт

def render_report(out_root: str | Path) -> tuple[str, list[list[str]]]:
    """
    Собрать все out/*/summary.csv в выровненную текстовую таблицу и общий CSV.

    Returns:
        (текст для консоли, строки report.csv)
    """
    root = Path(out_root)
    combined = []
    blocks = []
    for summary in sorted(root.glob('*/summary.csv')):
        rows = list(csv.reader(summary.read_text(encoding='utf-8').splitlines()))
        if not rows:
            continue
        name = summary.parent.name
        columns = max(len(row) for row in rows)
        widths = [max(len(row[i]) if i < len(row) else 0 for row in rows) for i in range(columns)]
        lines = [f"== {name} =="]
        for row in rows:
            lines.append('  '.join(value.ljust(widths[i]) for i, value in enumerate(row)).rstrip())
            combined.append([name] + row)
        blocks.append('\n'.join(lines))
    return '\n\n'.join(blocks) + ('\n' if blocks else ''), combined
