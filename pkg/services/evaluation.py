"""
Сервис оценки классификаторов.
Матрица ошибок, precision/recall/F по классам и взвешенные, ROC и AUC,
ранжирование атрибутов ReliefF и влияние атрибутов (wrapper).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import auc, confusion_matrix, precision_recall_fscore_support, roc_curve
from sklearn.neighbors import KDTree
from sklearn.preprocessing import MinMaxScaler

from errors import SingleClassTest, TooFewInstances
from services.bug_label import CLASS_VALUES, CLEAN, DEFECTIVE
from services.dataset import Dataset
from services.learn import ClassifierSpec, Model, predict_labels, predict_scores, train
from utils.utils import format_float, run_in_pool

logger = logging.getLogger(__name__)

RELIEFF_NEIGHBORS = 10


@dataclass(frozen=True)
class Confusion:
    """Матрица ошибок; положительный класс - defective."""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def support(self, cls: str) -> int:
        return self.tp + self.fn if cls == DEFECTIVE else self.tn + self.fp

    def to_dict(self) -> dict:
        return {'tp': self.tp, 'fp': self.fp, 'fn': self.fn, 'tn': self.tn}


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f: float
    flagged: bool = False


@dataclass
class EvalReport:
    """Результат оценки модели на тестовой выборке."""
    confusion: Confusion
    per_class: dict[str, PRF]
    weighted: PRF
    roc: list[tuple[float, float]] = field(default_factory=list)
    auc: Optional[float] = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'confusion': self.confusion.to_dict(),
            'per_class': {
                cls: {'precision': m.precision, 'recall': m.recall, 'f': m.f, 'flagged': m.flagged}
                for cls, m in self.per_class.items()
            },
            'weighted': {'precision': self.weighted.precision, 'recall': self.weighted.recall, 'f': self.weighted.f},
            'fp_rate': fp_rate(self.confusion),
            'roc': [[fpr, tpr] for fpr, tpr in self.roc],
            'auc': self.auc,
            'flags': list(self.flags),
        }

    def roc_csv(self) -> str:
        lines = ['fpr,tpr']
        lines.extend(f"{format_float(fpr)},{format_float(tpr)}" for fpr, tpr in self.roc)
        return '\n'.join(lines) + '\n'


# порядок меток sklearn: defective (1), затем clean (0), как в CLASS_VALUES
TARGETS = [1, 0]


def _targets(labels: Sequence[str]) -> np.ndarray:
    return np.array([1 if label == DEFECTIVE else 0 for label in labels], dtype=int)


def confusion(truths: Sequence[str], predicted: Sequence[str]) -> Confusion:
    if not len(truths):
        return Confusion()
    (tp, fn), (fp, tn) = confusion_matrix(_targets(truths), _targets(predicted), labels=TARGETS).tolist()
    return Confusion(tp=tp, fp=fp, fn=fn, tn=tn)


def undefined_ratio(matrix: Confusion, cls: str) -> bool:
    """Precision или recall класса вычислены делением 0/0."""
    if cls == DEFECTIVE:
        return matrix.tp + matrix.fp == 0 or matrix.tp + matrix.fn == 0
    return matrix.tn + matrix.fn == 0 or matrix.tn + matrix.fp == 0


def class_scores(truths: Sequence[str], predicted: Sequence[str]) -> tuple[dict[str, PRF], PRF]:
    """
    Precision, recall и F-score по классам и взвешенные по числу экземпляров класса.

    Деление 0/0 даёт 0, класс с таким делением помечается флагом.

    Returns:
        ({класс: PRF}, взвешенный PRF)
    """
    y, guess = _targets(truths), _targets(predicted)
    matrix = confusion(truths, predicted)
    if not len(y):
        return {cls: PRF(0.0, 0.0, 0.0, True) for cls in CLASS_VALUES}, PRF(0.0, 0.0, 0.0)
    precision, recall, f, _ = precision_recall_fscore_support(y, guess, labels=TARGETS, zero_division=0)
    per_class = {
        cls: PRF(float(precision[i]), float(recall[i]), float(f[i]), undefined_ratio(matrix, cls))
        for i, cls in enumerate(CLASS_VALUES)
    }
    weighted = precision_recall_fscore_support(y, guess, labels=TARGETS, average='weighted', zero_division=0)
    return per_class, PRF(*(float(value) for value in weighted[:3]))


def fp_rate(matrix: Confusion) -> float:
    """FP / (FP + TN)."""
    negatives = matrix.fp + matrix.tn
    return matrix.fp / negatives if negatives else 0.0


def _check_classes(truths: np.ndarray) -> None:
    positives = int(truths.sum())
    if positives == 0 or positives == len(truths):
        raise SingleClassTest("В тестовой выборке только один класс, AUC не определён")


def roc_auc(truths: Sequence[str], scores: Sequence[float]) -> tuple[list[tuple[float, float]], float]:
    """
    ROC-кривая по всем различным порогам и AUC методом трапеций.

    Args:
        truths: истинные классы
        scores: оценки класса defective

    Returns:
        (точки (fpr, tpr) от (0,0) до (1,1), AUC)

    Raises:
        SingleClassTest: в truths один класс
    """
    y = _targets(truths)
    _check_classes(y)
    fpr, tpr, _ = roc_curve(y, np.asarray(scores, dtype=float), drop_intermediate=False)
    points = [(float(x), float(t)) for x, t in zip(fpr, tpr)]
    return points, float(auc(fpr, tpr))


def rank_auc(truths: Sequence[str], scores: Sequence[float]) -> float:
    """AUC как статистика Манна-Уитни (связи считаются как 0.5)."""
    y = _targets(truths)
    _check_classes(y)
    ranks = rankdata(np.asarray(scores, dtype=float))
    positives = int(y.sum())
    negatives = len(y) - positives
    return float((ranks[y == 1].sum() - positives * (positives + 1) / 2) / (positives * negatives))


def evaluate_scores(truths: Sequence[str], scores: Sequence[float]) -> EvalReport:
    """Построить отчёт по истинным классам и оценкам модели."""
    predicted = predict_labels(np.asarray(scores, dtype=float))
    matrix = confusion(truths, predicted)
    per_class, weighted = class_scores(truths, predicted)
    flags = [f"zero_division:{cls}" for cls in CLASS_VALUES if per_class[cls].flagged]
    try:
        roc, area = roc_auc(truths, scores)
    except SingleClassTest:
        roc, area = [], None
        flags.append('single_class_test')
    return EvalReport(confusion=matrix, per_class=per_class, weighted=weighted, roc=roc, auc=area, flags=flags)


def evaluate(model: Model, test: Dataset) -> EvalReport:
    """Оценить модель на тестовом наборе."""
    scores = predict_scores(model, test)
    return evaluate_scores([instance.label for instance in test.instances], scores)


def relieff_rank(
    ds: Dataset,
    neighbors: int = RELIEFF_NEIGHBORS,
    sample: Optional[int] = None,
    seed: int = 1,
) -> list[tuple[str, float]]:
    """
    Ранжировать атрибуты по весам ReliefF.

    Атрибуты нормируются min-max, расстояние - манхэттенское.

    Args:
        ds: набор данных
        neighbors: число ближайших попаданий и промахов
        sample: число опорных экземпляров (None - все)
        seed: seed выборки опорных экземпляров

    Returns:
        [(атрибут, вес)] по убыванию веса, при равенстве - по имени атрибута

    Raises:
        TooFewInstances: в каком-то классе меньше neighbors+1 экземпляров
    """
    counts = ds.class_counts()
    if min(counts.values()) < neighbors + 1:
        raise TooFewInstances(f"ReliefF требует {neighbors + 1} экземпляров каждого класса, есть {counts}")

    scaled = MinMaxScaler().fit_transform(ds.matrix())
    y = ds.targets()

    if sample is None or sample >= len(y):
        anchors = np.arange(len(y))
    else:
        anchors = np.sort(np.random.default_rng(seed).choice(len(y), size=sample, replace=False))

    members = {target: np.flatnonzero(y == target) for target in (0, 1)}
    trees = {target: KDTree(scaled[rows], metric='manhattan') for target, rows in members.items()}
    share = len(anchors) * neighbors
    weights = np.zeros(scaled.shape[1])
    for target, rows in members.items():
        own = anchors[y[anchors] == target]
        if not len(own):
            continue
        # сам опорный экземпляр тоже лежит в дереве своего класса
        hits = rows[trees[target].query(scaled[own], k=neighbors + 1, return_distance=False)]
        misses = members[1 - target][trees[1 - target].query(scaled[own], k=neighbors, return_distance=False)]
        for anchor, near, far in zip(own, hits, misses):
            near = near[near != anchor][:neighbors]
            weights -= np.abs(scaled[near] - scaled[anchor]).sum(axis=0) / share
            weights += np.abs(scaled[far] - scaled[anchor]).sum(axis=0) / share

    ranking = sorted(zip(ds.attributes, weights.tolist()), key=lambda item: (-item[1], item[0]))
    return ranking


def top_fraction(ranking: Sequence[tuple[str, float]], fraction: float) -> list[str]:
    """Первые floor(p*n + 0.5) атрибутов рейтинга."""
    count = int(math.floor(fraction * len(ranking) + 0.5))
    return [name for name, _ in ranking[:count]]


def _weighted_f(spec: ClassifierSpec, train_set: Dataset, test: Dataset) -> float:
    if not train_set.attributes:
        counts = train_set.class_counts()
        majority = DEFECTIVE if counts[DEFECTIVE] > counts[CLEAN] else CLEAN
        scores = np.full(len(test), 1.0 if majority == DEFECTIVE else 0.0)
        return evaluate_scores([i.label for i in test.instances], scores).weighted.f
    return evaluate(train(spec, train_set), test).weighted.f


def wrapper_influence(
    spec: ClassifierSpec,
    train_set: Dataset,
    test: Dataset,
    jobs: int = 1,
) -> dict[str, float]:
    """
    Влияние атрибутов: взвешенная F полной модели минус F без атрибута.

    Полная модель обучается один раз, затем по одному переобучению на атрибут.

    Returns:
        {атрибут: влияние в [-1, 1]}
    """
    base = _weighted_f(spec, train_set, test)

    def without(name: str) -> float:
        kept = [attribute for attribute in train_set.attributes if attribute != name]
        return _weighted_f(spec, train_set.project_attributes(kept), test.project_attributes(kept))

    tasks = [(lambda name=name: without(name)) for name in train_set.attributes]
    reduced = run_in_pool(jobs, tasks)
    influence = {name: base - value for name, value in zip(train_set.attributes, reduced)}
    logger.debug(f"Влияние атрибутов ({spec.kind}): {influence}")
    return influence


def influence_summary(influences: Iterable[dict[str, float]]) -> dict[str, tuple[float, float]]:
    """Среднее и стандартное отклонение влияния каждого атрибута по ячейкам."""
    collected: dict[str, list[float]] = {}
    for cell in influences:
        for name, value in cell.items():
            collected.setdefault(name, []).append(value)
    return {
        name: (float(np.mean(values)), float(np.std(values)))
        for name, values in collected.items()
    }
