"""
Тесты оценки: матрица ошибок, P/R/F, ROC/AUC, ReliefF и влияние атрибутов.
"""
import itertools

import numpy as np
import pytest

from errors import SingleClassTest, TooFewInstances
from services.bug_label import CLEAN, DEFECTIVE
from services.dataset import Dataset, Instance
from services.evaluation import (
    Confusion,
    class_scores,
    confusion,
    evaluate,
    evaluate_scores,
    fp_rate,
    influence_summary,
    rank_auc,
    relieff_rank,
    roc_auc,
    top_fraction,
    undefined_ratio,
    wrapper_influence,
)
from services.learn import ClassifierSpec, train


def labels_of(bits) -> list[str]:
    return [DEFECTIVE if bit else CLEAN for bit in bits]


def signal_dataset(count: int = 120, seed: int = 0) -> Dataset:
    """Атрибут signal почти совпадает с классом, noise случаен."""
    rng = np.random.default_rng(seed)
    instances = []
    for index in range(count):
        defective = index % 3 == 0
        instances.append(Instance(
            project='s',
            scope_index=0,
            scope='r0',
            name=f"i{index}",
            vector=(float(defective) + rng.normal(0, 0.1), float(rng.normal())),
            label=DEFECTIVE if defective else CLEAN,
        ))
    return Dataset(('signal', 'noise'), tuple(instances))


@pytest.mark.parametrize('seed', range(5))
def test_trapezoid_auc_equals_rank_auc(seed):
    rng = np.random.default_rng(seed)
    truths = labels_of(rng.random(1000) < 0.3)
    # округление даёт много связей
    scores = np.round(rng.random(1000), 1)

    points, auc = roc_auc(truths, scores)
    assert auc == pytest.approx(rank_auc(truths, scores), abs=1e-9)
    assert points[0] == (0.0, 0.0)
    assert points[-1] == (1.0, 1.0)
    assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(points, points[1:]))


def test_auc_extremes():
    truths = labels_of([1, 1, 0, 0])
    assert roc_auc(truths, [0.9, 0.8, 0.2, 0.1])[1] == 1.0
    assert roc_auc(truths, [0.1, 0.2, 0.8, 0.9])[1] == 0.0
    assert roc_auc(truths, [0.5, 0.5, 0.5, 0.5])[1] == 0.5
    with pytest.raises(SingleClassTest):
        roc_auc(labels_of([0, 0]), [0.1, 0.9])


def test_confusion_counts():
    matrix = confusion(labels_of([1, 1, 0, 0, 1]), labels_of([1, 0, 1, 0, 1]))
    assert matrix == Confusion(tp=2, fp=1, fn=1, tn=1)
    assert matrix.support(DEFECTIVE) == 3
    assert matrix.support(CLEAN) == 2
    assert fp_rate(matrix) == 0.5


def test_class_scores_over_small_matrices():
    for tp, fp, fn, tn in itertools.product(range(4), repeat=4):
        if tp + fp + fn + tn == 0:
            continue
        truths = labels_of([1] * tp + [0] * fp + [1] * fn + [0] * tn)
        predicted = labels_of([1] * tp + [1] * fp + [0] * fn + [0] * tn)
        matrix = confusion(truths, predicted)
        assert matrix == Confusion(tp, fp, fn, tn)

        per_class, _ = class_scores(truths, predicted)
        result = per_class[DEFECTIVE]
        assert result.precision == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
        assert result.recall == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)
        assert result.f == pytest.approx(2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
        assert result.flagged == (tp + fp == 0 or tp + fn == 0)
        assert result.flagged == undefined_ratio(matrix, DEFECTIVE)

        assert per_class[CLEAN].recall == pytest.approx(tn / (tn + fp) if tn + fp else 0.0)
        assert fp_rate(matrix) == (fp / (fp + tn) if fp + tn else 0.0)


@pytest.mark.parametrize('seed', range(5))
def test_weighted_recall_is_accuracy(seed):
    rng = np.random.default_rng(seed)
    truths = labels_of(rng.random(200) < 0.3)
    predicted = labels_of(rng.random(200) < 0.4)
    _, weighted = class_scores(truths, predicted)
    accuracy = sum(t == p for t, p in zip(truths, predicted)) / len(truths)
    assert weighted.recall == pytest.approx(accuracy)


@pytest.mark.parametrize('seed', range(5))
def test_negated_scores_mirror_auc(seed):
    rng = np.random.default_rng(seed)
    truths = labels_of(rng.random(300) < 0.3)
    scores = np.round(rng.random(300), 2)
    assert roc_auc(truths, -scores)[1] == pytest.approx(1 - roc_auc(truths, scores)[1])


def test_report_flags():
    report = evaluate_scores(labels_of([1, 0, 0, 0]), [0.1, 0.2, 0.3, 0.4])
    assert report.confusion == Confusion(tp=0, fp=0, fn=1, tn=3)
    assert 'zero_division:defective' in report.flags
    assert report.auc == 0.0

    single = evaluate_scores(labels_of([0, 0, 0]), [0.1, 0.6, 0.3])
    assert single.auc is None
    assert single.roc == []
    assert 'single_class_test' in single.flags


def test_weighted_scores():
    report = evaluate_scores(labels_of([1, 1, 0, 0, 0, 0]), [0.9, 0.2, 0.8, 0.1, 0.1, 0.1])
    defective, clean = report.per_class[DEFECTIVE], report.per_class[CLEAN]
    assert defective.f == pytest.approx(0.5)
    assert clean.f == pytest.approx(0.75)
    assert report.weighted.f == pytest.approx((2 * 0.5 + 4 * 0.75) / 6)


def test_evaluate_model_report():
    ds = signal_dataset()
    model = train(ClassifierSpec('nb'), ds)
    report = evaluate(model, signal_dataset(seed=1))

    data = report.to_dict()
    assert set(data) == {'confusion', 'per_class', 'weighted', 'fp_rate', 'roc', 'auc', 'flags'}
    assert data['auc'] > 0.95
    assert report.roc_csv().splitlines()[0] == 'fpr,tpr'


def test_relieff_prefers_informative_attribute():
    ranking = relieff_rank(signal_dataset())
    assert [name for name, _ in ranking] == ['signal', 'noise']
    assert ranking[0][1] > 0
    assert ranking[0][1] > ranking[1][1]


def test_relieff_sampling_is_seeded():
    ds = signal_dataset()
    assert relieff_rank(ds, sample=30, seed=2) == relieff_rank(ds, sample=30, seed=2)


def test_relieff_needs_enough_instances():
    with pytest.raises(TooFewInstances):
        relieff_rank(signal_dataset(count=20))


@pytest.mark.parametrize('size, fraction, expected', [
    (32, 1.0, 32),
    (32, 0.75, 24),
    (32, 0.5, 16),
    (17, 0.75, 13),
    (17, 0.5, 9),
])
def test_top_fraction(size, fraction, expected):
    ranking = [(f"m{i}", float(size - i)) for i in range(size)]
    selected = top_fraction(ranking, fraction)
    assert len(selected) == expected
    assert selected == [name for name, _ in ranking[:expected]]


def test_wrapper_influence():
    train_set, test = signal_dataset(seed=3), signal_dataset(seed=4)
    influence = wrapper_influence(ClassifierSpec('nb'), train_set, test)

    assert set(influence) == {'signal', 'noise'}
    assert influence['signal'] > influence['noise']
    assert influence['signal'] > 0.3
    assert all(-1 <= value <= 1 for value in influence.values())


def test_influence_of_last_attribute_uses_majority_baseline():
    ds = signal_dataset().project_attributes(['signal'])
    influence = wrapper_influence(ClassifierSpec('tree'), ds, signal_dataset(seed=5).project_attributes(['signal']))
    assert influence['signal'] > 0


def test_influence_summary():
    summary = influence_summary([{'a': 0.1, 'b': 0.0}, {'a': 0.3, 'b': 0.0}])
    assert summary['a'] == pytest.approx((0.2, 0.1))
    assert summary['b'] == (0.0, 0.0)


def test_relieff_ignores_instance_order():
    ds = signal_dataset()
    order = np.random.default_rng(7).permutation(len(ds))
    shuffled = Dataset(ds.attributes, tuple(ds.instances[i] for i in order))

    expected = dict(relieff_rank(ds))
    actual = dict(relieff_rank(shuffled))
    assert actual.keys() == expected.keys()
    for name, weight in expected.items():
        assert actual[name] == pytest.approx(weight, abs=1e-12)
