"""
Сервис обучения классификаторов.
Семь классификаторов, реализованных на numpy: дерево решений (C4.5),
случайный лес, гауссовский наивный Байес, k ближайших соседей,
логистическая регрессия, линейный SVM и многослойный перцептрон.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy.special import expit
from sklearn.neighbors import NearestNeighbors
from sklearn.preprocessing import MinMaxScaler

from errors import EmptyDataset, SchemaMismatch, SingleClassTraining, TableIoError, UsageError
from services.bug_label import CLEAN, DEFECTIVE
from services.dataset import Dataset
from utils.utils import atomic_write_text

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
THRESHOLD = 0.5

CLASSIFIER_KINDS = ('tree', 'forest', 'nb', 'knn', 'logreg', 'svm', 'mlp')
SCALED_KINDS = ('knn', 'logreg', 'svm', 'mlp')

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    'tree': {'min_leaf': 2},
    'forest': {'trees': 200, 'bootstrap': True, 'min_leaf': 2, 'max_features': None},
    'nb': {'var_floor': 1e-9},
    'knn': {'k': 1},
    'logreg': {'lr': 0.1, 'epochs': 1000, 'l2': 1e-8},
    'svm': {'lr': 0.1, 'epochs': 1000, 'c': 1.0},
    'mlp': {'layers': [13, 13, 13], 'lr': 0.3, 'momentum': 0.2, 'epochs': 500},
}


@dataclass(frozen=True)
class ClassifierSpec:
    """Вид классификатора, гиперпараметры и seed."""
    kind: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 1

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise UsageError(f"Неизвестный классификатор: {self.kind}")
        params = self.params
        if self.kind == 'forest' and int(params['trees']) < 1:
            raise UsageError("Число деревьев леса должно быть не меньше 1")
        if self.kind == 'mlp' and (not params['layers'] or any(int(size) < 1 for size in params['layers'])):
            raise UsageError("Размеры скрытых слоёв перцептрона должны быть не меньше 1")
        if self.kind == 'knn' and int(params['k']) < 1:
            raise UsageError("k должно быть не меньше 1")

    @property
    def params(self) -> dict[str, Any]:
        merged = dict(DEFAULT_HYPERPARAMETERS[self.kind])
        merged.update(self.hyperparameters)
        return merged

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'hyperparameters': self.params, 'seed': self.seed}


@dataclass(frozen=True)
class Model:
    """Обученная модель: схема, параметры и min-max нормировка обучающих данных."""
    spec: ClassifierSpec
    attributes: tuple[str, ...]
    parameters: dict[str, Any]
    scaler: MinMaxScaler

    def scale(self, matrix: np.ndarray) -> np.ndarray:
        return self.scaler.transform(matrix)


# Дерево решений

def _entropy(positives: np.ndarray, counts: np.ndarray) -> np.ndarray:
    positives = np.asarray(positives, dtype=float)
    counts = np.asarray(counts, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        p = np.where(counts > 0, positives / np.maximum(counts, 1), 0.0)
        q = 1.0 - p
        h = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
              + np.where(q > 0, q * np.log2(np.where(q > 0, q, 1)), 0.0))
    return h


def _best_threshold(x: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[tuple[float, float, float]]:
    """Лучший порог атрибута по приросту информации: (порог, прирост, gain ratio)."""
    n = len(x)
    order = np.argsort(x, kind='stable')
    xs, ys = x[order], y[order]
    cum_pos = np.cumsum(ys)
    total_pos = cum_pos[-1]

    split_after = np.arange(min_leaf - 1, n - min_leaf)
    if split_after.size == 0:
        return None
    split_after = split_after[xs[split_after] < xs[split_after + 1]]
    if split_after.size == 0:
        return None

    left_n = split_after + 1
    right_n = n - left_n
    left_pos = cum_pos[split_after]
    right_pos = total_pos - left_pos
    parent = _entropy(np.array([total_pos]), np.array([n]))[0]
    children = (left_n * _entropy(left_pos, left_n) + right_n * _entropy(right_pos, right_n)) / n
    gains = parent - children

    best = int(np.argmax(gains))
    gain = float(gains[best])
    if gain <= 1e-12:
        return None
    fraction = left_n[best] / n
    split_info = -(fraction * math.log2(fraction) + (1 - fraction) * math.log2(1 - fraction))
    threshold = float((xs[split_after[best]] + xs[split_after[best] + 1]) / 2)
    return threshold, gain, gain / split_info


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    min_leaf: int,
    rng: Optional[np.random.Generator] = None,
    max_features: Optional[int] = None,
) -> dict:
    """
    Вырастить дерево C4.5 без обрезки (итеративно).

    В каждом узле выбирается атрибут с максимальным gain ratio среди
    кандидатов с приростом не ниже среднего.
    """
    root: dict = {}
    stack = [(root, np.arange(len(y)))]
    n_attributes = x.shape[1]
    while stack:
        node, index = stack.pop()
        node_y = y[index]
        positives = int(node_y.sum())
        node['p'] = positives / len(index)
        node['n'] = int(len(index))
        if positives in (0, len(index)) or len(index) < 2 * min_leaf:
            continue

        if rng is not None and max_features is not None and max_features < n_attributes:
            candidates = np.sort(rng.choice(n_attributes, size=max_features, replace=False))
        else:
            candidates = np.arange(n_attributes)

        found = []
        for attribute in candidates:
            result = _best_threshold(x[index, attribute], node_y, min_leaf)
            if result is not None:
                found.append((int(attribute), *result))
        if not found:
            continue
        mean_gain = sum(gain for _, _, gain, _ in found) / len(found)
        eligible = [item for item in found if item[2] >= mean_gain - 1e-12]
        attribute, threshold, _, _ = max(eligible, key=lambda item: (item[3], -item[0]))

        mask = x[index, attribute] <= threshold
        node['attr'] = attribute
        node['threshold'] = threshold
        node['left'], node['right'] = {}, {}
        stack.append((node['right'], index[~mask]))
        stack.append((node['left'], index[mask]))
    return root


def _tree_score(node: dict, vector: np.ndarray) -> float:
    while 'attr' in node:
        node = node['left'] if vector[node['attr']] <= node['threshold'] else node['right']
    return node['p']


# Линейные модели

def logreg_loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    x: np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """
    Функция потерь логистической регрессии (средняя кросс-энтропия + L2) и её градиент.

    Returns:
        (потери, градиент по весам, градиент по смещению)
    """
    z = x @ weights + bias
    p = expit(z)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * weights @ weights)
    error = p - y
    grad_w = x.T @ error / len(y) + l2 * weights
    grad_b = float(np.mean(error))
    return loss, grad_w, grad_b


def _train_logreg(x: np.ndarray, y: np.ndarray, params: dict) -> dict:
    weights = np.zeros(x.shape[1])
    bias = 0.0
    for _ in range(int(params['epochs'])):
        _, grad_w, grad_b = logreg_loss_and_gradient(weights, bias, x, y, float(params['l2']))
        weights -= params['lr'] * grad_w
        bias -= params['lr'] * grad_b
    return {'weights': weights, 'bias': bias}


def _train_svm(x: np.ndarray, y: np.ndarray, params: dict) -> dict:
    signs = np.where(y == 1, 1.0, -1.0)
    n = len(y)
    reg = 1.0 / (float(params['c']) * n)
    weights = np.zeros(x.shape[1])
    bias = 0.0
    for _ in range(int(params['epochs'])):
        margins = signs * (x @ weights + bias)
        active = margins < 1
        grad_w = reg * weights - (signs[active, None] * x[active]).sum(axis=0) / n
        grad_b = -float(signs[active].sum()) / n
        weights -= params['lr'] * grad_w
        bias -= params['lr'] * grad_b
    return {'weights': weights, 'bias': bias}


# Многослойный перцептрон

def mlp_forward(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray) -> list[np.ndarray]:
    """Активации всех слоёв; последняя - вероятность класса defective."""
    activations = [x]
    for w, b in zip(weights, biases):
        activations.append(expit(activations[-1] @ w + b))
    return activations


def mlp_loss_and_gradients(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """
    Средняя кросс-энтропия перцептрона и градиенты обратным распространением.

    Returns:
        (потери, градиенты весов, градиенты смещений)
    """
    activations = mlp_forward(weights, biases, x)
    output = activations[-1][:, 0]
    eps = 1e-12
    loss = float(-np.mean(y * np.log(output + eps) + (1 - y) * np.log(1 - output + eps)))

    n = len(y)
    delta = (output - y)[:, None] / n
    grad_w = [np.empty(0)] * len(weights)
    grad_b = [np.empty(0)] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer:
            a = activations[layer]
            delta = (delta @ weights[layer].T) * a * (1 - a)
    return loss, grad_w, grad_b


def _init_mlp(sizes: list[int], rng: np.random.Generator) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _train_mlp(x: np.ndarray, y: np.ndarray, params: dict, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    sizes = [x.shape[1]] + [int(size) for size in params['layers']] + [1]
    weights, biases = _init_mlp(sizes, rng)
    velocity_w = [np.zeros_like(w) for w in weights]
    velocity_b = [np.zeros_like(b) for b in biases]
    lr, momentum = float(params['lr']), float(params['momentum'])

    for _ in range(int(params['epochs'])):
        for i in rng.permutation(len(y)):
            _, grad_w, grad_b = mlp_loss_and_gradients(weights, biases, x[i:i + 1], y[i:i + 1])
            for layer in range(len(weights)):
                velocity_w[layer] = momentum * velocity_w[layer] - lr * grad_w[layer]
                velocity_b[layer] = momentum * velocity_b[layer] - lr * grad_b[layer]
                weights[layer] += velocity_w[layer]
                biases[layer] += velocity_b[layer]
    return {'weights': weights, 'biases': biases}


# Обучение и предсказание

def _gaussian_nb(x: np.ndarray, y: np.ndarray, params: dict) -> dict:
    floor = float(params['var_floor'])
    stats = {}
    for label, value in ((DEFECTIVE, 1), (CLEAN, 0)):
        rows = x[y == value]
        stats[label] = {
            'prior': len(rows) / len(y),
            'mean': rows.mean(axis=0),
            'var': np.maximum(rows.var(axis=0), floor),
        }
    return stats


def _nb_log_likelihood(stats: dict, x: np.ndarray) -> np.ndarray:
    mean, var = np.asarray(stats['mean']), np.asarray(stats['var'])
    return (math.log(stats['prior'])
            - 0.5 * np.sum(np.log(2 * np.pi * var) + (x - mean) ** 2 / var, axis=1))


def train(spec: ClassifierSpec, train_set: Dataset) -> Model:
    """
    Обучить классификатор.

    knn, logreg, svm и mlp обучаются на min-max нормированных атрибутах,
    tree, forest и nb - на исходных значениях.

    Args:
        spec: классификатор и гиперпараметры
        train_set: обучающий набор

    Returns:
        Model

    Raises:
        SingleClassTraining: в наборе один класс
    """
    if not len(train_set):
        raise EmptyDataset("Обучающий набор пуст")
    x = train_set.matrix()
    y = train_set.targets()
    if y.min() == y.max():
        raise SingleClassTraining(f"Обучающий набор содержит только класс {train_set.instances[0].label}")

    scaler = MinMaxScaler().fit(x)
    params = spec.params
    scaled = scaler.transform(x)
    kind = spec.kind

    if kind == 'tree':
        parameters = {'tree': _grow_tree(x, y, int(params['min_leaf']))}
    elif kind == 'forest':
        max_features = params['max_features'] or int(math.floor(math.log2(x.shape[1]))) + 1
        max_features = min(int(max_features), x.shape[1])
        trees = []
        for child in np.random.SeedSequence(spec.seed).spawn(int(params['trees'])):
            rng = np.random.default_rng(child)
            rows = rng.integers(len(y), size=len(y)) if params['bootstrap'] else np.arange(len(y))
            trees.append(_grow_tree(x[rows], y[rows], int(params['min_leaf']), rng, max_features))
        parameters = {'trees': trees}
    elif kind == 'nb':
        parameters = _gaussian_nb(x, y, params)
    elif kind == 'knn':
        parameters = {'points': scaled, 'targets': y}
    elif kind == 'logreg':
        parameters = _train_logreg(scaled, y, params)
    elif kind == 'svm':
        parameters = _train_svm(scaled, y, params)
    else:
        parameters = _train_mlp(scaled, y, params, spec.seed)

    logger.debug(f"Обучен {kind} на {len(y)} экземплярах")
    return Model(spec=spec, attributes=train_set.attributes, parameters=parameters, scaler=scaler)


def _scores(model: Model, x: np.ndarray) -> np.ndarray:
    kind = model.spec.kind
    p = model.parameters
    if kind == 'tree':
        return np.array([_tree_score(p['tree'], row) for row in x])
    if kind == 'forest':
        return np.array([np.mean([_tree_score(tree, row) for tree in p['trees']]) for row in x])
    if kind == 'nb':
        diff = _nb_log_likelihood(p[DEFECTIVE], x) - _nb_log_likelihood(p[CLEAN], x)
        return expit(diff)

    scaled = model.scale(x)
    if kind == 'knn':
        targets = np.asarray(p['targets'])
        k = min(int(model.spec.params['k']), len(targets))
        nearest = NearestNeighbors(n_neighbors=k).fit(p['points']).kneighbors(scaled, return_distance=False)
        return targets[nearest].mean(axis=1)
    if kind in ('logreg', 'svm'):
        return expit(scaled @ np.asarray(p['weights']) + p['bias'])
    return mlp_forward(p['weights'], p['biases'], scaled)[-1][:, 0]


def predict_scores(model: Model, ds: Dataset) -> np.ndarray:
    """
    Вероятности класса defective для всех экземпляров набора.

    Raises:
        SchemaMismatch: атрибуты набора отличаются от обучающих
    """
    if ds.attributes != model.attributes:
        raise SchemaMismatch("Атрибуты набора не совпадают с атрибутами обучающей выборки")
    if not len(ds):
        return np.zeros(0)
    return np.clip(_scores(model, ds.matrix()), 0.0, 1.0)


def predict_proba(model: Model, vector) -> float:
    """
    Вероятность класса defective для одного вектора.

    Raises:
        SchemaMismatch: длина вектора отличается от числа атрибутов модели
    """
    row = np.asarray(vector, dtype=float)
    if row.ndim != 1 or len(row) != len(model.attributes):
        raise SchemaMismatch(f"Ожидается вектор из {len(model.attributes)} значений")
    return float(np.clip(_scores(model, row[None, :])[0], 0.0, 1.0))


def predict_labels(scores: np.ndarray) -> list[str]:
    return [DEFECTIVE if score >= THRESHOLD else CLEAN for score in scores]


# Сериализация

def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {key: _to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(item) for item in value]
    return value


def _from_json(kind: str, parameters: dict) -> dict:
    if kind in ('logreg', 'svm'):
        return {'weights': np.asarray(parameters['weights'], dtype=float), 'bias': float(parameters['bias'])}
    if kind == 'mlp':
        return {
            'weights': [np.asarray(w, dtype=float) for w in parameters['weights']],
            'biases': [np.asarray(b, dtype=float) for b in parameters['biases']],
        }
    if kind == 'knn':
        return {'points': np.asarray(parameters['points'], dtype=float), 'targets': np.asarray(parameters['targets'])}
    if kind == 'nb':
        return {
            label: {key: (np.asarray(v, dtype=float) if key != 'prior' else float(v)) for key, v in stats.items()}
            for label, stats in parameters.items()
        }
    return parameters


def _scaler_from_bounds(low, high) -> MinMaxScaler:
    # две строки с минимумами и максимумами восстанавливают ту же нормировку
    return MinMaxScaler().fit(np.vstack([np.asarray(low, dtype=float), np.asarray(high, dtype=float)]))


def model_to_dict(model: Model) -> dict:
    return {
        'version': MODEL_FORMAT_VERSION,
        'spec': model.spec.to_dict(),
        'attributes': list(model.attributes),
        'scaler': {'low': _to_jsonable(model.scaler.data_min_), 'high': _to_jsonable(model.scaler.data_max_)},
        'parameters': _to_jsonable(model.parameters),
    }


def model_from_dict(data: dict) -> Model:
    if data.get('version') != MODEL_FORMAT_VERSION:
        raise SchemaMismatch(f"Неподдерживаемая версия модели: {data.get('version')}")
    spec_data = data['spec']
    spec = ClassifierSpec(spec_data['kind'], spec_data['hyperparameters'], int(spec_data['seed']))
    return Model(
        spec=spec,
        attributes=tuple(data['attributes']),
        parameters=_from_json(spec.kind, data['parameters']),
        scaler=_scaler_from_bounds(data['scaler']['low'], data['scaler']['high']),
    )


def save_model(model: Model, path: str | Path) -> None:
    """Сохранить модель в версионированный JSON."""
    atomic_write_text(path, json.dumps(model_to_dict(model), sort_keys=True) + '\n')


def load_model(path: str | Path) -> Model:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise TableIoError(f"Не удалось прочитать модель {path}: {e}")
    return model_from_dict(data)
