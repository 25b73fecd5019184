"""
Тесты сборки наборов, хронологического разбиения, SMOTE и обмена таблицами.
"""
import itertools

import numpy as np
import pytest

from errors import EmptyDataset, SchemaMismatch, TableIoError, TooFewMinority, TooFewReleases
from services.bug_label import CLEAN, DEFECTIVE
from services.dataset import (
    Dataset,
    Instance,
    assemble,
    characteristics,
    chronological_split,
    export_table,
    import_table,
    metric_set_attributes,
    minority_class,
    provenance_path,
    smote_balance,
    split_point,
)
from services.history import LEVEL_COMMIT, release_contexts
from services.metrics import FEATURE_METRIC_IDS, FILE_METRIC_IDS, feature_metrics


def make_dataset(defective: int, clean: int, width: int = 3, seed: int = 0, releases: int = 1) -> Dataset:
    rng = np.random.default_rng(seed)
    instances = []
    for index in range(defective + clean):
        label = DEFECTIVE if index < defective else CLEAN
        shift = 3.0 if label == DEFECTIVE else 0.0
        instances.append(Instance(
            project='synthetic',
            scope_index=index % releases,
            scope=f"r{index % releases}",
            name=f"item{index}",
            vector=tuple(float(v) for v in rng.normal(shift, 1.0, width)),
            label=label,
        ))
    return Dataset(tuple(f"m{i}" for i in range(width)), tuple(instances))


def test_alpha_feature_dataset(alpha_project):
    ds = assemble([alpha_project], metric_set='ProcStructMet')

    assert ds.attributes == FEATURE_METRIC_IDS
    assert [(i.scope, i.name, i.label) for i in ds.instances] == [
        ('v1.0', 'FEAT_A', DEFECTIVE),
        ('v1.0', 'FEAT_B', CLEAN),
        ('v2.0', 'FEAT_A', CLEAN),
        ('v2.0', 'FEAT_B', CLEAN),
    ]
    first = release_contexts(alpha_project.history)[0]
    expected = feature_metrics('FEAT_A', first)
    assert ds.instances[0].vector == tuple(expected[m] for m in FEATURE_METRIC_IDS)
    assert characteristics(ds) == {'total': 4, 'defective': 1, 'clean': 3, 'imbalance': 3.0}


def test_metric_set_columns(alpha_project):
    queiroz = assemble([alpha_project], metric_set='QueirozMet')
    assert queiroz.attributes == ('fcomm', 'fadev', 'fddev', 'fexp', 'foexp')
    assert len(metric_set_attributes('ProcMet')) == 8

    with pytest.raises(SchemaMismatch):
        metric_set_attributes('NoSuchSet')


def test_alpha_file_datasets(alpha_project):
    files = assemble([alpha_project], metric_set='FileMoser17')
    assert files.attributes == FILE_METRIC_IDS
    assert len(files) == 7
    assert {i.name for i in files.instances if i.label == DEFECTIVE} == {'parser.c'}

    combined = assemble([alpha_project], metric_set='FileCombined32')
    assert len(combined.attributes) == 32
    fnof = combined.attributes.index('fnof')
    first = {i.name: i.vector[fnof] for i in combined.instances if i.scope == 'v1.0'}
    assert first == {'README.md': 0, 'config.h': 0, 'parser.c': 1, 'util.c': 2}


def test_commit_level_dataset(alpha, alpha_project):
    ds = assemble([alpha_project], LEVEL_COMMIT, 'ProcStructMet')
    per_commit = {}
    for instance in ds.instances:
        per_commit.setdefault(instance.scope, set()).add(instance.name)
    assert per_commit == {
        alpha.shas['c1']: {'FEAT_B'},
        alpha.shas['c2']: {'FEAT_A', 'FEAT_B'},
        alpha.shas['c3']: {'FEAT_A'},
        alpha.shas['c6']: {'FEAT_A', 'FEAT_B'},
        alpha.shas['c7']: {'FEAT_A'},
    }


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        assemble([])


@pytest.mark.parametrize('releases, ratio, expected', [
    (10, 70, 7),
    (7, 70, 5),
    (3, 66, 2),
    (4, 50, 2),
    (2, 70, 1),
    (2, 99, 1),
    (5, 1, 1),
])
def test_split_point(releases, ratio, expected):
    assert split_point(releases, ratio) == expected


def test_chronological_split(alpha_project):
    ds = assemble([alpha_project], metric_set='ProcStructMet')
    train, test, spec = chronological_split(ds, 70)

    assert [i.scope for i in train.instances] == ['v1.0', 'v1.0']
    assert [i.scope for i in test.instances] == ['v2.0', 'v2.0']
    assert spec.train_releases == {'alpha': (0,)}
    assert spec.test_releases == {'alpha': (1,)}
    assert spec.ratio == {'alpha': '50:50'}


def test_split_keeps_releases_ordered():
    ds = make_dataset(10, 30, releases=10)
    train, test, spec = chronological_split(ds, {'synthetic': 70})
    assert max(i.scope_index for i in train.instances) < min(i.scope_index for i in test.instances)
    assert spec.ratio == {'synthetic': '70:30'}
    assert len(train) + len(test) == len(ds)


def test_too_few_releases():
    with pytest.raises(TooFewReleases):
        chronological_split(make_dataset(3, 3), 70)


def _parents(sample: np.ndarray, minority: np.ndarray) -> list[tuple[int, int]]:
    """Пары миноритарных экземпляров, на отрезке между которыми лежит sample."""
    found = []
    for a, b in itertools.permutations(range(len(minority)), 2):
        base, direction = minority[a], minority[b] - minority[a]
        axis = int(np.argmax(np.abs(direction)))
        if direction[axis] == 0:
            continue
        gap = (sample[axis] - base[axis]) / direction[axis]
        if -1e-9 <= gap < 1 and np.allclose(base + gap * direction, sample):
            found.append((a, b))
    return found


def test_smote_doubles_minority():
    train = make_dataset(8, 20)
    balanced = smote_balance(train, seed=7)

    assert balanced.instances[:len(train)] == train.instances
    assert balanced.class_counts() == {DEFECTIVE: 16, CLEAN: 20}

    names = [i.name for i in train.instances if i.label == DEFECTIVE]
    minority = np.array([i.vector for i in train.instances if i.label == DEFECTIVE])
    for t, instance in enumerate(balanced.instances[len(train):], start=1):
        base_name, _, suffix = instance.name.partition('#smote')
        assert suffix == str(t)
        assert base_name in names
        assert instance.label == DEFECTIVE
        assert _parents(np.array(instance.vector), minority)


def test_smote_stays_within_parent_bounds():
    rng = np.random.default_rng(11)
    instances = [
        Instance('p', 0, 'r0', f"i{index}", (float(rng.normal(0, 1000)), float(rng.random()), 4.0),
                 DEFECTIVE if index < 9 else CLEAN)
        for index in range(30)
    ]
    train = Dataset(('wide', 'narrow', 'constant'), tuple(instances))
    minority = np.array([i.vector for i in instances[:9]])

    for instance in smote_balance(train, seed=5).instances[len(train):]:
        sample = np.array(instance.vector)
        assert sample[2] == pytest.approx(4.0)
        pairs = _parents(sample, minority)
        assert pairs
        low = np.minimum(minority[pairs[0][0]], minority[pairs[0][1]])
        high = np.maximum(minority[pairs[0][0]], minority[pairs[0][1]])
        assert np.all(sample >= low - 1e-6) and np.all(sample <= high + 1e-6)


def test_smote_is_seeded():
    train = make_dataset(8, 20)
    assert smote_balance(train, seed=3) == smote_balance(train, seed=3)
    assert smote_balance(train, seed=3) != smote_balance(train, seed=4)


def test_smote_needs_six_minority_instances():
    with pytest.raises(TooFewMinority):
        smote_balance(make_dataset(5, 20))


def test_minority_class():
    assert minority_class(make_dataset(3, 3)) == DEFECTIVE
    assert minority_class(make_dataset(5, 2)) == CLEAN


def test_smote_leaves_test_untouched():
    ds = make_dataset(16, 40, releases=4)
    train, test, _ = chronological_split(ds, 50)
    balanced = smote_balance(train)
    assert all('#smote' not in i.name for i in test.instances)
    assert len(balanced) > len(train)


def _random_dataset(seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    width = int(rng.integers(1, 7))
    count = int(rng.integers(1, 30))
    instances = tuple(
        Instance(
            project=f"proj,{seed}",
            scope_index=int(rng.integers(0, 5)),
            scope=f"v\"{index}",
            name=f"src/file {index}.c",
            vector=tuple(float(v) for v in rng.normal(0, 10.0 ** rng.integers(-3, 6), width)),
            label=DEFECTIVE if rng.random() < 0.3 else CLEAN,
        )
        for index in range(count)
    )
    return Dataset(tuple(f"a{i}" for i in range(width)), instances)


@pytest.mark.parametrize('seed', range(50))
@pytest.mark.parametrize('fmt', ['csv', 'arff'])
def test_table_round_trip(tmp_path, seed, fmt):
    ds = _random_dataset(seed)
    path = tmp_path / f"table.{fmt}"
    export_table(ds, fmt, path)
    assert import_table(path, ds.attributes) == ds


def test_arff_writes_provenance(tmp_path, alpha_project):
    ds = assemble([alpha_project], metric_set='QueirozMet')
    path = tmp_path / 'queiroz.arff'
    export_table(ds, 'arff', path)

    text = path.read_text(encoding='utf-8')
    assert '@attribute fcomm numeric' in text
    assert '@attribute class {defective,clean}' in text
    assert provenance_path(path).exists()


def test_import_schema_errors(tmp_path):
    ds = make_dataset(2, 2)
    path = tmp_path / 'table.csv'
    export_table(ds, 'csv', path)

    with pytest.raises(SchemaMismatch):
        import_table(path, ('m0', 'm1'))

    header, *rows = path.read_text(encoding='utf-8').splitlines()
    (tmp_path / 'label.csv').write_text('\n'.join([header, rows[0].rsplit(',', 1)[0] + ',buggy']) + '\n')
    with pytest.raises(SchemaMismatch):
        import_table(tmp_path / 'label.csv')

    (tmp_path / 'ragged.csv').write_text('\n'.join([header, rows[0] + ',1']) + '\n')
    with pytest.raises(SchemaMismatch):
        import_table(tmp_path / 'ragged.csv')

    (tmp_path / 'header.csv').write_text('m0,m1,class\n1,2,clean\n')
    with pytest.raises(SchemaMismatch):
        import_table(tmp_path / 'header.csv')

    with pytest.raises(TableIoError):
        import_table(tmp_path / 'missing.csv')


def test_dataset_validation():
    with pytest.raises(SchemaMismatch):
        Dataset(('a',), (Instance('p', 0, 'r', 'x', (float('nan'),), CLEAN),))
    with pytest.raises(SchemaMismatch):
        Dataset(('a', 'b'), (Instance('p', 0, 'r', 'x', (1.0,), CLEAN),))


def test_project_attributes():
    ds = make_dataset(2, 2)
    projected = ds.project_attributes(['m2', 'm0'])
    assert projected.attributes == ('m2', 'm0')
    assert projected.instances[0].vector == (ds.instances[0].vector[2], ds.instances[0].vector[0])
    with pytest.raises(SchemaMismatch):
        ds.project_attributes(['nope'])
