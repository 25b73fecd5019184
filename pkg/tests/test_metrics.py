"""
Тесты метрик фич и файлов.

Кроме точечных значений на alpha, все метрики релизного уровня сверяются
с независимым пересчётом из tests/oracle.py на всех трёх фикстурах.
"""
import math

import pytest

import oracle
from conftest import parser_c, util_c
from errors import FeatureNotInRelease
from services.dataset import load_labeled
from services.history import release_contexts
from services.metrics import (
    AGGREGATED_IDS,
    FEATURE_METRIC_IDS,
    FILE_METRIC_IDS,
    cyclomatic_complexity,
    count_loc,
    developer_experience,
    feature_metrics,
    file_process_metrics,
    geometric_mean,
    max_aggregate_to_file,
)

ALICE = 'alice<alice@example.org>'
BOB = 'bob<bob@example.org>'


@pytest.fixture(scope='module')
def alpha_release(alpha_project):
    return release_contexts(alpha_project.history)[0]


def test_feature_a_first_release(alpha_release):
    assert feature_metrics('FEAT_A', alpha_release) == pytest.approx({
        'fcomm': 2, 'fadev': 1, 'fddev': 1, 'fexp': 12, 'foexp': 12,
        'fmodd': 1.5, 'faddl': 30.5, 'freml': 0.5,
        'fnloc': 26, 'fcyco': 3.5, 'lofc': 4, 'scat': 2, 'tanga': 0, 'ndep': 2,
    })


def test_feature_b_first_release(alpha_release):
    values = feature_metrics('FEAT_B', alpha_release)
    assert values == pytest.approx({
        'fcomm': 2, 'fadev': 2, 'fddev': 2, 'fexp': math.sqrt(15 * 3),
        # при равенстве правок берётся автор с меньшим идентификатором
        'foexp': 3,
        'fmodd': 1, 'faddl': 18, 'freml': 0,
        'fnloc': 15, 'fcyco': 1, 'lofc': 2, 'scat': 1, 'tanga': 0, 'ndep': 1,
    })


def test_distinct_developers_accumulate(alpha_project):
    second = release_contexts(alpha_project.history)[1]
    values = feature_metrics('FEAT_A', second)
    assert values['fadev'] == 2
    assert values['fddev'] == 3


def test_header_macro_is_not_a_feature(alpha_release):
    assert 'CONFIG_H_' not in alpha_release.features
    with pytest.raises(FeatureNotInRelease):
        feature_metrics('CONFIG_H_', alpha_release)


def test_developer_experience(alpha_release):
    assert developer_experience(ALICE, alpha_release, {'parser.c'}) == 9
    assert developer_experience(ALICE, alpha_release, {'README.md'}) == 0
    assert developer_experience(BOB, alpha_release, {'parser.c', 'util.c'}) == 50


def test_geometric_mean():
    assert geometric_mean([4, 9]) == pytest.approx(6)
    assert geometric_mean([12]) == 12
    assert geometric_mean([0, 3]) == pytest.approx(1)
    assert geometric_mean([]) == 0


def test_geometric_mean_large_values():
    assert geometric_mean([1e200, 1e200, 1e200]) == pytest.approx(1e200)


def test_cyclomatic_complexity_and_loc():
    assert cyclomatic_complexity(parser_c(3)) == 6
    assert cyclomatic_complexity(util_c(2)) == 1
    assert cyclomatic_complexity('/* if (a) */\nputs("while || for");\n') == 1
    assert cyclomatic_complexity('x = a ? b : c;\nswitch (x) { case 1: break; }\n') == 3
    assert count_loc(parser_c(3)) == 37


def test_cyclomatic_complexity_skips_directives():
    assert cyclomatic_complexity('#if X\nint a;\n#endif\n') == 1
    assert cyclomatic_complexity('#if A\nint a;\n#elif A && B || C\nint b;\n#endif\n') == 1
    assert cyclomatic_complexity('#if defined(A) && \\\n    defined(B)\nif (a || b) {}\n#endif\n') == 3


def test_parser_file_metrics(alpha_release):
    values = file_process_metrics('parser.c', alpha_release)
    assert values == pytest.approx({
        'revi': 3, 'refa': 0, 'bugf': 0, 'auth': 2,
        'addl': 43, 'addm': 35, 'adda': 43 / 3,
        'reml': 1, 'remm': 1, 'rema': 1 / 3,
        'cchn': 44, 'cchm': 35, 'ccha': 44 / 3,
        'maxc': 3, 'avgc': 2,
        'aage': 4, 'wage': (4 * 35 + 3 * 5 + 2 * 3) / 43,
    })
    assert list(values) == list(FILE_METRIC_IDS)


def test_refactorings_and_fixes(alpha_project):
    first, second = release_contexts(alpha_project.history)
    assert file_process_metrics('config.h', first)['refa'] == 1
    assert file_process_metrics('parser.c', second)['bugf'] == 1
    assert file_process_metrics('parser.c', second)['aage'] == 7


def test_max_aggregate_to_file():
    vectors = {
        'A': {metric: 1.0 for metric in FEATURE_METRIC_IDS},
        'B': {metric: 2.0 for metric in FEATURE_METRIC_IDS},
    }
    vectors['A']['lofc'] = 10.0

    aggregated = max_aggregate_to_file('x.c', ['A', 'B'], vectors)
    assert list(aggregated) == list(AGGREGATED_IDS)
    assert aggregated['lofc'] == 10
    assert aggregated['fcomm'] == 2
    assert aggregated['fnof'] == 2

    empty = max_aggregate_to_file('y.c', [], vectors)
    assert set(empty.values()) == {0.0}


@pytest.mark.parametrize('name', ['alpha', 'beta', 'gamma'])
def test_release_metrics_match_oracle(name, store):
    expected_features, expected_files = oracle.release_metrics(store.project_dir(name))
    project = load_labeled(name, store)

    actual_features, actual_files = {}, {}
    for ctx in release_contexts(project.history):
        for feature in ctx.features:
            actual_features[(ctx.scope, feature)] = feature_metrics(feature, ctx)
        for path in ctx.changed_files:
            actual_files[(ctx.scope, path)] = file_process_metrics(path, ctx)

    assert expected_features
    assert sorted(actual_features) == sorted(expected_features)
    for key, values in expected_features.items():
        assert actual_features[key] == pytest.approx(values), key
    assert sorted(actual_files) == sorted(expected_files)
    for key, values in expected_files.items():
        assert actual_files[key] == pytest.approx(values), key
