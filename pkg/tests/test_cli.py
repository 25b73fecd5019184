"""
Тесты командной строки: коды выхода и полный прогон на alpha.
"""
import json

import pytest

from main import main


@pytest.fixture
def workspace(tmp_path, monkeypatch, alpha):
    """Каталог запуска с конфигурацией на alpha и собственным кэшем."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('FEATFORGE_CACHE', raising=False)
    config = {
        'projects': [{'name': 'alpha', 'repo': str(alpha.path)}],
        'cache_dir': str(tmp_path / 'cache'),
        'output_dir': str(tmp_path / 'out'),
        'hyperparameters': {'forest': {'trees': 10}},
    }
    (tmp_path / 'featforge.json').write_text(json.dumps(config), encoding='utf-8')
    return tmp_path


def test_unknown_command_is_usage_error():
    assert main(['bogus']) == 2


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(['mine', '--config', str(tmp_path / 'absent.json')]) == 2
    assert 'absent.json' in capsys.readouterr().err


def test_invalid_config_is_usage_error(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'projects': [{'name': 'a', 'repo': '.', 'split_ratio': 100}]}), encoding='utf-8')
    assert main(['mine', '--config', str(path)]) == 2


def test_unknown_project_is_usage_error(workspace):
    assert main(['mine', '--project', 'nope']) == 2


def test_mine_and_cache_hit(workspace, capsys):
    assert main(['mine']) == 0
    assert '8 коммитов (выгружено)' in capsys.readouterr().out
    commits = (workspace / 'cache' / 'alpha' / 'commits.jsonl').read_text(encoding='utf-8').splitlines()
    assert len(commits) == 8

    assert main(['mine']) == 0
    assert '(из кэша)' in capsys.readouterr().out


def test_label_before_mine_fails(workspace):
    assert main(['label']) == 1


def test_pipeline(workspace, capsys):
    assert main(['mine']) == 0
    assert main(['label']) == 0
    assert '1 исправляющих коммитов, 1 коммитов-источников' in capsys.readouterr().out

    assert main(['dataset', '--metric-set', 'ProcStructMet']) == 0
    output = capsys.readouterr().out
    assert 'alpha: разбиение 50:50' in output
    assert 'Флаг: smote_skipped' in output
    tables = workspace / 'out' / 'dataset'
    assert (tables / 'ProcStructMet-release-train.csv').exists()
    summary = json.loads((tables / 'ProcStructMet-release-summary.json').read_text(encoding='utf-8'))
    assert summary['characteristics']['all']['total'] == 4

    model = workspace / 'model.json'
    assert main(['train', '--input', str(tables / 'ProcStructMet-release-train.csv'),
                 '--classifier', 'nb', '--model', str(model)]) == 0
    assert model.exists()

    assert main(['evaluate', '--model', str(model), '--input', str(tables / 'ProcStructMet-release-test.csv'),
                 '--out', str(workspace / 'out')]) == 0
    output = capsys.readouterr().out
    assert 'Флаг: single_class_test' in output
    assert (workspace / 'out' / 'evaluate' / 'evaluation.json').exists()

    assert main(['scenario', 'rq4']) == 0
    assert (workspace / 'out' / 'rq4' / 'summary.csv').exists()
    # rq5 требует хотя бы два проекта
    assert main(['scenario', 'rq5']) == 2

    capsys.readouterr()
    assert main(['report', '--out', str(workspace / 'out')]) == 0
    assert '== rq4 ==' in capsys.readouterr().out
    assert (workspace / 'out' / 'report.csv').exists()


def test_evaluate_with_wrong_schema(workspace):
    assert main(['mine']) == 0
    assert main(['label']) == 0
    assert main(['dataset', '--metric-set', 'QueirozMet', '--no-smote']) == 0
    tables = workspace / 'out' / 'dataset'
    model = workspace / 'queiroz.json'
    assert main(['train', '--input', str(tables / 'QueirozMet-release-train.csv'),
                 '--classifier', 'tree', '--model', str(model)]) == 0

    assert main(['dataset', '--metric-set', 'ProcMet']) == 0
    assert main(['evaluate', '--model', str(model), '--input', str(tables / 'ProcMet-release-test.csv')]) == 1
