"""
Общие фикстуры тестов: git-репозитории с фиксированными авторами и датами.

alpha - 8 коммитов, релизы v1.0 (c1..c5) и v2.0 (c6..c8), фичи FEAT_A и FEAT_B,
макрос заголовка CONFIG_H_, одна ошибка (внесена c3, исправлена c7).
beta - переименование, удаление файла, #else, #ifndef, guard __NET_H__.
gamma - 12 сгенерированных коммитов, 4 релиза, вложенные фичи.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import git
import pytest

from cache import MiningCache
from commands.mining_commands import label_project, mine_project
from config import ProjectEntry
from services.dataset import LabeledProject, load_labeled

T0 = 1577836800
WEEK = 7 * 24 * 3600


@dataclass
class Step:
    author: str
    message: str
    files: dict[str, Optional[str]] = field(default_factory=dict)
    tag: Optional[str] = None
    rename: Optional[tuple[str, str]] = None


@dataclass
class FixtureRepo:
    name: str
    path: Path
    shas: dict[str, str]

    def entry(self) -> ProjectEntry:
        return ProjectEntry(name=self.name, repo=str(self.path))


def build_repo(path: Path, steps: list[Step], prefix: str = 'c') -> dict[str, str]:
    """Создать репозиторий по шагам; коммит i датирован T0 + (i-1) недель."""
    path.mkdir(parents=True, exist_ok=True)
    repo = git.Repo.init(path)
    shas = {}
    for number, step in enumerate(steps, start=1):
        if step.rename:
            repo.git.mv(*step.rename)
        for rel, text in step.files.items():
            if text is None:
                repo.index.remove([rel], working_tree=True)
                continue
            target = path / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding='utf-8', newline='\n')
            repo.index.add([rel])
        actor = git.Actor(step.author, f"{step.author}@example.org")
        date = f"{T0 + (number - 1) * WEEK} +0000"
        commit = repo.index.commit(
            step.message,
            author=actor,
            committer=actor,
            author_date=date,
            commit_date=date,
        )
        shas[f"{prefix}{number}"] = commit.hexsha
        if step.tag:
            repo.create_tag(step.tag, ref=commit)
    repo.close()
    return shas


# alpha

def parser_c(stage: int) -> str:
    """parser.c: 1 - исходный, 2 - после c2, 3 - после c3, 4 - после исправления c7."""
    lines = ['#include <stdio.h>', '#include "config.h"', '']
    if stage >= 2:
        lines += ['static int ext_enabled = 0;', '']
    lines += [
        'struct token {',
        '    int kind;',
        '    int flags;',
        '    const char *text;',
        '};',
        '',
        'static int parse_number(const char *p)',
        '{',
        '    int value = 0;',
        "    while (*p >= '0' && *p <= '9') {",
        "        value = value * 10 + (*p - '0');",
        '        p++;',
        '    }',
        '    return value;',
        '}',
        '',
        'int parse_token(struct token *tok)',
        '{',
        '    if (tok == NULL || tok->text == NULL) {',
        '        return -1;',
        '    }',
    ]
    if stage >= 2:
        lines += ['#ifdef FEAT_A', '    ext_enabled = 1;']
        if stage == 3:
            lines += ['    tok->flags |= 2;']
        if stage >= 3:
            lines += ['    tok->kind = tok->kind + 1;']
        lines += ['#endif']
    lines += [
        '    if (tok->kind == 1) {',
        '        return parse_number(tok->text);',
        '    }',
        '    return 0;',
        '}',
        '',
        'int parser_ready(void)',
        '{',
        '    return ext_enabled;' if stage >= 3 else '    return 1;',
        '}',
        '/* end of parser.c */',
    ]
    return '\n'.join(lines) + '\n'


def util_c(stage: int) -> str:
    """util.c: 1 - исходный, 2 - с вложенной FEAT_A, 3 - после c6."""
    lines = [
        '#include "config.h"',
        '',
        'int util_flags = 0;',
        '',
        'void util_init(void)',
        '{',
        '#ifdef FEAT_B',
        '    util_flags = 8;' if stage >= 3 else '    util_flags = 4;',
    ]
    if stage >= 2:
        lines += ['#ifdef FEAT_A', '    util_flags |= 1;', '#endif']
    lines += [
        '#endif',
        '}',
        '',
        'int util_get(void)',
        '{',
        '    return util_flags;',
        '}',
    ]
    return '\n'.join(lines) + '\n'


def config_h(version: int) -> str:
    return f"#ifndef CONFIG_H_\n#define CONFIG_H_\n\n#define PARSER_VERSION {version}\n\n#endif\n"


README_V1 = '# parser\n\nA tiny tokenizer.\n'
README_V2 = README_V1 + '\nRelease 2.0 tunes util flags.\n'

ALPHA_STEPS = [
    Step('bob', 'Initial import', {'config.h': config_h(1), 'parser.c': parser_c(1), 'util.c': util_c(1)}),
    Step('alice', 'Add FEAT_A support', {'parser.c': parser_c(2), 'util.c': util_c(2)}),
    Step('alice', 'Extend FEAT_A parsing', {'parser.c': parser_c(3)}),
    Step('bob', 'Add README', {'README.md': README_V1}),
    Step('bob', 'Refactor config header', {'config.h': config_h(2)}, tag='v1.0'),
    Step('bob', 'Tune util flags', {'util.c': util_c(3)}),
    Step('carol', 'Fix flag handling in parser', {'parser.c': parser_c(4)}),
    Step('bob', 'Describe release 2.0 in README', {'README.md': README_V2}, tag='v2.0'),
]


# beta

NET_H_V1 = '\n'.join([
    '#ifndef __NET_H__',
    '#define __NET_H__',
    '',
    'int net_open(int port);',
    '#ifdef USE_IPV6',
    'int net_open6(int port);',
    '#endif',
    '',
    '#endif',
]) + '\n'

NET_H_V2 = NET_H_V1.replace('int net_open6(int port);\n', 'int net_open6(int port);\nint net_close6(void);\n')


def net_c(stage: int) -> str:
    """net.c/network.c: 1 - исходный, 2 - IPv6, 3 - после исправления, 4 - с уровнем логирования."""
    lines = [
        '#include "net.h"',
        '',
        'static int opened = 0;',
        '',
        'int net_open(int port)',
        '{',
        '#ifdef USE_IPV6',
        '    if (port > 0 && opened == 0) {',
        '        opened = 6;',
    ]
    if stage >= 2:
        lines += ['        net_bind6(port);']
    if stage == 2:
        lines += ['        opened += 1;']
    lines += [
        '    }',
        '#else',
        '    opened = 4;',
        '#endif',
        '#ifndef NO_LOG',
        '    log_open(port);',
    ]
    if stage >= 4:
        lines += ['    log_level(2);']
    lines += [
        '#endif',
        '    return opened;',
        '}',
    ]
    return '\n'.join(lines) + '\n'


LEGACY_C = '#ifdef USE_LEGACY\nint legacy_mode = 1;\n#endif\n'

BETA_STEPS = [
    Step('dan', 'Initial network layer', {'net.h': NET_H_V1, 'net.c': net_c(1), 'legacy.c': LEGACY_C}),
    Step('erin', 'Add IPv6 sockets', {'net.c': net_c(2)}, tag='r1'),
    Step('frank', 'Move network sources', rename=('net.c', 'network.c')),
    Step('dan', 'Remove legacy code', {'legacy.c': None}),
    Step('erin', 'Fix ipv6 error path', {'network.c': net_c(3)}, tag='r2'),
    Step('frank', 'Add logging option', {'network.c': net_c(4)}),
    Step('dan', 'Refactor net header', {'net.h': NET_H_V2}, tag='r3'),
]


# gamma

GAMMA_FEATURES = ('FEAT_ONE', 'FEAT_TWO', 'FEAT_THREE')
GAMMA_AUTHORS = ('gina', 'hank', 'ivy')


def core_c(bodies: dict[str, list[str]]) -> str:
    lines = ['#include <stdlib.h>', '', 'int core_state = 0;', '', 'void core_run(void)', '{']
    lines += ['#ifdef FEAT_ONE', *bodies['FEAT_ONE'], '#endif']
    lines += ['#ifdef FEAT_TWO', *bodies['FEAT_TWO']]
    lines += ['#ifdef FEAT_THREE', *bodies['FEAT_THREE'], '#endif']
    lines += ['#endif', '    if (core_state > 10 || core_state < 0) {', '        core_state = 0;', '    }', '}']
    return '\n'.join(lines) + '\n'


def gamma_steps() -> list[Step]:
    bodies = {name: [f"    core_state = {index + 1};"] for index, name in enumerate(GAMMA_FEATURES)}
    extra = 'int extra_base = 0;\n'
    steps = [Step('gina', 'Initial core', {'core.c': core_c(bodies), 'extra.c': extra})]
    for i in range(1, 12):
        feature = GAMMA_FEATURES[i % 3]
        if i % 4 == 0:
            bodies[feature].pop()
            message = f"Fix overflow in {feature.lower()}"
        else:
            bodies[feature].append(f"    core_state += {i};")
            message = f"Tune {feature.lower()} step {i}"
        files = {'core.c': core_c(bodies)}
        if i % 5 == 0:
            extra += f"int extra_{i} = {i};\n"
            files['extra.c'] = extra
        tag = f"g{i // 3 + 1}" if i % 3 == 2 else None
        steps.append(Step(GAMMA_AUTHORS[i % 3], message, files, tag=tag))
    return steps


def _fixture(tmp_path_factory, name: str, steps: list[Step], prefix: str) -> FixtureRepo:
    path = tmp_path_factory.mktemp(f"repo-{name}")
    return FixtureRepo(name, path, build_repo(path, steps, prefix))


@pytest.fixture(scope='session')
def alpha(tmp_path_factory) -> FixtureRepo:
    return _fixture(tmp_path_factory, 'alpha', ALPHA_STEPS, 'c')


@pytest.fixture(scope='session')
def beta(tmp_path_factory) -> FixtureRepo:
    return _fixture(tmp_path_factory, 'beta', BETA_STEPS, 'b')


@pytest.fixture(scope='session')
def gamma(tmp_path_factory) -> FixtureRepo:
    return _fixture(tmp_path_factory, 'gamma', gamma_steps(), 'g')


@pytest.fixture(scope='session')
def store(tmp_path_factory, alpha, beta, gamma) -> MiningCache:
    """Отдельный кэш с выгруженными и размеченными фикстурами."""
    mining_cache = MiningCache()
    mining_cache.open(tmp_path_factory.mktemp('cache'))
    for fixture in (alpha, beta, gamma):
        mine_project(fixture.entry(), mining_cache)
        label_project(fixture.entry(), None, mining_cache)
    return mining_cache


@pytest.fixture(scope='session')
def alpha_project(store) -> LabeledProject:
    return load_labeled('alpha', store)


@pytest.fixture(scope='session')
def beta_project(store) -> LabeledProject:
    return load_labeled('beta', store)


@pytest.fixture(scope='session')
def gamma_project(store) -> LabeledProject:
    return load_labeled('gamma', store)
