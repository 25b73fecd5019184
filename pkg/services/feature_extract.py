"""
Сервис извлечения фич из директив препроцессора.
Находит ссылки #ifdef/#ifndef в снимках и диффах, отфильтровывает
include-guard макросы и строит структурный профиль фич (LOFC, NDEP, SCAT, TANGA).
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from errors import UnbalancedConditionals
from services.repo_miner import iter_hunk_lines

logger = logging.getLogger(__name__)

MODE_SNAPSHOT = 'snapshot'
MODE_DIFF = 'diff'

DIRECTIVE_PATTERN = re.compile(r'^\s*#\s*(ifdef|ifndef|if|elif|else|endif)\b(.*)$')
IDENTIFIER_PATTERN = re.compile(r'[A-Za-z_][A-Za-z0-9_]*')
HEADER_SUFFIX_PATTERN = re.compile(r'_h_?$', re.IGNORECASE)
HEADER_GUARD_PATTERN = re.compile(r'^_{0,2}[A-Z0-9_]+_H_{0,2}$', re.IGNORECASE)

OPENERS = ('ifdef', 'ifndef', 'if')
FEATURE_DIRECTIVES = ('ifdef', 'ifndef')
COMPOUND_SEPARATOR = ' & '


@dataclass(frozen=True)
class FeatureRef:
    """Ссылка на фичу в директиве #ifdef/#ifndef."""
    name: str
    file: str
    line: int
    directive: str
    expression: str

    @property
    def identifiers(self) -> tuple[str, ...]:
        return split_compound(self.name)


@dataclass
class Block:
    """Условный блок препроцессора."""
    directive: str
    features: tuple[str, ...]
    start_line: int
    depth: int
    end_line: int = 0
    then_end: int = 0
    name: Optional[str] = None
    children: list['Block'] = field(default_factory=list)


@dataclass
class BlockTree:
    """Дерево условных блоков одного файла."""
    path: Optional[str]
    roots: list[Block]
    blocks: list[Block]


@dataclass(frozen=True)
class StructureProfile:
    """Структурные метрики одной фичи."""
    lofc: int = 0
    ndep: int = 0
    scat: int = 0
    tanga: int = 0


@dataclass
class ExtractDiagnostics:
    """Счётчики извлечения, выгружаются в diagnostics.json."""
    files_scanned: int = 0
    refs_found: int = 0
    header_macros_filtered: int = 0
    unbalanced_files: int = 0
    unparseable_lines: int = 0

    def to_dict(self) -> dict:
        return {
            'files_scanned': self.files_scanned,
            'refs_found': self.refs_found,
            'header_macros_filtered': self.header_macros_filtered,
            'unbalanced_files': self.unbalanced_files,
            'unparseable_lines': self.unparseable_lines,
        }

    def merge(self, other: 'ExtractDiagnostics') -> None:
        self.files_scanned += other.files_scanned
        self.refs_found += other.refs_found
        self.header_macros_filtered += other.header_macros_filtered
        self.unbalanced_files += other.unbalanced_files
        self.unparseable_lines += other.unparseable_lines


class _CodeScanner:
    """Вырезает комментарии и строковые литералы, сохраняя состояние между строками."""

    def __init__(self):
        self.in_block_comment = False

    def code_of(self, line: str) -> str:
        result = []
        i = 0
        length = len(line)
        while i < length:
            if self.in_block_comment:
                close = line.find('*/', i)
                if close < 0:
                    return ''.join(result)
                self.in_block_comment = False
                i = close + 2
                result.append(' ')
                continue
            char = line[i]
            pair = line[i:i + 2]
            if pair == '//':
                break
            if pair == '/*':
                self.in_block_comment = True
                i += 2
                continue
            if char in ('"', "'"):
                i = self._skip_literal(line, i, char)
                result.append(' ')
                continue
            result.append(char)
            i += 1
        return ''.join(result)

    @staticmethod
    def _skip_literal(line: str, start: int, quote: str) -> int:
        i = start + 1
        while i < len(line):
            if line[i] == '\\':
                i += 2
                continue
            if line[i] == quote:
                return i + 1
            i += 1
        return len(line)


def code_lines(text: str) -> list[str]:
    """Строки файла без комментариев и строковых литералов."""
    scanner = _CodeScanner()
    return [scanner.code_of(line) for line in text.splitlines()]


def is_comment_line(line: str, in_block_comment: bool = False) -> bool:
    """Непустая строка, состоящая только из комментария."""
    if not line.strip():
        return False
    scanner = _CodeScanner()
    scanner.in_block_comment = in_block_comment
    return not scanner.code_of(line).strip()


def split_compound(name: str) -> tuple[str, ...]:
    return tuple(part for part in name.split(COMPOUND_SEPARATOR) if part)


def is_header_macro(name: str) -> bool:
    """
    Проверить, является ли макрос include-guard'ом (например, parser_h_ или __PARSER_H__).

    Args:
        name: имя макроса

    Returns:
        True для макросов заголовков
    """
    return bool(HEADER_SUFFIX_PATTERN.search(name) or HEADER_GUARD_PATTERN.match(name))


def _parse_directive(code: str) -> Optional[tuple[str, str]]:
    match = DIRECTIVE_PATTERN.match(code)
    if not match:
        return None
    return match.group(1), match.group(2).strip()


def _ref_name(expression: str) -> Optional[str]:
    identifiers = IDENTIFIER_PATTERN.findall(expression)
    if not identifiers:
        return None
    unique = list(dict.fromkeys(identifiers))
    return COMPOUND_SEPARATOR.join(unique)


def extract_refs(
    text: str,
    mode: str = MODE_SNAPSHOT,
    path: str = '',
    diagnostics: Optional[ExtractDiagnostics] = None,
) -> list[FeatureRef]:
    """
    Найти ссылки на фичи в директивах #ifdef/#ifndef.

    Args:
        text: текст файла (snapshot) или ханки диффа (diff)
        mode: MODE_SNAPSHOT или MODE_DIFF
        path: путь файла для FeatureRef
        diagnostics: счётчики (опционально)

    Returns:
        Список FeatureRef; в режиме diff - по изменённым строкам и строкам контекста
    """
    if mode == MODE_DIFF:
        numbered = [
            (hunk_line.new_number if hunk_line.new_number is not None else hunk_line.old_number,
             hunk_line.tag, hunk_line.text)
            for hunk_line in iter_hunk_lines(text)
        ]
    elif mode == MODE_SNAPSHOT:
        numbered = [(number, ' ', line) for number, line in enumerate(text.splitlines(), start=1)]
    else:
        raise ValueError(f"Неизвестный режим извлечения: {mode}")

    # удалённые строки принадлежат старой версии файла, добавленные - новой
    old_side, new_side = _CodeScanner(), _CodeScanner()
    refs = []
    for number, tag, line in numbered:
        if tag == '-':
            code = old_side.code_of(line)
        else:
            code = new_side.code_of(line)
            if tag == ' ':
                old_side.code_of(line)
        parsed = _parse_directive(code)
        if parsed is None:
            continue
        directive, expression = parsed
        if directive not in FEATURE_DIRECTIVES:
            continue
        name = _ref_name(expression)
        if name is None:
            if diagnostics is not None:
                diagnostics.unparseable_lines += 1
            logger.debug(f"Пропущена директива без идентификатора: {path}:{number}")
            continue
        refs.append(FeatureRef(name=name, file=path, line=number, directive=directive, expression=expression))

    if diagnostics is not None:
        diagnostics.files_scanned += 1
        diagnostics.refs_found += len(refs)
    return refs


def filter_header_macros(
    refs: Iterable[FeatureRef],
    diagnostics: Optional[ExtractDiagnostics] = None,
) -> list[FeatureRef]:
    """Убрать ссылки на макросы заголовков."""
    kept = []
    for ref in refs:
        if is_header_macro(ref.name):
            if diagnostics is not None:
                diagnostics.header_macros_filtered += 1
            continue
        kept.append(ref)
    return kept


def build_block_tree(file_text: str, path: Optional[str] = None) -> BlockTree:
    """
    Построить дерево условных блоков файла.

    #if/#elif/#else учитываются для баланса, но фичи фиксируются только у #ifdef/#ifndef.

    Args:
        file_text: текст файла
        path: путь (для сообщений)

    Returns:
        BlockTree

    Raises:
        UnbalancedConditionals: число открывающих директив и #endif не совпадает
    """
    roots: list[Block] = []
    blocks: list[Block] = []
    stack: list[Block] = []

    for number, code in enumerate(code_lines(file_text), start=1):
        parsed = _parse_directive(code)
        if parsed is None:
            continue
        directive, expression = parsed

        if directive in OPENERS:
            name = _ref_name(expression) if directive in FEATURE_DIRECTIVES else None
            features = split_compound(name) if name else ()
            block = Block(
                directive=directive,
                features=features,
                start_line=number,
                depth=len(stack) + 1,
                name=name,
            )
            (stack[-1].children if stack else roots).append(block)
            blocks.append(block)
            stack.append(block)
        elif directive in ('elif', 'else'):
            if not stack:
                raise UnbalancedConditionals(f"#{directive} без открывающей директивы: {path}:{number}", path)
            if not stack[-1].then_end:
                stack[-1].then_end = number - 1
        else:
            if not stack:
                raise UnbalancedConditionals(f"Лишний #endif: {path}:{number}", path)
            block = stack.pop()
            block.end_line = number
            if not block.then_end:
                block.then_end = number - 1

    if stack:
        raise UnbalancedConditionals(f"Незакрытых блоков: {len(stack)} в {path}", path)
    return BlockTree(path=path, roots=roots, blocks=blocks)


def structure_profile(
    snapshots: dict[str, str],
    features: Iterable[str],
    diagnostics: Optional[ExtractDiagnostics] = None,
) -> dict[str, StructureProfile]:
    """
    Посчитать структурные метрики фич по снимкам одного коммита.

    Args:
        snapshots: {путь: текст файла}
        features: имена фич (в том числе составные)
        diagnostics: счётчики (опционально)

    Returns:
        {фича: StructureProfile}; несбалансированные файлы пропускаются
    """
    wanted = set(features)
    lofc_lines: dict[str, int] = {name: 0 for name in wanted}
    ndep: dict[str, int] = {name: 0 for name in wanted}
    scat: dict[str, int] = {name: 0 for name in wanted}
    co_features: dict[str, set[str]] = {name: set() for name in wanted}

    for path in sorted(snapshots):
        text = snapshots[path]
        try:
            tree = build_block_tree(text, path)
        except UnbalancedConditionals as e:
            logger.warning(f"Файл исключён из структурных метрик: {e}")
            if diagnostics is not None:
                diagnostics.unbalanced_files += 1
            continue

        lines = text.splitlines()
        directive_lines = {
            number for number, code in enumerate(code_lines(text), start=1)
            if _parse_directive(code) is not None
        }

        guarded: dict[str, set[int]] = {name: set() for name in wanted}
        for block in tree.blocks:
            if block.name is None:
                continue
            identifiers = set(block.features)
            others = {ident for ident in identifiers if not is_header_macro(ident)}
            for name in wanted:
                constituents = set(split_compound(name))
                if block.name == name:
                    scat[name] += 1
                    ndep[name] = max(ndep[name], block.depth)
                    for number in range(block.start_line + 1, block.then_end + 1):
                        if number in directive_lines or not lines[number - 1].strip():
                            continue
                        guarded[name].add(number)
                if constituents <= identifiers:
                    co_features[name].update(others - constituents)

        for name, numbers in guarded.items():
            lofc_lines[name] += len(numbers)

    return {
        name: StructureProfile(
            lofc=lofc_lines[name],
            ndep=ndep[name],
            scat=scat[name],
            tanga=len(co_features[name]),
        )
        for name in wanted
    }
