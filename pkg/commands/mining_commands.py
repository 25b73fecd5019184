"""
Подкоманды mine и label: майнинг репозиториев и разметка дефектов.
"""
import argparse
import logging
from typing import Optional

from cache import MiningCache, cache
from commands.common import metric_settings, prepare_run, select_projects
from config import ProjectEntry
from errors import FeatforgeError
from services.bug_label import classify_corrective, label_scope, szz_trace
from services.history import build_history, commit_contexts, load_history, release_contexts
from services.repo_miner import open_repo, resolve_releases, source_snapshots, walk_commits
from utils.logger import log_run_action
from utils.utils import report_error, run_blocking, run_in_pool

logger = logging.getLogger(__name__)


def mine_project(entry: ProjectEntry, store: Optional[MiningCache] = None) -> dict:
    """
    Выгрузить историю проекта в кэш.

    При совпадении тегов с закэшированными репозиторий не обходится повторно.

    Returns:
        Сводка {project, releases, commits, cached}
    """
    store = store or cache
    repo = open_repo(entry.repo)
    try:
        releases = resolve_releases(repo, entry.tag_glob)
        if store.has_mining(entry.name, releases):
            logger.info(f"{entry.name}: кэш майнинга актуален")
            commits = sum(len(release.commits) for release in releases)
            return {'project': entry.name, 'releases': len(releases), 'commits': commits, 'cached': True}

        records = [record for release in releases for record in walk_commits(repo, release)]
        snapshots = [snapshot for record in records for snapshot in source_snapshots(repo, record)]
        store.write_mining(entry.name, releases, records, snapshots)
    finally:
        repo.close()

    history = build_history(entry.name, releases, records, snapshots)
    store.write_diagnostics(entry.name, history.diagnostics.to_dict())
    return {'project': entry.name, 'releases': len(releases), 'commits': len(records), 'cached': False}


def label_project(
    entry: ProjectEntry,
    keywords: Optional[list[str]] = None,
    store: Optional[MiningCache] = None,
) -> dict:
    """
    Найти исправляющие коммиты, выполнить SZZ и разметить релизы и коммиты.

    Returns:
        Сводка {project, corrective, introducers, cached}
    """
    store = store or cache
    keyword_list = sorted(keywords) if keywords else None
    if store.has_labels(entry.name) and store.read_labels(entry.name).get('keywords') == keyword_list:
        labels = store.read_labels(entry.name)
        logger.info(f"{entry.name}: разметка актуальна")
        return {
            'project': entry.name,
            'corrective': len(labels['corrective']),
            'introducers': len(labels['introducers']),
            'cached': True,
        }

    records = store.read_commits(entry.name)
    verdicts = [classify_corrective(record.message_first_line, keywords, record.hash) for record in records]
    corrective = [record for record, verdict in zip(records, verdicts) if verdict.is_corrective]

    repo = open_repo(entry.repo)
    try:
        traces = [szz_trace(repo, record) for record in corrective]
    finally:
        repo.close()

    introducers = set()
    for trace in traces:
        introducers.update(trace.introducers)

    history = load_history(entry.name, store)
    labels = {
        'keywords': keyword_list,
        'introducers': sorted(introducers),
        'corrective': [
            {'commit': verdict.commit, 'keyword': verdict.matched_keyword}
            for verdict in verdicts if verdict.is_corrective
        ],
        'releases': [label_scope(ctx, introducers).to_dict() for ctx in release_contexts(history)],
        'commits': [label_scope(ctx, introducers).to_dict() for ctx in commit_contexts(history)],
    }
    store.write_labels(entry.name, [trace.to_dict() for trace in traces], labels)
    logger.info(f"{entry.name}: {len(corrective)} исправляющих коммитов, {len(introducers)} источников ошибок")
    return {'project': entry.name, 'corrective': len(corrective), 'introducers': len(introducers), 'cached': False}


async def mine(args: argparse.Namespace) -> int:
    """Подкоманда mine."""
    try:
        config = prepare_run(args)
        entries = select_projects(config, args.project)
        tasks = [(lambda entry=entry: mine_project(entry)) for entry in entries]
        summaries = await run_blocking(run_in_pool, config.jobs, tasks)
    except FeatforgeError as e:
        return report_error('mine', e)

    for summary in summaries:
        state = 'из кэша' if summary['cached'] else 'выгружено'
        print(f"{summary['project']}: {summary['releases']} релизов, {summary['commits']} коммитов ({state})")
        log_run_action('mine', summary['project'])
    return 0


async def label(args: argparse.Namespace) -> int:
    """Подкоманда label."""
    try:
        config = prepare_run(args)
        entries = select_projects(config, args.project)
        keywords = list(metric_settings(config).keywords or []) or None
        tasks = [(lambda entry=entry: label_project(entry, keywords)) for entry in entries]
        summaries = await run_blocking(run_in_pool, config.jobs, tasks)
    except FeatforgeError as e:
        return report_error('label', e)

    for summary in summaries:
        state = 'из кэша' if summary['cached'] else 'размечено'
        print(
            f"{summary['project']}: {summary['corrective']} исправляющих коммитов, "
            f"{summary['introducers']} коммитов-источников ({state})"
        )
        log_run_action('label', summary['project'])
    return 0
