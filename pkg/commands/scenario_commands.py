"""
Подкоманды scenario и report.
"""
import argparse
import logging
from pathlib import Path

from commands.common import labeled_projects, prepare_run, scenario_settings, select_projects
from config import OUTPUT_DIR
from errors import FeatforgeError, UsageError
from services.scenarios import (
    ScenarioResult,
    merge_results,
    render_report,
    rq1_grid,
    rq2_file_level,
    rq3_compare,
    rq4_incremental,
    rq5_cross_project,
    write_result,
)
from utils.logger import log_run_action
from utils.utils import atomic_write_text, render_csv, report_error, run_blocking

logger = logging.getLogger(__name__)


def run_scenario(args: argparse.Namespace) -> tuple[ScenarioResult, Path]:
    """
    Выполнить сценарий и записать результат в <out>/<сценарий>/.

    Raises:
        UsageError: для rq5 задано меньше двух проектов
    """
    config = prepare_run(args)
    settings = scenario_settings(config)
    projects = labeled_projects(select_projects(config, args.project))
    classifier = args.classifier or 'forest'

    if args.name == 'rq1':
        result = rq1_grid(projects, settings, with_influence=args.influence)
    elif args.name == 'rq2':
        result = rq2_file_level(projects, settings)
    elif args.name == 'rq3':
        result = rq3_compare(projects, settings, classifier)
    elif args.name == 'rq4':
        result = merge_results('rq4', [
            rq4_incremental(project, args.level, settings, classifier) for project in projects
        ])
    else:
        if len(projects) < 2:
            raise UsageError("Межпроектный сценарий rq5 требует не меньше двух проектов")
        result = rq5_cross_project(projects, args.level, settings, classifier)

    out_dir = write_result(result, Path(args.out or config.output_dir) / args.name)
    return result, out_dir


async def scenario(args: argparse.Namespace) -> int:
    """Подкоманда scenario rq1..rq5."""
    try:
        result, out_dir = await run_blocking(run_scenario, args)
    except FeatforgeError as e:
        return report_error(f"scenario {args.name}", e)

    evaluated = sum(1 for cell in result.cells.values() if cell.auc is not None)
    print(f"Сценарий {args.name}: {len(result.cells)} ячеек, оценено {evaluated}; результат в {out_dir}")
    log_run_action(f"scenario {args.name}")
    return 0


def _report(out_root: Path) -> str:
    text, rows = render_report(out_root)
    if rows:
        atomic_write_text(out_root / 'report.csv', render_csv(rows))
    return text


async def report(args: argparse.Namespace) -> int:
    """Подкоманда report: сводки всех сценариев из каталога результатов."""
    out_root = Path(args.out or OUTPUT_DIR)
    try:
        text = await run_blocking(_report, out_root)
    except (FeatforgeError, OSError) as e:
        return report_error('report', e)

    if not text:
        print(f"В {out_root} нет результатов сценариев")
        return 0
    print(text, end='')
    log_run_action('report')
    return 0
