"""
Подкоманды dataset, train и evaluate.
"""
import argparse
import json
import logging
from pathlib import Path

from commands.common import labeled_projects, metric_settings, prepare_run, select_projects
from config import OUTPUT_DIR
from errors import FeatforgeError
from services.dataset import assemble, characteristics, chronological_split, export_table, import_table
from services.evaluation import evaluate as evaluate_model
from services.learn import ClassifierSpec, load_model, save_model, train as train_model
from services.scenarios import balance
from utils.logger import log_run_action
from utils.utils import atomic_write_text, format_float, report_error, run_blocking

logger = logging.getLogger(__name__)


def _describe(title: str, values: dict) -> str:
    imbalance = values['imbalance']
    ratio = f"{imbalance:.2f}" if imbalance != float('inf') else 'inf'
    return (
        f"{title}: всего {values['total']}, defective {values['defective']}, "
        f"clean {values['clean']}, дисбаланс {ratio}"
    )


def build_dataset(args: argparse.Namespace) -> list[str]:
    """
    Собрать набор, разбить по релизам, сбалансировать обучающую часть и выгрузить.

    Returns:
        Строки отчёта для консоли
    """
    config = prepare_run(args)
    projects = labeled_projects(select_projects(config, args.project))
    ds = assemble(projects, args.level, args.metric_set, metric_settings(config), config.jobs)
    train_set, test, split = chronological_split(ds, config.split_ratios())

    flags = []
    balanced = train_set
    if args.smote:
        balanced, flags = balance(train_set, config.seed)

    out_dir = Path(args.out or config.output_dir) / 'dataset'
    stem = f"{args.metric_set}-{args.level}"
    export_table(ds, args.format, out_dir / f"{stem}-all.{args.format}")
    export_table(test, args.format, out_dir / f"{stem}-test.{args.format}")
    export_table(balanced, args.format, out_dir / f"{stem}-train.{args.format}")

    summary = {
        'metric_set': args.metric_set,
        'level': args.level,
        'ratios': split.ratio,
        'train_scopes': {name: list(scopes) for name, scopes in split.train_releases.items()},
        'test_scopes': {name: list(scopes) for name, scopes in split.test_releases.items()},
        'characteristics': {
            'all': characteristics(ds),
            'train': characteristics(train_set),
            'train_balanced': characteristics(balanced),
            'test': characteristics(test),
        },
        'flags': flags,
    }
    atomic_write_text(out_dir / f"{stem}-summary.json", json.dumps(summary, indent=2, sort_keys=True) + '\n')

    lines = [_describe('Набор', summary['characteristics']['all'])]
    lines.append(_describe('Обучение', summary['characteristics']['train']))
    if args.smote:
        lines.append(_describe('Обучение после SMOTE', summary['characteristics']['train_balanced']))
    lines.append(_describe('Тест', summary['characteristics']['test']))
    lines.extend(f"{name}: разбиение {ratio}" for name, ratio in sorted(split.ratio.items()))
    lines.extend(f"Флаг: {flag}" for flag in flags)
    lines.append(f"Таблицы записаны в {out_dir}")
    return lines


async def dataset(args: argparse.Namespace) -> int:
    """Подкоманда dataset."""
    try:
        lines = await run_blocking(build_dataset, args)
    except FeatforgeError as e:
        return report_error('dataset', e)
    print('\n'.join(lines))
    log_run_action(f"dataset {args.metric_set} {args.level}")
    return 0


def _train(args: argparse.Namespace) -> Path:
    config = prepare_run(args)
    ds = import_table(args.input)
    spec = ClassifierSpec(args.classifier, dict(config.hyperparameters.get(args.classifier, {})), config.seed)
    model = train_model(spec, ds)
    target = Path(args.model or Path(args.out or config.output_dir) / 'models' / f"{args.classifier}.json")
    save_model(model, target)
    logger.info(f"Модель {args.classifier} обучена на {len(ds)} экземплярах")
    return target


async def train(args: argparse.Namespace) -> int:
    """Подкоманда train."""
    try:
        target = await run_blocking(_train, args)
    except FeatforgeError as e:
        return report_error('train', e)
    print(f"Модель сохранена: {target}")
    log_run_action(f"train {args.classifier}")
    return 0


def _evaluate(args: argparse.Namespace) -> tuple[dict, Path]:
    model = load_model(args.model)
    test = import_table(args.input, model.attributes)
    report = evaluate_model(model, test)
    out_dir = Path(args.out or OUTPUT_DIR) / 'evaluate'
    atomic_write_text(out_dir / 'evaluation.json', json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n')
    if report.roc:
        atomic_write_text(out_dir / 'roc.csv', report.roc_csv())
    return report.to_dict(), out_dir


async def evaluate(args: argparse.Namespace) -> int:
    """Подкоманда evaluate."""
    try:
        report, out_dir = await run_blocking(_evaluate, args)
    except FeatforgeError as e:
        return report_error('evaluate', e)

    weighted = report['weighted']
    print(
        f"P={format_float(weighted['precision'])} R={format_float(weighted['recall'])} "
        f"F={format_float(weighted['f'])} AUC={format_float(report['auc']) or '-'}"
    )
    for flag in report['flags']:
        print(f"Флаг: {flag}")
    print(f"Отчёт записан в {out_dir}")
    log_run_action('evaluate')
    return 0
