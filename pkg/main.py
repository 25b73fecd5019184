import argparse
import asyncio
import sys

from commands.dataset_commands import dataset, evaluate, train
from commands.mining_commands import label, mine
from commands.scenario_commands import report, scenario
from services.dataset import METRIC_SETS
from services.history import LEVEL_RELEASE, LEVELS
from services.learn import CLASSIFIER_KINDS
from services.scenarios import SCENARIOS
from utils.logger import setup_logging


def _positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается целое число, получено: {value}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"значение должно быть не меньше 1, получено: {value}")
    return number


def build_parser() -> argparse.ArgumentParser:
    """Собрать парсер командной строки со всеми подкомандами."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', default='featforge.json', help='JSON-файл конфигурации проектов')
    common.add_argument('--seed', type=int, default=None, help='seed всех случайных решений запуска')
    common.add_argument('--jobs', type=_positive_int, default=None, help='размер пула потоков')
    common.add_argument('--out', default=None, help='каталог результатов')
    common.add_argument('-p', '--project', action='append', default=None, help='ограничить запуск проектом')
    common.add_argument('--log-level', default=None, help='уровень логирования')

    parser = argparse.ArgumentParser(
        prog='featforge',
        description='Предсказание дефектов для фич препроцессора в C-проектах.',
    )
    subparsers = parser.add_subparsers(dest='command', required=True, metavar='command')

    mine_parser = subparsers.add_parser('mine', parents=[common], help='выгрузить историю репозиториев в кэш')
    mine_parser.set_defaults(handler=mine)

    label_parser = subparsers.add_parser('label', parents=[common], help='найти исправления и разметить дефекты (SZZ)')
    label_parser.set_defaults(handler=label)

    dataset_parser = subparsers.add_parser('dataset', parents=[common], help='собрать, разбить и выгрузить набор')
    dataset_parser.add_argument('--level', choices=LEVELS, default=LEVEL_RELEASE)
    dataset_parser.add_argument('--metric-set', choices=sorted(METRIC_SETS), default='ProcStructMet')
    dataset_parser.add_argument('--format', choices=('csv', 'arff'), default='csv')
    dataset_parser.add_argument('--smote', action=argparse.BooleanOptionalAction, default=True,
                                help='балансировать обучающую выборку SMOTE')
    dataset_parser.set_defaults(handler=dataset)

    train_parser = subparsers.add_parser('train', parents=[common], help='обучить классификатор на таблице')
    train_parser.add_argument('--input', required=True, help='CSV или ARFF обучающей выборки')
    train_parser.add_argument('--classifier', choices=CLASSIFIER_KINDS, default='forest')
    train_parser.add_argument('--model', default=None, help='путь JSON-файла модели')
    train_parser.set_defaults(handler=train)

    evaluate_parser = subparsers.add_parser('evaluate', parents=[common], help='оценить модель на тестовой таблице')
    evaluate_parser.add_argument('--model', required=True, help='JSON-файл модели')
    evaluate_parser.add_argument('--input', required=True, help='CSV или ARFF тестовой выборки')
    evaluate_parser.set_defaults(handler=evaluate)

    scenario_parser = subparsers.add_parser('scenario', parents=[common], help='выполнить сценарий эксперимента')
    scenario_parser.add_argument('name', choices=SCENARIOS)
    scenario_parser.add_argument('--level', choices=LEVELS, default=LEVEL_RELEASE)
    scenario_parser.add_argument('--classifier', choices=CLASSIFIER_KINDS, default=None)
    scenario_parser.add_argument('--influence', action='store_true', help='rq1: влияние атрибутов (wrapper)')
    scenario_parser.set_defaults(handler=scenario)

    report_parser = subparsers.add_parser('report', parents=[common], help='свести результаты сценариев')
    report_parser.set_defaults(handler=report)
    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Точка входа.

    Returns:
        Код выхода: 0 - успех, 1 - ошибка предметной области, 2 - ошибка использования
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level)
    return asyncio.run(args.handler(args))


if __name__ == '__main__':
    sys.exit(main())
