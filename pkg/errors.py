"""
Исключения featforge.
Все доменные ошибки наследуются от FeatforgeError (код выхода 1),
ошибки использования (конфигурация, флаги) - от UsageError (код выхода 2).
"""


class FeatforgeError(Exception):
    """Базовая доменная ошибка."""

    exit_code = 1


class UsageError(FeatforgeError):
    """Неверная конфигурация или аргументы командной строки."""

    exit_code = 2


# repo-miner
class NotARepository(FeatforgeError):
    """Путь не содержит git-репозитория."""


class CorruptRepository(FeatforgeError):
    """Репозиторий не читается."""


class NoTagsMatched(FeatforgeError):
    """Ни один тег не подошёл под шаблон."""


class MissingObject(FeatforgeError):
    """Коммит или объект не найден (репозиторий изменился)."""


# feature-extract
class UnbalancedConditionals(FeatforgeError):
    """Количество открывающих директив и #endif не совпадает."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


# bug-label
class FeatureWithoutFiles(FeatforgeError):
    """Фича без файлов - ошибка сопоставления."""


# metrics
class FeatureNotInRelease(FeatforgeError):
    """Фича не затронута изменениями релиза."""


# dataset
class EmptyDataset(FeatforgeError):
    """Набор данных не содержит ни одного экземпляра."""


class TooFewReleases(FeatforgeError):
    """Для разбиения нужно минимум два релиза на проект."""


class TooFewMinority(FeatforgeError):
    """Недостаточно экземпляров миноритарного класса для SMOTE."""


class TableIoError(FeatforgeError):
    """Ошибка чтения/записи таблицы."""


class SchemaMismatch(FeatforgeError):
    """Схема атрибутов не совпадает с ожидаемой."""


# learn / eval
class SingleClassTraining(FeatforgeError):
    """В обучающей выборке только один класс."""


class SingleClassTest(FeatforgeError):
    """В тестовой выборке только один класс, AUC не определён."""


class TooFewInstances(FeatforgeError):
    """Слишком мало экземпляров для ReliefF."""


# scenarios
class UnmappedFeature(FeatforgeError):
    """Фича тестовой выборки не сопоставлена файлам или у её файла нет предсказания."""
