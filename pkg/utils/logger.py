import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_ENV_VAR = "MESHSDF_LOG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def resolve_level(value: str = None) -> int:
    """
    Переводит значение MESHSDF_LOG в уровень logging.

    Args:
        value: Имя уровня (DEBUG, INFO, WARNING, ERROR); None - берется из окружения

    Returns:
        Числовой уровень логирования, INFO если значение не распознано
    """
    if value is None:
        value = os.getenv(LOG_ENV_VAR, "INFO")
    level = logging.getLevelName(value.strip().upper())
    return level if isinstance(level, int) else logging.INFO


def get_logger(name: str) -> logging.Logger:
    """
    Создает и настраивает логгер с указанным именем.

    Args:
        name: Имя логгера (обычно __name__ модуля)

    Returns:
        Настроенный логгер
    """
    logger = logging.getLogger(name)

    # Если у логгера уже есть обработчики, не добавляем новые
    if logger.handlers:
        return logger

    logger.setLevel(resolve_level())
    logger.propagate = False

    formatter = logging.Formatter(LOG_FORMAT)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)

    logger.addHandler(stream_handler)

    return logger


def set_level(value: str) -> None:
    """Меняет уровень у всех уже созданных логгеров проекта."""
    level = resolve_level(value)
    for logger in logging.Logger.manager.loggerDict.values():
        if isinstance(logger, logging.Logger) and logger.handlers:
            logger.setLevel(level)
