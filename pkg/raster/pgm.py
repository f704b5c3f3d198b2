"""
Чтение и запись изображений в текстовом формате PGM (P2).
"""
from pathlib import Path
from typing import Iterator, Tuple

import numpy as np

from raster.soft import SilhouetteImage
from utils.errors import PgmParseError
from utils.logger import get_logger

logger = get_logger(__name__)

MAXVAL = 255


def quantize(values: np.ndarray) -> np.ndarray:
    """floor(v * 255 + 0.5)."""
    return np.floor(np.clip(values, 0.0, 1.0) * MAXVAL + 0.5).astype(np.int64)


def write_pgm(path, image: SilhouetteImage) -> Path:
    path = Path(path)
    levels = quantize(image.values)
    lines = ["P2", f"{image.width} {image.height}", str(MAXVAL)]
    lines += [" ".join(str(v) for v in row) for row in levels]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    logger.info(f"PGM записан: {path} ({image.width}x{image.height})")
    return path


def _tokens(text: str) -> Iterator[Tuple[int, str]]:
    for line_number, line in enumerate(text.splitlines(), start=1):
        for token in line.split("#", 1)[0].split():
            yield line_number, token


def read_pgm(path) -> SilhouetteImage:
    """
    Читает P2 PGM и переводит уровни в [0, 1] делением на maxval.

    Raises:
        PgmParseError: с номером строки
    """
    tokens = _tokens(Path(path).read_text(encoding="ascii"))

    def take(what: str) -> Tuple[int, int]:
        try:
            line_number, token = next(tokens)
        except StopIteration:
            raise PgmParseError(0, f"файл закончился, ожидалось: {what}")
        try:
            return line_number, int(token)
        except ValueError:
            raise PgmParseError(line_number, f"{what}: не целое число {token!r}")

    try:
        line_number, magic = next(tokens)
    except StopIteration:
        raise PgmParseError(1, "пустой файл")
    if magic != "P2":
        raise PgmParseError(line_number, f"ожидался заголовок P2, получено {magic!r}")

    _, width = take("ширина")
    _, height = take("высота")
    line_number, maxval = take("maxval")
    if width < 1 or height < 1:
        raise PgmParseError(line_number, f"некорректный размер {width}x{height}")
    if not 0 < maxval < 65536:
        raise PgmParseError(line_number, f"maxval вне диапазона 1..65535: {maxval}")

    levels = np.empty(width * height, dtype=np.int64)
    for i in range(width * height):
        line_number, level = take(f"пиксель {i}")
        if not 0 <= level <= maxval:
            raise PgmParseError(line_number, f"значение {level} вне 0..{maxval}")
        levels[i] = level
    extra = next(tokens, None)
    if extra is not None:
        raise PgmParseError(extra[0], "лишние данные после пикселей")
    return SilhouetteImage(width, height, levels.reshape(height, width) / maxval)
