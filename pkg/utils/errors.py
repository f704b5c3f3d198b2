"""
Исключения проекта.
Все наследуются от ValueError: неверные входные данные остаются ValueError,
но вызывающий код может ловить конкретный случай.
"""
from typing import List, Tuple


class ContractError(ValueError):
    """Нарушено предусловие операции (размерности, знаки, размеры облаков)."""


class FieldError(ValueError):
    """Функция поля вернула нечисловое значение в узле сетки."""

    def __init__(self, node: Tuple[int, int, int], position, value: float):
        self.node = node
        self.position = tuple(float(c) for c in position)
        self.value = value
        super().__init__(
            f"Нечисловое значение поля {value!r} в узле {node} (позиция {self.position})"
        )


class NonManifoldError(ValueError):
    """Сетка не является замкнутым 2-многообразием."""

    def __init__(self, edges: List[Tuple[int, int]], counts: List[int]):
        self.edges = edges
        self.counts = counts
        shown = ", ".join(f"{e}x{c}" for e, c in zip(edges[:10], counts[:10]))
        more = f" и еще {len(edges) - 10}" if len(edges) > 10 else ""
        super().__init__(f"Немногообразные ребра ({len(edges)}): {shown}{more}")


class ObjParseError(ValueError):
    """Ошибка разбора OBJ файла."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"OBJ, строка {line_number}: {message}")


class PgmParseError(ValueError):
    """Ошибка разбора PGM файла."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"PGM, строка {line_number}: {message}")


class TrainingDivergedError(ValueError):
    """Функция потерь стала NaN/inf во время обучения."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Обучение разошлось на шаге {step}: loss={loss!r}")
