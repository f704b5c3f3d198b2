"""
Регулярная сетка G_3D и выборка поля на ней.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import FieldError
from utils.logger import get_logger

logger = get_logger(__name__)

Vec3 = Tuple[float, float, float]
Evaluator = Callable[[np.ndarray], np.ndarray]

# Размер блока при вычислении сети по узлам сетки
EVAL_CHUNK = 4096


class Grid3D(BaseModel):
    """Узлы включают оба угла: N узлов и N-1 ячеек по каждой оси."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    min_corner: Vec3 = (-1.0, -1.0, -1.0)
    max_corner: Vec3 = (1.0, 1.0, 1.0)
    resolution: int = Field(64, ge=2)

    @model_validator(mode="after")
    def _check_bounds(self) -> "Grid3D":
        if not all(hi > lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(
                f"max_corner {self.max_corner} должен быть больше min_corner {self.min_corner}"
            )
        return self

    @property
    def shape(self) -> Tuple[int, int, int]:
        n = self.resolution
        return (n, n, n)

    @property
    def spacing(self) -> np.ndarray:
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        return (hi - lo) / (self.resolution - 1)

    @property
    def h(self) -> float:
        """Наибольший шаг сетки."""
        return float(self.spacing.max())

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.resolution
        return tuple(
            lo + (hi - lo) * np.arange(n, dtype=np.float64) / (n - 1)
            for lo, hi in zip(self.min_corner, self.max_corner)
        )

    def nodes(self) -> np.ndarray:
        """Координаты всех узлов (N^3, 3) в порядке C (индекс k меняется быстрее всего)."""
        ax, ay, az = self.axes()
        X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def node_positions(self, flat_indices: np.ndarray) -> np.ndarray:
        """Координаты узлов по плоским индексам."""
        ijk = np.stack(np.unravel_index(np.asarray(flat_indices), self.shape), axis=1)
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        return lo + (hi - lo) * ijk / (self.resolution - 1)

    def with_resolution(self, resolution: int) -> "Grid3D":
        return self.model_copy(update={"resolution": resolution})


@dataclass
class ScalarField:
    grid: Grid3D
    values: np.ndarray
    valid_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.grid.shape, dtype=bool)
        else:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool).reshape(self.grid.shape)

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid_mask.all())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.valid_mask.copy())


def chunked_evaluate(evaluator: Evaluator, points: np.ndarray, chunk: int = EVAL_CHUNK,
                     workers: int = 1) -> np.ndarray:
    """
    Вычисляет evaluator блоками фиксированной формы (chunk, 3).

    Последний блок дополняется повтором последней точки: каждый вызов получает
    массив одной и той же формы, поэтому результат в узле не зависит от того,
    какие еще узлы попали в тот же блок.

    Args:
        evaluator: Векторизованная функция (M, 3) -> (M,)
        points: Точки (M, 3)
        chunk: Размер блока
        workers: Число потоков; порядок результатов не зависит от него

    Returns:
        Значения (M,)
    """
    points = np.asarray(points, dtype=np.float64)
    total = len(points)
    if total == 0:
        return np.zeros(0, dtype=np.float64)

    starts = list(range(0, total, chunk))

    def run(start: int) -> np.ndarray:
        block = points[start:start + chunk]
        real = len(block)
        if real < chunk:
            pad = np.repeat(block[-1:], chunk - real, axis=0)
            block = np.concatenate([block, pad])
        return np.asarray(evaluator(block), dtype=np.float64).reshape(-1)[:real]

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts)


def check_finite(grid: Grid3D, flat_indices: np.ndarray, values: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.argmax(bad))
        node = tuple(int(c) for c in np.unravel_index(int(flat_indices[first]), grid.shape))
        position = grid.node_positions(np.array([flat_indices[first]]))[0]
        raise FieldError(node, position, float(values[first]))


def sample_field(evaluator: Evaluator, grid: Grid3D, workers: int = 1,
                 chunk: int = EVAL_CHUNK) -> ScalarField:
    """
    Плотная выборка поля во всех узлах сетки.

    Args:
        evaluator: Векторизованная функция (M, 3) -> (M,)
        grid: Сетка
        workers: Число потоков
        chunk: Размер блока вычисления

    Returns:
        Полностью валидное поле
    """
    points = grid.nodes()
    values = chunked_evaluate(evaluator, points, chunk=chunk, workers=workers)
    check_finite(grid, np.arange(len(points)), values)
    logger.debug(f"Плотная выборка поля: {len(points)} узлов, N={grid.resolution}")
    return ScalarField(grid, values.reshape(grid.shape))
