"""
Построение обучающих выборок X_S для уравнения обучения SDF.
"""
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from geometry.shapes import AnalyticShape, analytic_sdf, sample_surface
from utils.errors import ContractError
from utils.rng import module_rng

DEFAULT_SIGMAS = (0.005, 0.05)
DOMAIN_MIN, DOMAIN_MAX = -1.0, 1.0


@dataclass
class SampleSet:
    """Точки с метками знакового расстояния для одной фигуры."""

    points: np.ndarray
    signed_distance: np.ndarray
    shape_id: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.signed_distance = np.asarray(self.signed_distance, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.signed_distance):
            raise ContractError(
                f"Число точек {len(self.points)} не совпадает с числом меток {len(self.signed_distance)}"
            )

    def __len__(self) -> int:
        return len(self.points)


def sample_training_points(shape: AnalyticShape, n_surface: int, n_uniform: int,
                           sigmas: Sequence[float] = DEFAULT_SIGMAS, seed: int = 0,
                           shape_id: int = 0) -> SampleSet:
    """
    Точки около поверхности (гауссов шум вокруг точек поверхности) плюс
    равномерные точки в кубе [-1, 1]^3. Метки считаются аналитической SDF.

    Args:
        shape: Фигура
        n_surface: Число точек около поверхности (делится поровну между sigmas)
        n_uniform: Число равномерных точек
        sigmas: Список стандартных отклонений шума
        seed: Seed
        shape_id: Индекс фигуры в таблице латентных кодов

    Returns:
        SampleSet
    """
    if n_surface < 0 or n_uniform < 0 or n_surface + n_uniform == 0:
        raise ContractError(
            f"Нужно хотя бы одну точку: n_surface={n_surface}, n_uniform={n_uniform}"
        )
    if n_surface > 0 and len(sigmas) == 0:
        raise ContractError("Для точек около поверхности нужен хотя бы один sigma")

    rng = module_rng(seed, f"geometry.samples.{shape_id}")
    parts = []
    if n_surface > 0:
        counts = np.full(len(sigmas), n_surface // len(sigmas))
        counts[: n_surface % len(sigmas)] += 1
        for sigma, count in zip(sigmas, counts):
            if count == 0:
                continue
            base = sample_surface(shape, int(count), rng)
            if sigma > 0:
                base = base + rng.normal(scale=sigma, size=base.shape)
            parts.append(base)
    if n_uniform > 0:
        parts.append(rng.uniform(DOMAIN_MIN, DOMAIN_MAX, size=(n_uniform, 3)))

    points = np.concatenate(parts)
    return SampleSet(points, analytic_sdf(shape, points), shape_id)


def build_dataset(shapes: List[AnalyticShape], n_surface: int, n_uniform: int,
                  sigmas: Sequence[float] = DEFAULT_SIGMAS, seed: int = 0) -> List[SampleSet]:
    """Одна выборка на фигуру, shape_id идут подряд с нуля."""
    return [
        sample_training_points(shape, n_surface, n_uniform, sigmas, seed, shape_id=i)
        for i, shape in enumerate(shapes)
    ]
