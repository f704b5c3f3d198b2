"""
Аналитические SDF (сфера, тор) - эталон для обучающих данных и для проверки
производной изоповерхности.
"""
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from utils.rng import module_rng

Vec3 = Tuple[float, float, float]

SPHERE_RADIUS_RANGE = (0.2, 0.4)
TORUS_MAJOR_RANGE = (0.35, 0.55)
TORUS_MINOR_RANGE = (0.1, 0.2)


class AnalyticShape(BaseModel):
    """Сфера (radius) или тор (major, minor) с осью z."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["sphere", "torus"]
    radius: float = 0.0
    major: float = 0.0
    minor: float = 0.0
    center: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _check_radii(self) -> "AnalyticShape":
        if self.kind == "sphere" and not self.radius > 0:
            raise ValueError(f"Радиус сферы должен быть > 0, получено {self.radius}")
        if self.kind == "torus" and not self.major > self.minor > 0:
            raise ValueError(
                f"Для тора нужно R > r > 0, получено R={self.major}, r={self.minor}"
            )
        return self

    @classmethod
    def sphere(cls, radius: float, center: Vec3 = (0.0, 0.0, 0.0)) -> "AnalyticShape":
        return cls(kind="sphere", radius=radius, center=center)

    @classmethod
    def torus(cls, major: float, minor: float, center: Vec3 = (0.0, 0.0, 0.0)) -> "AnalyticShape":
        return cls(kind="torus", major=major, minor=minor, center=center)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return analytic_sdf(self, points)


def analytic_sdf(shape: AnalyticShape, x: np.ndarray):
    """
    Точное знаковое расстояние: отрицательное внутри, положительное снаружи.

    Args:
        shape: Фигура
        x: Точка (3,) или массив точек (M, 3)

    Returns:
        float для одной точки, массив (M,) для набора
    """
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    p = np.atleast_2d(points) - np.asarray(shape.center, dtype=np.float64)

    if shape.kind == "sphere":
        d = np.linalg.norm(p, axis=1) - shape.radius
    else:
        ring = np.hypot(p[:, 0], p[:, 1]) - shape.major
        d = np.hypot(ring, p[:, 2]) - shape.minor

    return float(d[0]) if single else d


def sample_surface(shape: AnalyticShape, n: int, rng: np.random.Generator) -> np.ndarray:
    """Равномерные по площади точки на поверхности фигуры."""
    center = np.asarray(shape.center, dtype=np.float64)
    if shape.kind == "sphere":
        g = rng.normal(size=(n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return center + shape.radius * g

    # Плотность тора по углу трубки пропорциональна R + r*cos(v): отбор с отказом
    R, r = shape.major, shape.minor
    accepted = []
    count = 0
    while count < n:
        u = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        v = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        keep = rng.uniform(0.0, R + r, size=2 * n) < R + r * np.cos(v)
        u, v = u[keep], v[keep]
        accepted.append(np.stack([
            (R + r * np.cos(v)) * np.cos(u),
            (R + r * np.cos(v)) * np.sin(u),
            r * np.sin(v),
        ], axis=1))
        count += len(u)
    return center + np.concatenate(accepted)[:n]


def shape_family(n_spheres: int, n_tori: int, seed: int) -> List[AnalyticShape]:
    """
    Семейство сфер и торов со случайными радиусами из фиксированных диапазонов.

    Args:
        n_spheres: Количество сфер
        n_tori: Количество торов
        seed: Seed

    Returns:
        Список фигур: сначала сферы, потом торы
    """
    rng = module_rng(seed, "geometry.family")
    shapes = [
        AnalyticShape.sphere(float(rng.uniform(*SPHERE_RADIUS_RANGE)))
        for _ in range(n_spheres)
    ]
    for _ in range(n_tori):
        shapes.append(AnalyticShape.torus(
            float(rng.uniform(*TORUS_MAJOR_RANGE)),
            float(rng.uniform(*TORUS_MINOR_RANGE)),
        ))
    return shapes
