"""
Точки на поверхности сетки для метрик и нормализация облаков.
"""
from typing import Literal, Tuple

import numpy as np

from marching.cubes import TriMesh, face_areas
from utils.errors import ContractError
from utils.rng import module_rng

SampleMode = Literal["vertices", "area"]
NormalizeMode = Literal["unit_sphere", "unit_box"]


def sample_mesh_points(mesh: TriMesh, n: int, mode: SampleMode = "area", seed: int = 0) -> np.ndarray:
    """
    Args:
        mesh: Непустая сетка
        n: Число точек (в режиме vertices только проверяется на > 0)
        mode: "vertices" - сами вершины; "area" - равномерно по площади
        seed: Seed выборки

    Returns:
        Облако (n, 3), либо (V, 3) в режиме vertices
    """
    if n <= 0:
        raise ContractError(f"Число точек должно быть > 0, получено {n}")
    if mesh.is_empty:
        raise ContractError("Нельзя выбрать точки на пустой сетке")
    if mode == "vertices":
        return mesh.vertices.copy()
    if mode != "area":
        raise ContractError(f"Неизвестный режим выборки {mode!r}")

    areas = face_areas(mesh)
    total = areas.sum()
    if not total > 0:
        raise ContractError("Суммарная площадь сетки равна нулю")
    rng = module_rng(seed, "losses.sampling")
    faces = rng.choice(mesh.num_faces, size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.face_vertices()[faces]
    return ((1 - r1)[:, None] * tri[:, 0]
            + (r1 * (1 - r2))[:, None] * tri[:, 1]
            + (r1 * r2)[:, None] * tri[:, 2])


def cloud_transform(points, mode: NormalizeMode = "unit_sphere") -> Tuple[np.ndarray, float]:
    """
    Центр ограничивающего параллелепипеда и масштаб нормализации.

    unit_sphere: максимальное расстояние от центра становится 1.
    unit_box: наибольшая сторона становится 1, облако в [-0.5, 0.5]^3.
    """
    cloud = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(cloud) == 0:
        raise ContractError("Пустое облако точек")
    center = 0.5 * (cloud.min(axis=0) + cloud.max(axis=0))
    if mode == "unit_sphere":
        scale = float(np.linalg.norm(cloud - center, axis=1).max())
    elif mode == "unit_box":
        scale = float((cloud.max(axis=0) - cloud.min(axis=0)).max())
    else:
        raise ContractError(f"Неизвестный режим нормализации {mode!r}")
    return center, (scale if scale > 0 else 1.0)


def normalize_cloud(points, mode: NormalizeMode = "unit_sphere") -> np.ndarray:
    center, scale = cloud_transform(points, mode)
    return (np.asarray(points, dtype=np.float64).reshape(-1, 3) - center) / scale
