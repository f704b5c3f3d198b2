"""
Мягкие ограничения-боксы: объем внутри бокса должен оставаться внутри поверхности.

Для каждого бокса берется решетка 8^3 проб в центрах ячеек. Знаковое расстояние
пробы p оценивается по ближайшей вершине v и ее нормали n: s = (p - v) . n,
положительно снаружи. Штраф бокса: weight * sum max(0, s)^2.
"""
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import cKDTree

from marching.cubes import TriMesh
from shapeopt.drag import face_cross, scatter_cross_grad
from utils.logger import get_logger

logger = get_logger(__name__)

Vec3 = Tuple[float, float, float]

POINTS_PER_AXIS = 8


class ConstraintBox(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    min_corner: Vec3
    max_corner: Vec3
    weight: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_corners(self) -> "ConstraintBox":
        if not all(hi > lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(
                f"max_corner {self.max_corner} должен быть больше min_corner {self.min_corner}"
            )
        return self

    def lattice_points(self) -> np.ndarray:
        """Центры ячеек решетки POINTS_PER_AXIS^3 внутри бокса."""
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        ticks = (np.arange(POINTS_PER_AXIS) + 0.5) / POINTS_PER_AXIS
        u = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
        return lo + u * (hi - lo)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.max_corner, self.min_corner)))


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Ненормированные нормали вершин: сумма m = e1 x e2 смежных граней."""
    m, _, _ = face_cross(mesh)
    normals = np.zeros((mesh.num_vertices, 3))
    for corner in range(3):
        np.add.at(normals, mesh.faces[:, corner], m)
    return normals


def constraint_penalty(mesh: TriMesh, boxes: Sequence[ConstraintBox]) -> Tuple[float, np.ndarray]:
    """
    Args:
        mesh: Ориентированная сетка
        boxes: Боксы

    Returns:
        Значение и градиент по вершинам (V, 3)
    """
    grad = np.zeros((mesh.num_vertices, 3))
    if not boxes:
        return 0.0, grad
    if mesh.is_empty:
        # Все пробы считаются снаружи на расстоянии диагонали бокса
        value = sum(b.weight * POINTS_PER_AXIS ** 3 * b.diagonal ** 2 for b in boxes)
        logger.warning("Пустая сетка: штраф ограничений максимален")
        return float(value), grad

    raw_normals = vertex_normals(mesh)
    lengths = np.linalg.norm(raw_normals, axis=1)
    safe = np.where(lengths > 0, lengths, 1.0)
    unit = raw_normals / safe[:, None]
    tree = cKDTree(mesh.vertices)

    total = 0.0
    normal_upstream = np.zeros((mesh.num_vertices, 3))
    for box in boxes:
        points = box.lattice_points()
        _, nearest = tree.query(points, k=1)
        r = points - mesh.vertices[nearest]
        n = unit[nearest]
        s = np.einsum("ij,ij->i", r, n)
        violation = np.maximum(s, 0.0)
        total += box.weight * float(np.sum(violation ** 2))

        c = 2.0 * box.weight * violation
        hit = c > 0
        if not hit.any():
            continue
        # ds/dv = -n; ds/d(raw normal) = (r - s n) / |raw normal|
        np.add.at(grad, nearest[hit], -c[hit, None] * n[hit])
        d_raw = (r[hit] - s[hit, None] * n[hit]) / safe[nearest[hit], None]
        np.add.at(normal_upstream, nearest[hit], c[hit, None] * d_raw)

    if np.any(normal_upstream):
        _, e1, e2 = face_cross(mesh)
        face_upstream = normal_upstream[mesh.faces].sum(axis=1)
        grad += scatter_cross_grad(mesh, e1, e2, face_upstream)
    return total, grad
