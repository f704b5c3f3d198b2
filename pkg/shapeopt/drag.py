"""
Сопротивление как поверхностный интеграл давления по проекции нормали на поток:

    drag = sum_faces g(face) * (n . d) * area

Давление g задается ньютоновской моделью q * max(0, n . d)^2 либо постоянно (g = q).
Для грани с m = (v1 - v0) x (v2 - v0) и a = m . d:
    ньютоновская модель: q/2 * a^3 / |m|^2 при a > 0, иначе 0;
    постоянное давление: q/2 * a.
"""
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from marching.cubes import TriMesh

PressureModel = Literal["newtonian", "constant"]
Vec3 = Tuple[float, float, float]

DEGENERATE_CROSS = 1e-24


class DragConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    flow_direction: Vec3 = (1.0, 0.0, 0.0)
    q: float = Field(1.0, gt=0)
    pressure: PressureModel = "newtonian"

    @field_validator("flow_direction")
    @classmethod
    def _normalize(cls, value: Vec3) -> Vec3:
        norm = float(np.linalg.norm(value))
        if not norm > 0:
            raise ValueError("Направление потока не может быть нулевым")
        return tuple(float(c) / norm for c in value)

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.flow_direction, dtype=np.float64)


@dataclass
class FaceGeometry:
    normals: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray


def face_cross(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """m = e1 x e2 по граням и сами ребра e1 = v1 - v0, e2 = v2 - v0."""
    tri = mesh.face_vertices()
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    return np.cross(e1, e2), e1, e2


def scatter_cross_grad(mesh: TriMesh, e1: np.ndarray, e2: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """
    Переносит градиент по m = e1 x e2 (F, 3) на вершины (V, 3).
    """
    d_v1 = np.cross(e2, upstream)
    d_v2 = np.cross(upstream, e1)
    grad = np.zeros((mesh.num_vertices, 3))
    np.add.at(grad, mesh.faces[:, 1], d_v1)
    np.add.at(grad, mesh.faces[:, 2], d_v2)
    np.add.at(grad, mesh.faces[:, 0], -(d_v1 + d_v2))
    return grad


def face_geometry(mesh: TriMesh) -> FaceGeometry:
    """
    Единичные нормали (по обходу против часовой стрелки), площади и центры граней.
    Вырожденные грани получают нулевую площадь и нормаль (0, 0, 1).
    """
    if mesh.is_empty:
        return FaceGeometry(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))
    m, _, _ = face_cross(mesh)
    norms = np.linalg.norm(m, axis=1)
    degenerate = norms ** 2 < DEGENERATE_CROSS
    normals = np.where(degenerate[:, None], np.array([0.0, 0.0, 1.0]),
                       m / np.where(degenerate, 1.0, norms)[:, None])
    areas = np.where(degenerate, 0.0, 0.5 * norms)
    return FaceGeometry(normals, areas, mesh.face_vertices().mean(axis=1))


def newtonian_pressure(normal, cfg: DragConfig) -> np.ndarray:
    """q * max(0, n . d)^2; для единичной нормали (3,) или набора (F, 3)."""
    cos = np.asarray(normal, dtype=np.float64) @ cfg.direction
    return cfg.q * np.maximum(cos, 0.0) ** 2


def drag(mesh: TriMesh, cfg: DragConfig) -> Tuple[float, np.ndarray]:
    """
    Args:
        mesh: Ориентированная сетка
        cfg: Поток и модель давления

    Returns:
        Значение и градиент по вершинам (V, 3)
    """
    if mesh.is_empty:
        return 0.0, np.zeros((mesh.num_vertices, 3))

    m, e1, e2 = face_cross(mesh)
    d = cfg.direction
    a = m @ d
    if cfg.pressure == "constant":
        values = 0.5 * cfg.q * a
        upstream = np.broadcast_to(0.5 * cfg.q * d, m.shape).copy()
    else:
        s = np.einsum("ij,ij->i", m, m)
        active = (a > 0) & (s > DEGENERATE_CROSS)
        s_safe = np.where(active, s, 1.0)
        a_pos = np.where(active, a, 0.0)
        values = 0.5 * cfg.q * a_pos ** 3 / s_safe
        upstream = 0.5 * cfg.q * (3.0 * (a_pos ** 2 / s_safe)[:, None] * d[None, :]
                                  - (2.0 * a_pos ** 3 / s_safe ** 2)[:, None] * m)
    return float(np.sum(values)), scatter_cross_grad(mesh, e1, e2, upstream)
