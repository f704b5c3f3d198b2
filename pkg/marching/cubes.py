"""
Извлечение изоповерхности нулевого уровня методом marching cubes.

Вершины дедуплицируются по ключу ребра сетки (плоский индекс младшего узла * 3 + ось),
а не по координатам, поэтому одинаковые значения поля дают бит в бит одинаковую сетку.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from geometry.grid import Grid3D, ScalarField
from marching.tables import CORNER_OFFSETS, EDGE_CORNERS, TRIANGLE_TABLE
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)

# Точные нули поля перед классификацией сдвигаются в положительную сторону
ZERO_NUDGE = 1e-12
DEGENERATE_AREA = 1e-12


@dataclass
class TriMesh:
    """
    Треугольная сетка. Грани ориентированы против часовой стрелки при взгляде
    снаружи (нормаль смотрит в сторону положительного поля).

    Для вершин, полученных marching cubes, хранится ребро сетки:
    edge_pos - узел с s >= 0, edge_neg - узел с s < 0, edge_t - параметр x.
    """

    vertices: np.ndarray
    faces: np.ndarray
    edge_pos: Optional[np.ndarray] = field(default=None)
    edge_neg: Optional[np.ndarray] = field(default=None)
    edge_t: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return self.num_faces == 0

    @property
    def has_provenance(self) -> bool:
        return self.edge_pos is not None

    def face_vertices(self) -> np.ndarray:
        """Координаты вершин граней (F, 3, 3)."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Та же связность с другими координатами (происхождение вершин отбрасывается)."""
        return TriMesh(vertices, self.faces.copy())

    def validate(self) -> None:
        """Проверяет индексы граней и конечность координат."""
        if self.num_faces and (self.faces.min() < 0 or self.faces.max() >= self.num_vertices):
            raise ContractError(
                f"Индексы граней вне диапазона 0..{self.num_vertices - 1}"
            )
        if not np.all(np.isfinite(self.vertices)):
            raise ContractError("Нечисловые координаты вершин")


def nudge_zeros(values: np.ndarray) -> np.ndarray:
    return np.where(values == 0.0, ZERO_NUDGE, values)


def _interpolate(g_i: np.ndarray, g_j: np.ndarray, s_i: np.ndarray, s_j: np.ndarray) -> np.ndarray:
    x = s_i / (s_i - s_j)
    return g_i + x[..., None] * (g_j - g_i), x


def interpolate_vertex(g_i, g_j, s_i: float, s_j: float) -> np.ndarray:
    """
    Вершина на ребре [G_i, G_j]: G_i + x (G_j - G_i), x = s_i / (s_i - s_j).

    Args:
        g_i, g_j: Концы ребра
        s_i, s_j: Значения поля в концах (разных знаков после сдвига нулей)

    Returns:
        Координаты вершины (3,)
    """
    s_i, s_j = float(nudge_zeros(np.float64(s_i))), float(nudge_zeros(np.float64(s_j)))
    if (s_i < 0) == (s_j < 0):
        raise ContractError(f"Значения одного знака на ребре: s_i={s_i}, s_j={s_j}")
    vertex, _ = _interpolate(np.asarray(g_i, dtype=np.float64), np.asarray(g_j, dtype=np.float64),
                             np.float64(s_i), np.float64(s_j))
    return vertex


def interpolation_sensitivity(s_i: float, s_j: float) -> Tuple[float, float]:
    """
    Производные параметра x = s_i / (s_i - s_j) по s_i и s_j.
    Обе расходятся при s_i -> s_j: через интерполяцию нельзя поменять знаки концов.
    """
    denom = (s_i - s_j) ** 2
    return -s_j / denom, s_i / denom


def _cube_indices(negative: np.ndarray) -> np.ndarray:
    n = negative.shape[0]
    cube = np.zeros((n - 1, n - 1, n - 1), dtype=np.int64)
    for bit, (di, dj, dk) in enumerate(CORNER_OFFSETS):
        corner = negative[di:n - 1 + di, dj:n - 1 + dj, dk:n - 1 + dk]
        cube |= corner.astype(np.int64) << bit
    return cube


def marching_cubes(field: ScalarField) -> TriMesh:
    """
    Извлекает поверхность нулевого уровня поля.

    Args:
        field: Полностью валидное поле на сетке

    Returns:
        TriMesh с происхождением вершин; пустая сетка, если знак поля не меняется
    """
    if not field.fully_valid:
        raise ContractError("Marching cubes требует полностью валидного поля")

    grid: Grid3D = field.grid
    n = grid.resolution
    values = nudge_zeros(field.values)

    cube = _cube_indices(values < 0)
    active = (cube != 0) & (cube != 255)
    if not active.any():
        return TriMesh.empty()

    cells = np.argwhere(active)
    rows = TRIANGLE_TABLE[cube[active]]
    cell_of, slot = np.nonzero(rows >= 0)
    edge_ids = rows[cell_of, slot]

    corner_a = cells[cell_of] + CORNER_OFFSETS[EDGE_CORNERS[edge_ids, 0]]
    corner_b = cells[cell_of] + CORNER_OFFSETS[EDGE_CORNERS[edge_ids, 1]]
    low = np.minimum(corner_a, corner_b)
    axis = np.argmax(np.abs(corner_b - corner_a), axis=1)
    keys = np.ravel_multi_index(low.T, grid.shape) * 3 + axis

    unique_keys, inverse = np.unique(keys, return_inverse=True)
    # Таблица ориентирует грани к отрицательной стороне: меняем обход
    faces = inverse.reshape(-1, 3)[:, [0, 2, 1]]

    strides = np.array([n * n, n, 1], dtype=np.int64)
    node_low = unique_keys // 3
    node_high = node_low + strides[unique_keys % 3]
    flat = values.reshape(-1)
    low_positive = flat[node_low] >= 0
    edge_pos = np.where(low_positive, node_low, node_high)
    edge_neg = np.where(low_positive, node_high, node_low)

    vertices, edge_t = _interpolate(
        grid.node_positions(edge_pos), grid.node_positions(edge_neg),
        flat[edge_pos], flat[edge_neg],
    )

    mesh = drop_degenerate_faces(TriMesh(vertices, faces, edge_pos, edge_neg, edge_t))
    logger.debug(f"Marching cubes: {mesh.num_vertices} вершин, {mesh.num_faces} граней")
    return mesh


def drop_degenerate_faces(mesh: TriMesh) -> TriMesh:
    """
    Удаляет грани площадью меньше DEGENERATE_AREA и вершины, на которые
    больше не ссылается ни одна грань. Индексы граней и происхождение
    вершин перенумеровываются согласованно.
    """
    keep = face_areas(mesh) >= DEGENERATE_AREA
    if keep.all():
        return mesh
    logger.debug(f"Удалено вырожденных граней: {int((~keep).sum())} из {mesh.num_faces}")

    faces = mesh.faces[keep]
    used = np.unique(faces)
    if used.size == 0:
        return TriMesh.empty()
    remap = np.full(mesh.num_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    provenance = (
        (mesh.edge_pos[used], mesh.edge_neg[used], mesh.edge_t[used])
        if mesh.has_provenance else (None, None, None)
    )
    return TriMesh(mesh.vertices[used], remap[faces], *provenance)


def face_areas(mesh: TriMesh) -> np.ndarray:
    if mesh.is_empty:
        return np.zeros(0)
    tri = mesh.face_vertices()
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def enclosed_volume(mesh: TriMesh) -> float:
    """Объем по формуле дивергенции; положителен для внешней ориентации."""
    if mesh.is_empty:
        return 0.0
    tri = mesh.face_vertices()
    return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0)
