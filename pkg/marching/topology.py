"""
Топологические проверки сетки: эйлерова характеристика и род.
"""
import numpy as np

from marching.cubes import TriMesh
from utils.errors import NonManifoldError


def unique_edges(mesh: TriMesh):
    """Уникальные неориентированные ребра и число граней при каждом."""
    if mesh.is_empty:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    return np.unique(edges, axis=0, return_counts=True)


def euler_characteristic(mesh: TriMesh) -> int:
    """
    chi = V - E + F для замкнутого 2-многообразия.

    Raises:
        NonManifoldError: если какое-то ребро принадлежит не ровно двум граням
    """
    edges, counts = unique_edges(mesh)
    bad = counts != 2
    if bad.any():
        raise NonManifoldError([tuple(int(v) for v in e) for e in edges[bad]],
                               [int(c) for c in counts[bad]])
    return int(mesh.num_vertices - len(edges) + mesh.num_faces)


def genus(mesh: TriMesh) -> int:
    """genus = (2 - chi) / 2."""
    return (2 - euler_characteristic(mesh)) // 2


def is_closed_manifold(mesh: TriMesh) -> bool:
    _, counts = unique_edges(mesh)
    return bool(len(counts)) and bool(np.all(counts == 2))
