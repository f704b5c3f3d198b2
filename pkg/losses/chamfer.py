"""
Расстояние Чамфера между облаками точек и его градиент по первому облаку.
"""
from typing import Literal, Tuple

import numpy as np
from scipy.spatial import cKDTree

from utils.errors import ContractError

Reduction = Literal["sum", "mean"]

# Начальное число соседей для разрешения равных расстояний по наименьшему индексу
TIE_CANDIDATES = 8


def check_cloud(points, name: str) -> np.ndarray:
    cloud = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(cloud) == 0:
        raise ContractError(f"Пустое облако точек {name}")
    if not np.all(np.isfinite(cloud)):
        raise ContractError(f"Нечисловые координаты в облаке {name}")
    return cloud


def nearest_neighbors(source: np.ndarray, target: np.ndarray, workers: int = 1) -> np.ndarray:
    """
    Индекс ближайшей точки target для каждой точки source.
    При равных расстояниях выбирается наименьший индекс: если все запрошенные
    кандидаты равноудалены, запрос повторяется с удвоенным k.
    """
    tree = cKDTree(target)
    result = np.empty(len(source), dtype=np.int64)
    pending = np.arange(len(source))
    k = TIE_CANDIDATES
    while pending.size:
        k = min(k, len(target))
        _, idx = tree.query(source[pending], k=k, workers=workers)
        idx = np.asarray(idx, dtype=np.int64).reshape(len(pending), k)
        diff = source[pending, None, :] - target[idx]
        exact = np.einsum("ijk,ijk->ij", diff, diff)
        best = exact.min(axis=1)
        result[pending] = np.where(exact == best[:, None], idx, np.iinfo(np.int64).max).min(axis=1)
        if k == len(target):
            break
        pending = pending[exact[:, -1] == best]
        k *= 2
    return result


def _reduce(values: np.ndarray, reduction: Reduction) -> Tuple[float, float]:
    if reduction == "mean":
        return float(values.mean()), 1.0 / len(values)
    if reduction == "sum":
        return float(values.sum()), 1.0
    raise ContractError(f"Неизвестный режим свертки {reduction!r}")


def chamfer_l2(P, Q, reduction: Reduction = "sum", workers: int = 1) -> Tuple[float, np.ndarray]:
    """
    sum_p min_q |p - q|^2 + sum_q min_p |p - q|^2.

    Args:
        P: Облако (n, 3), по которому берется градиент
        Q: Облако (m, 3)
        reduction: "sum" или "mean" (каждое слагаемое делится на размер своего облака)
        workers: Потоки для поиска соседей

    Returns:
        Значение и градиент по точкам P (n, 3)
    """
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")

    to_q = nearest_neighbors(P, Q, workers)
    forward = P - Q[to_q]
    forward_sq = np.einsum("ij,ij->i", forward, forward)

    to_p = nearest_neighbors(Q, P, workers)
    backward = P[to_p] - Q
    backward_sq = np.einsum("ij,ij->i", backward, backward)

    value_f, scale_f = _reduce(forward_sq, reduction)
    value_b, scale_b = _reduce(backward_sq, reduction)

    grad = 2.0 * scale_f * forward
    np.add.at(grad, to_p, 2.0 * scale_b * backward)
    return value_f + value_b, grad


def chamfer_sqrt_l2(P, Q, reduction: Reduction = "sum", workers: int = 1) -> float:
    """Вариант с неквадратичными расстояниями."""
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    forward = np.linalg.norm(P - Q[nearest_neighbors(P, Q, workers)], axis=1)
    backward = np.linalg.norm(P[nearest_neighbors(Q, P, workers)] - Q, axis=1)
    return _reduce(forward, reduction)[0] + _reduce(backward, reduction)[0]
