"""
Метрики качества реконструкции: EMD, F-score, поверхностный IoU и сводный отчет.
"""
import json
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from losses.chamfer import check_cloud, chamfer_l2, chamfer_sqrt_l2
from losses.sampling import NormalizeMode, cloud_transform, sample_mesh_points
from marching.cubes import TriMesh
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)

EMD_MAX_POINTS = 256
FSCORE_FRACTION = 0.05
IOU_RESOLUTION = 32

# Число точек для протокола оценки
CHAMFER_POINTS = 2048
FSCORE_POINTS = 1024
EMD_POINTS = 256


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    chamfer_l2: Optional[float] = Field(None, ge=0)
    chamfer_sqrt_l2: Optional[float] = Field(None, ge=0)
    emd: Optional[float] = Field(None, ge=0)
    fscore: Optional[float] = Field(None, ge=0, le=100)
    surface_iou: Optional[float] = Field(None, ge=0, le=1)

    def to_json_line(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)


def emd_exact(P, Q) -> float:
    """
    min по биекциям sum |p - phi(p)| через точное решение задачи о назначениях.

    Raises:
        ContractError: при разных размерах или больше EMD_MAX_POINTS точек
    """
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    if len(P) != len(Q):
        raise ContractError(f"EMD требует облаков одного размера: {len(P)} и {len(Q)}")
    if len(P) > EMD_MAX_POINTS:
        raise ContractError(f"EMD ограничен {EMD_MAX_POINTS} точками, получено {len(P)}")
    cost = cdist(P, Q)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def default_fscore_threshold(target) -> float:
    """5% диагонали ограничивающего параллелепипеда целевого облака."""
    cloud = check_cloud(target, "target")
    return FSCORE_FRACTION * float(np.linalg.norm(cloud.max(axis=0) - cloud.min(axis=0)))


def fscore(P, Q, d: float) -> float:
    """
    Гармоническое среднее точности и полноты в процентах.

    Args:
        P: Предсказанное облако
        Q: Целевое облако
        d: Порог расстояния (строго меньше)
    """
    if not d > 0:
        raise ContractError(f"Порог F-score должен быть > 0, получено {d}")
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    to_q, _ = cKDTree(Q).query(P, k=1)
    to_p, _ = cKDTree(P).query(Q, k=1)
    precision = 100.0 * float(np.mean(to_q < d))
    recall = 100.0 * float(np.mean(to_p < d))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _occupied(cloud: np.ndarray, lo: np.ndarray, extent: np.ndarray, resolution: int) -> set:
    idx = np.floor((cloud - lo) / extent * resolution).astype(np.int64)
    idx = np.clip(idx, 0, resolution - 1)
    return set(map(tuple, idx.tolist()))


def surface_iou(P, Q, resolution: int = IOU_RESOLUTION) -> float:
    """
    IoU занятых вокселей обоих облаков на общем ограничивающем параллелепипеде.
    """
    if resolution < 2:
        raise ContractError(f"Разрешение IoU должно быть >= 2, получено {resolution}")
    P = check_cloud(P, "P")
    Q = check_cloud(Q, "Q")
    both = np.concatenate([P, Q])
    lo = both.min(axis=0)
    extent = both.max(axis=0) - lo
    extent = np.where(extent > 0, extent, 1.0)
    occupied_p = _occupied(P, lo, extent, resolution)
    occupied_q = _occupied(Q, lo, extent, resolution)
    return len(occupied_p & occupied_q) / len(occupied_p | occupied_q)


def evaluate_surfaces(pred: TriMesh, target: TriMesh, seed: int = 0,
                      normalize: Optional[NormalizeMode] = None) -> MetricReport:
    """
    Сводный отчет по двум сеткам: 2048 точек для Чамфера и IoU, 1024 для F-score,
    256 для EMD. Чамфер усредняется по точкам.

    Args:
        pred: Реконструированная сетка
        target: Эталонная сетка
        seed: Seed выборки точек
        normalize: Нормализация по целевому облаку ("unit_sphere" или "unit_box")
    """
    clouds = {}
    for count in (CHAMFER_POINTS, FSCORE_POINTS, EMD_POINTS):
        p = sample_mesh_points(pred, count, "area", seed)
        q = sample_mesh_points(target, count, "area", seed + 1)
        if normalize is not None:
            center, scale = cloud_transform(q, normalize)
            p, q = (p - center) / scale, (q - center) / scale
        clouds[count] = (p, q)

    p, q = clouds[CHAMFER_POINTS]
    report = MetricReport(
        chamfer_l2=chamfer_l2(p, q, reduction="mean")[0],
        chamfer_sqrt_l2=chamfer_sqrt_l2(p, q, reduction="mean"),
        surface_iou=surface_iou(p, q),
        fscore=fscore(*clouds[FSCORE_POINTS], default_fscore_threshold(clouds[FSCORE_POINTS][1])),
        emd=emd_exact(*clouds[EMD_POINTS]),
    )
    logger.info(f"Метрики: {report.to_json_line()}")
    return report
