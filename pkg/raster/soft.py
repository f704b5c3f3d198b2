"""
Мягкий растеризатор силуэта.

Для пикселя p и треугольника t: D_t(p) = sigmoid(sign_t(p) * d_t(p)^2 / sigma), где d_t -
расстояние от центра пикселя до проекции треугольника в нормализованных
координатах (смещение в пикселях / (height / 2)), sign = +1 внутри, -1 снаружи.
Покрытие I(p) = 1 - (1 - background) prod_t (1 - D_t(p)).
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from marching.cubes import TriMesh
from raster.camera import Camera, project
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)

# Добавка к знаменателю для ребер нулевой длины
TINY = 1e-30


class RasterConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(1e-4, gt=0)
    background: float = Field(0.0, ge=0, lt=1)
    # Окно треугольника расширяется на cull_sigmas * sqrt(sigma)
    cull_sigmas: float = Field(3.0, gt=0)


@dataclass
class SilhouetteImage:
    """Значения (height, width) в [0, 1], строки сверху вниз."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise ContractError("Значения силуэта должны лежать в [0, 1]")

    @classmethod
    def blank(cls, width: int, height: int) -> "SilhouetteImage":
        return cls(width, height, np.zeros((height, width)))


@dataclass
class _PixelPairs:
    """Пары (треугольник, пиксель) внутри окон отбора и их геометрия."""

    faces: np.ndarray
    pixels: np.ndarray
    a: np.ndarray
    d2: np.ndarray
    sign: np.ndarray
    edge: np.ndarray
    t: np.ndarray
    diff: np.ndarray


def _ndc_scale(camera: Camera) -> float:
    return 2.0 / camera.height


def _pairs(tri2d: np.ndarray, face_ids: np.ndarray, camera: Camera, cfg: RasterConfig) -> _PixelPairs:
    scale = _ndc_scale(camera)
    margin = cfg.cull_sigmas * np.sqrt(cfg.sigma) / scale
    lo = tri2d.min(axis=1) - margin
    hi = tri2d.max(axis=1) + margin
    c0 = np.clip(np.ceil(lo[:, 0] - 0.5), 0, camera.width).astype(np.int64)
    c1 = np.clip(np.floor(hi[:, 0] - 0.5), -1, camera.width - 1).astype(np.int64)
    r0 = np.clip(np.ceil(lo[:, 1] - 0.5), 0, camera.height).astype(np.int64)
    r1 = np.clip(np.floor(hi[:, 1] - 0.5), -1, camera.height - 1).astype(np.int64)
    cols = np.maximum(c1 - c0 + 1, 0)
    rows = np.maximum(r1 - r0 + 1, 0)
    counts = cols * rows

    local_tri = np.repeat(np.arange(len(tri2d)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    col = c0[local_tri] + offsets % np.maximum(cols[local_tri], 1)
    row = r0[local_tri] + offsets // np.maximum(cols[local_tri], 1)

    p = np.stack([col + 0.5, row + 0.5], axis=1) * scale
    tri = tri2d[local_tri] * scale

    d2_edges, t_edges, diffs, crosses = [], [], [], []
    for k in range(3):
        start = tri[:, k]
        e = tri[:, (k + 1) % 3] - start
        w = p - start
        t = np.clip(np.einsum("ij,ij->i", w, e) / (np.einsum("ij,ij->i", e, e) + TINY), 0.0, 1.0)
        diff = w - t[:, None] * e
        d2_edges.append(np.einsum("ij,ij->i", diff, diff))
        t_edges.append(t)
        diffs.append(diff)
        crosses.append(e[:, 0] * w[:, 1] - e[:, 1] * w[:, 0])

    d2_edges = np.stack(d2_edges, axis=1)
    edge = np.argmin(d2_edges, axis=1)
    pick = np.arange(len(edge))
    crosses = np.stack(crosses, axis=1)
    inside = np.all(crosses > 0, axis=1) | np.all(crosses < 0, axis=1)
    sign = np.where(inside, 1.0, -1.0)
    d2 = d2_edges[pick, edge]
    return _PixelPairs(
        faces=face_ids[local_tri],
        pixels=row * camera.width + col,
        a=sign * d2 / cfg.sigma,
        d2=d2,
        sign=sign,
        edge=edge,
        t=np.stack(t_edges, axis=1)[pick, edge],
        diff=np.stack(diffs, axis=1)[pick, edge],
    )


def _rasterize(mesh: TriMesh, camera: Camera, cfg: RasterConfig):
    """Покрытие (H*W,) плюс данные для обратного прохода."""
    pixels = camera.width * camera.height
    if mesh.is_empty:
        return np.full(pixels, cfg.background), None, None, None

    proj, jac, valid = project(camera, mesh.vertices)
    face_ok = np.all(valid[mesh.faces], axis=1)
    if not face_ok.all():
        logger.debug(f"Граней за камерой: {int(np.sum(~face_ok))}, исключены из покрытия")
    face_ids = np.flatnonzero(face_ok)
    if len(face_ids) == 0:
        return np.full(pixels, cfg.background), None, proj, jac

    pairs = _pairs(proj[mesh.faces[face_ids]], face_ids, camera, cfg)
    # log(1 - sigmoid(a)) = -log(1 + e^a)
    log_empty = np.full(pixels, np.log1p(-cfg.background))
    np.add.at(log_empty, pairs.pixels, -np.logaddexp(0.0, pairs.a))
    coverage = -np.expm1(log_empty)
    return coverage, pairs, proj, jac


def soft_silhouette(mesh: TriMesh, camera: Camera, cfg: RasterConfig = None) -> SilhouetteImage:
    """
    Args:
        mesh: Сетка (пустая дает фон)
        camera: Камера
        cfg: Мягкость и отбор

    Returns:
        SilhouetteImage
    """
    cfg = cfg or RasterConfig()
    coverage, _, _, _ = _rasterize(mesh, camera, cfg)
    return SilhouetteImage(camera.width, camera.height, np.clip(coverage, 0.0, 1.0))


def silhouette_l1(image: SilhouetteImage, target: SilhouetteImage) -> float:
    """Ненормированная L1 сумма |I - S| по пикселям."""
    if (image.width, image.height) != (target.width, target.height):
        raise ContractError(
            f"Размеры изображений не совпадают: {image.width}x{image.height} и "
            f"{target.width}x{target.height}"
        )
    return float(np.sum(np.abs(image.values - target.values)))


def silhouette_loss_and_grad(mesh: TriMesh, camera: Camera, cfg: RasterConfig,
                             target: SilhouetteImage) -> Tuple[float, np.ndarray]:
    """
    L1 между мягким силуэтом и целью и точный градиент по 3D вершинам.

    Returns:
        Значение и dL/dv (V, 3)
    """
    if (camera.width, camera.height) != (target.width, target.height):
        raise ContractError("Размер цели не совпадает с размером кадра камеры")
    coverage, pairs, _, jac = _rasterize(mesh, camera, cfg)
    residual = coverage - target.values.reshape(-1)
    value = float(np.sum(np.abs(residual)))
    grad = np.zeros((mesh.num_vertices, 3))
    if pairs is None or len(pairs.faces) == 0:
        return value, grad

    g = np.sign(residual)
    # dI/da = (1 - I) * sigmoid(a)
    dl_da = g[pairs.pixels] * (1.0 - coverage[pairs.pixels]) * expit(pairs.a)
    dl_dd2 = dl_da * pairs.sign / cfg.sigma

    # d(d^2)/d(start) = -2 (1 - t) diff, d(d^2)/d(end) = -2 t diff, в нормализованных координатах
    scale = _ndc_scale(camera)
    base = (dl_dd2 * -2.0 * scale)[:, None] * pairs.diff
    start = mesh.faces[pairs.faces, pairs.edge]
    end = mesh.faces[pairs.faces, (pairs.edge + 1) % 3]
    grad2d = np.zeros((mesh.num_vertices, 2))
    np.add.at(grad2d, start, (1.0 - pairs.t)[:, None] * base)
    np.add.at(grad2d, end, pairs.t[:, None] * base)

    grad = np.einsum("vij,vj->vi", jac, grad2d)
    return value, grad


def backward_vertices(mesh: TriMesh, camera: Camera, cfg: RasterConfig,
                      target: SilhouetteImage) -> np.ndarray:
    """dL/dv для L = silhouette_l1(soft_silhouette(mesh), target)."""
    return silhouette_loss_and_grad(mesh, camera, cfg, target)[1]
