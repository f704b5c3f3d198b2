"""
Целевые функции над латентным кодом: z -> поле -> сетка -> потери по вершинам ->
обратный проход через изоповерхность -> dL/dz.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from diffiso.backward import backward_latent
from diffiso.extractor import SurfaceExtractor
from geometry.grid import Grid3D
from losses.chamfer import chamfer_l2, check_cloud
from marching.cubes import TriMesh
from raster.camera import Camera
from raster.soft import RasterConfig, SilhouetteImage, silhouette_loss_and_grad
from sdfnet.network import SdfNetwork
from shapeopt.constraints import ConstraintBox, constraint_penalty
from shapeopt.drag import DragConfig, drag
from shapeopt.regularizer import RegularizerConfig, latent_regularizer
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class ObjectiveRecord:
    """Последнее вычисление цели: слагаемые, сетка, число вычислений сети."""

    value: float
    components: Dict[str, float] = field(default_factory=dict)
    mesh: Optional[TriMesh] = None
    evaluations: int = 0


class LatentObjective:
    """
    Общая часть целей: извлечение сетки, обратный проход, регуляризатор.
    Подклассы реализуют surface_loss(mesh) -> (слагаемые, dL/dv).
    """

    def __init__(self, net: SdfNetwork, extractor: SurfaceExtractor,
                 regularizer: Optional[RegularizerConfig] = None):
        self.net = net
        self.extractor = extractor
        self.regularizer = regularizer
        self.last: Optional[ObjectiveRecord] = None
        self.history: List[ObjectiveRecord] = []

    def surface_loss(self, mesh: TriMesh) -> Tuple[Dict[str, float], np.ndarray]:
        raise NotImplementedError

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.net.latent_dim,):
            raise ContractError(f"Ожидался код длины {self.net.latent_dim}, получено {z.shape}")
        extraction = self.extractor.extract(self.net.evaluator(z))
        mesh = extraction.mesh

        if mesh.is_empty:
            logger.warning("Пустая сетка: цель не определена")
            record = ObjectiveRecord(float("inf"), {}, mesh, extraction.evaluations)
            self._remember(record)
            return record.value, np.zeros_like(z)

        components, upstream = self.surface_loss(mesh)
        grad = backward_latent(self.net, z, mesh, upstream).values
        if self.regularizer is not None:
            reg_value, reg_grad = latent_regularizer(z, self.regularizer)
            components["regularizer"] = reg_value
            grad = grad + reg_grad
        value = float(sum(components.values()))
        self._remember(ObjectiveRecord(value, components, mesh, extraction.evaluations))
        return value, grad

    def _remember(self, record: ObjectiveRecord) -> None:
        self.last = record
        self.history.append(record)


class DragObjective(LatentObjective):
    """drag + штраф боксов (+ регуляризатор)."""

    def __init__(self, net: SdfNetwork, extractor: SurfaceExtractor, drag_cfg: DragConfig,
                 boxes: Sequence[ConstraintBox] = (), regularizer: Optional[RegularizerConfig] = None):
        super().__init__(net, extractor, regularizer)
        self.drag_cfg = drag_cfg
        self.boxes = list(boxes)

    def surface_loss(self, mesh: TriMesh):
        drag_value, drag_grad = drag(mesh, self.drag_cfg)
        penalty, penalty_grad = constraint_penalty(mesh, self.boxes)
        return {"drag": drag_value, "constraint": penalty}, drag_grad + penalty_grad


class ChamferObjective(LatentObjective):
    """Средний Чамфер между вершинами сетки и целевым облаком."""

    def __init__(self, net: SdfNetwork, extractor: SurfaceExtractor, target: np.ndarray,
                 regularizer: Optional[RegularizerConfig] = None):
        super().__init__(net, extractor, regularizer)
        self.target = check_cloud(target, "target")

    def surface_loss(self, mesh: TriMesh):
        value, grad = chamfer_l2(mesh.vertices, self.target, reduction="mean")
        return {"chamfer": value}, grad


class SilhouetteObjective(LatentObjective):
    """L1 между мягким силуэтом и целевым изображением."""

    def __init__(self, net: SdfNetwork, extractor: SurfaceExtractor, camera: Camera,
                 raster: RasterConfig, target: SilhouetteImage,
                 regularizer: Optional[RegularizerConfig] = None):
        super().__init__(net, extractor, regularizer)
        if (camera.width, camera.height) != (target.width, target.height):
            raise ContractError(
                f"Кадр камеры {camera.width}x{camera.height} не совпадает с целью "
                f"{target.width}x{target.height}"
            )
        self.camera = camera
        self.raster = raster
        self.target = target

    def surface_loss(self, mesh: TriMesh):
        value, grad = silhouette_loss_and_grad(mesh, self.camera, self.raster, self.target)
        return {"silhouette": value}, grad


def assemble_drag_objective(net: SdfNetwork, grid: Grid3D, drag_cfg: DragConfig,
                            boxes: Sequence[ConstraintBox], reg_cfg: Optional[RegularizerConfig],
                            sparse: bool = True, dense_every: int = 0, workers: int = 1) -> DragObjective:
    """
    Цель оптимизации формы: разреженная выборка поля, marching cubes, сопротивление
    и ограничения по вершинам, обратный проход в z и регуляризатор.
    """
    extractor = SurfaceExtractor(grid, dense_every=dense_every, workers=workers, sparse=sparse)
    return DragObjective(net, extractor, drag_cfg, boxes, reg_cfg)
