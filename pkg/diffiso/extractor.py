"""
Прямой проход с сохранением состояния: первое извлечение плотное, следующие
пересчитывают поле только в полосе у предыдущей поверхности.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from geometry.grid import Evaluator, Grid3D, ScalarField, sample_field
from marching.cubes import TriMesh, marching_cubes
from marching.sparse import DEFAULT_LIPSCHITZ, active_set, default_tau, sparse_resample, stale_crossings
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class Extraction:
    mesh: TriMesh
    field: ScalarField
    evaluations: int
    dense: bool


class SurfaceExtractor:
    """
    Извлекает сетки для последовательности полей (например, итераций по z).

    Args:
        grid: Сетка выборки
        tau: Порог полосы; по умолчанию 3 h L
        dense_every: Период полного плотного пересчета (0 - только при сбое)
        workers: Число потоков для вычисления поля
        sparse: Выключает разреженный режим целиком
        lipschitz: Оценка константы Липшица для порога по умолчанию
    """

    def __init__(self, grid: Grid3D, tau: Optional[float] = None, dense_every: int = 0,
                 workers: int = 1, sparse: bool = True, lipschitz: float = DEFAULT_LIPSCHITZ):
        if tau is not None and not tau > 0:
            raise ContractError(f"Порог tau должен быть > 0, получено {tau}")
        if dense_every < 0:
            raise ContractError(f"dense_every должен быть >= 0, получено {dense_every}")
        self.grid = grid
        self.tau = tau if tau is not None else default_tau(grid, lipschitz)
        self.dense_every = dense_every
        self.workers = workers
        self.sparse = sparse
        self.calls = 0
        self.total_evaluations = 0
        self.fallbacks = 0
        self._field: Optional[ScalarField] = None

    def reset(self) -> None:
        self._field = None
        self.calls = 0

    def _dense(self, evaluator: Evaluator) -> ScalarField:
        return sample_field(evaluator, self.grid, workers=self.workers)

    def extract(self, evaluator: Evaluator) -> Extraction:
        """
        Args:
            evaluator: Векторизованное поле (M, 3) -> (M,)

        Returns:
            Extraction с сеткой, полем и числом вычислений
        """
        periodic = self.dense_every > 0 and self.calls % self.dense_every == 0
        dense = self._field is None or not self.sparse or periodic
        if dense:
            field = self._dense(evaluator)
            evaluations = field.values.size
        else:
            field, evaluations = sparse_resample(self._field, evaluator, self.tau, workers=self.workers)
            fresh = np.zeros(field.values.size, dtype=bool)
            fresh[active_set(self._field, self.tau).indices] = True
            stale = stale_crossings(field, fresh.reshape(field.grid.shape))
            if stale:
                logger.warning(
                    f"Смена знака у {stale} ребер вне полосы tau={self.tau:.4g}: плотный пересчет"
                )
                self.fallbacks += 1
                field = self._dense(evaluator)
                evaluations += field.values.size
                dense = True

        self.calls += 1
        self.total_evaluations += evaluations
        self._field = field
        mesh = marching_cubes(field)
        if mesh.is_empty:
            logger.warning("Извлечена пустая сетка")
        return Extraction(mesh, field, evaluations, dense)
