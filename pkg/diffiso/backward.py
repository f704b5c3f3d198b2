"""
Обратный проход через извлечение изоповерхности.

Смещение вершины при возмущении поля: dv/ds = -n(v), n = grad_x f. Поэтому
dL/dz = sum_v (-(dL/dv) . n(v)) * df/dz(v), и аналогично для параметров сети.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from marching.cubes import TriMesh
from sdfnet.network import NetworkGrad, SdfNetwork
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class SurfaceGradientBundle:
    """Вершинные величины для обратного прохода."""

    upstream: np.ndarray
    normals: np.ndarray
    values: np.ndarray
    latent_grads: np.ndarray

    @property
    def normal_weights(self) -> np.ndarray:
        """u_v = -(dL/dv) . n(v)."""
        return -np.einsum("ij,ij->i", self.upstream, self.normals)


@dataclass
class LatentGrad:
    values: np.ndarray
    normal_norm_stats: Dict[str, float] = field(default_factory=dict)


def _norm_stats(normals: np.ndarray) -> Dict[str, float]:
    if len(normals) == 0:
        return {}
    norms = np.linalg.norm(normals, axis=1)
    return {"min": float(norms.min()), "mean": float(norms.mean()), "max": float(norms.max())}


def surface_bundle(net: SdfNetwork, z, mesh: TriMesh, upstream: np.ndarray,
                   normalize_normals: bool = False) -> SurfaceGradientBundle:
    """
    Вычисляет нормали и df/dz во всех вершинах за один проход сети.

    Args:
        net: Сеть
        z: Латентный код, при котором извлечена сетка
        mesh: Сетка
        upstream: dL/dv по вершинам (V, 3)
        normalize_normals: Делить ли grad_x f на его норму (диагностический режим)

    Returns:
        SurfaceGradientBundle
    """
    upstream = np.asarray(upstream, dtype=np.float64).reshape(-1, 3)
    if len(upstream) != mesh.num_vertices:
        raise ContractError(
            f"Число градиентов {len(upstream)} не совпадает с числом вершин {mesh.num_vertices}"
        )
    if not np.all(np.isfinite(upstream)):
        raise ContractError("Нечисловые значения во входящем градиенте")

    if mesh.num_vertices == 0:
        empty = np.zeros((0, 3))
        return SurfaceGradientBundle(empty, empty, np.zeros(0), np.zeros((0, net.latent_dim)))

    values, gx, gz = net.value_and_input_grads(z, mesh.vertices)
    if normalize_normals:
        gx = gx / np.maximum(np.linalg.norm(gx, axis=1, keepdims=True), 1e-12)
    return SurfaceGradientBundle(upstream, gx, values, gz)


def backward_latent(net: SdfNetwork, z, mesh: TriMesh, upstream: np.ndarray,
                    normalize_normals: bool = False) -> LatentGrad:
    """
    dL/dz через сетку.

    Args:
        net: Сеть
        z: Латентный код (Z,)
        mesh: Сетка, извлеченная из f(., z)
        upstream: dL/dv (V, 3)
        normalize_normals: Использовать единичные нормали вместо grad_x f

    Returns:
        LatentGrad
    """
    bundle = surface_bundle(net, z, mesh, upstream, normalize_normals)
    weights = bundle.normal_weights
    # Сумма в фиксированном порядке вершин
    values = weights @ bundle.latent_grads if len(weights) else np.zeros(net.latent_dim)
    stats = _norm_stats(bundle.normals)
    if stats:
        logger.debug(
            f"|grad f| на вершинах: min={stats['min']:.4f} mean={stats['mean']:.4f} "
            f"max={stats['max']:.4f}"
        )
    return LatentGrad(np.asarray(values, dtype=np.float64), stats)


def backward_params(net: SdfNetwork, z, mesh: TriMesh, upstream: np.ndarray,
                    normalize_normals: bool = False) -> NetworkGrad:
    """
    dL/dtheta через сетку: sum_v u_v * df/dtheta(v).

    Returns:
        Градиент той же формы, что параметры сети
    """
    bundle = surface_bundle(net, z, mesh, upstream, normalize_normals)
    if mesh.num_vertices == 0:
        return net.zero_grad()
    _, cache = net.forward_batch(z, mesh.vertices)
    _, grad = net.backward_batch(cache, bundle.normal_weights)
    return grad
