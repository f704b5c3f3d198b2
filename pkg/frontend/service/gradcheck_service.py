import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from diffiso.backward import backward_latent
from geometry.grid import Grid3D, sample_field
from geometry.shapes import AnalyticShape, sample_surface
from losses.chamfer import chamfer_l2
from marching.cubes import TriMesh, marching_cubes
from raster.camera import Camera
from raster.soft import RasterConfig, silhouette_loss_and_grad, soft_silhouette
from sdfnet.network import SdfNetwork, forward, grad_params, grad_x, grad_z
from shapeopt.constraints import ConstraintBox, constraint_penalty
from shapeopt.drag import DragConfig, drag
from shapeopt.regularizer import RegularizerConfig, latent_knn_regularizer
from utils.gradcheck import central_difference, relative_error
from utils.logger import get_logger
from utils.rng import module_rng

logger = get_logger(__name__)

# Допустимая относительная ошибка по наборам проверок
TOLERANCES = {
    "sdfnet": 1e-5,
    "diffiso": 2e-2,
    "losses": 1e-6,
    "raster": 1e-3,
    "shapeopt": 1e-5,
}
SUITES = tuple(TOLERANCES)
DIFFISO_RESOLUTION = 64
# Шаги по z по убыванию; шаг отбрасывается, если меняется связность сетки
DIFFISO_STEPS = (1e-3, 2.5e-4, 6.25e-5, 1.5625e-5, 3.90625e-6, 9.765625e-7)


@dataclass
class SuiteResult:
    name: str
    tolerance: float
    checks: int
    worst_relative_error: Optional[float]
    passed: bool


def octahedron(scale: float = 0.5, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Замкнутая сетка с внешней ориентацией для проверок градиентов."""
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    f = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    return TriMesh(scale * v + np.asarray(center), np.array(f))


def vertex_check(fn: Callable[[TriMesh], tuple], mesh: TriMesh, step: float = 1e-6) -> float:
    """Относительная ошибка градиента по вершинам против центральных разностей."""
    _, analytic = fn(mesh)
    numeric = central_difference(lambda v: fn(mesh.with_vertices(v))[0], mesh.vertices, step)
    return relative_error(analytic, numeric)


def same_connectivity(a: TriMesh, b: TriMesh) -> bool:
    """Совпадают грани и ребра сетки, с которых сняты вершины: топология и род одинаковы."""
    if a.num_vertices != b.num_vertices or a.num_faces != b.num_faces:
        return False
    if not np.array_equal(a.faces, b.faces):
        return False
    if a.has_provenance and b.has_provenance:
        return np.array_equal(a.edge_pos, b.edge_pos) and np.array_equal(a.edge_neg, b.edge_neg)
    return True


def stencil_difference(value_and_mesh: Callable[[np.ndarray], Tuple[float, TriMesh]], z0: np.ndarray,
                       base: TriMesh, steps=DIFFISO_STEPS) -> Optional[Tuple[np.ndarray, float]]:
    """
    Центральные разности цели по z на фиксированной сетке.

    Шаг принимается, только если во всех точках шаблона связность сетки
    совпадает с base; иначе берется следующий, меньший шаг.

    Args:
        value_and_mesh: z -> (значение цели, извлеченная сетка)
        z0: Точка
        base: Сетка в z0
        steps: Шаги по убыванию

    Returns:
        (численный градиент, принятый шаг) или None, если топология меняется при всех шагах
    """
    z0 = np.asarray(z0, dtype=np.float64)
    for step in steps:
        numeric = np.zeros_like(z0)
        stable = True
        for i in range(len(z0)):
            values = []
            for sign in (1.0, -1.0):
                z = z0.copy()
                z[i] += sign * step
                value, mesh = value_and_mesh(z)
                if not same_connectivity(mesh, base):
                    stable = False
                    break
                values.append(value)
            if not stable:
                break
            numeric[i] = (values[0] - values[1]) / (2 * step)
        if stable:
            return numeric, step
        logger.debug(f"Топология меняется при шаге {step:g}, шаг уменьшен")
    return None


class GradcheckService:
    """Проверки аналитических градиентов всех модулей конечными разностями."""

    def __init__(self, net: SdfNetwork, latents: np.ndarray, seed: int = 0):
        self.net = net
        self.latents = np.asarray(latents, dtype=np.float64).reshape(-1, net.latent_dim)
        self.seed = seed

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        pass

    # ============ Наборы ============

    def check_sdfnet(self) -> List[float]:
        rng = module_rng(self.seed, "gradcheck.sdfnet")
        z = self.latents[0]
        errors = []
        for x in rng.uniform(-0.8, 0.8, size=(3, 3)):
            errors.append(relative_error(grad_x(self.net, z, x),
                                         central_difference(lambda p: forward(self.net, z, p), x)))
            errors.append(relative_error(grad_z(self.net, z, x),
                                         central_difference(lambda c: forward(self.net, c, x), z)))
        # Производная по параметрам вдоль случайного направления
        x = rng.uniform(-0.8, 0.8, size=(4, 3))
        grad = grad_params(self.net, z, x)
        directions = [rng.normal(size=p.shape) for p in self.net.parameters()]
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grad.arrays(), directions))

        def along(t: np.ndarray) -> float:
            moved = self.net.copy()
            for param, d in zip(moved.parameters(), directions):
                param += t[0] * d
            return float(np.sum(moved.forward_batch(z, x)[0]))

        errors.append(relative_error(analytic, central_difference(along, np.zeros(1))))
        return errors

    def check_diffiso(self) -> List[float]:
        """dL/dz через изоповерхность против разностей с фиксированной сеткой."""
        grid = Grid3D(resolution=DIFFISO_RESOLUTION)
        rng = module_rng(self.seed, "gradcheck.diffiso")
        target = sample_surface(AnalyticShape.sphere(0.3), 512, rng)
        z0 = self.latents[0]

        def mesh_at(z: np.ndarray) -> TriMesh:
            return marching_cubes(sample_field(self.net.evaluator(z), grid))

        base = mesh_at(z0)
        if base.is_empty:
            logger.warning("gradcheck diffiso: пустая сетка для кода 0, набор пропущен")
            return []
        _, upstream = chamfer_l2(base.vertices, target, reduction="mean")
        analytic = backward_latent(self.net, z0, base, upstream).values

        def chamfer_at(z: np.ndarray) -> Tuple[float, TriMesh]:
            mesh = mesh_at(z)
            if mesh.is_empty:
                return float("inf"), mesh
            return chamfer_l2(mesh.vertices, target, reduction="mean")[0], mesh

        result = stencil_difference(chamfer_at, z0, base)
        if result is None:
            logger.warning("gradcheck diffiso: топология меняется при всех шагах")
            return [float("inf")]
        numeric, step = result
        logger.debug(f"gradcheck diffiso: принят шаг {step:g}")
        return [relative_error(analytic, numeric)]

    def check_losses(self) -> List[float]:
        rng = module_rng(self.seed, "gradcheck.losses")
        P = rng.normal(size=(20, 3))
        Q = rng.normal(size=(25, 3))
        errors = []
        for reduction in ("sum", "mean"):
            _, analytic = chamfer_l2(P, Q, reduction=reduction)
            numeric = central_difference(lambda p: chamfer_l2(p, Q, reduction=reduction)[0], P, 1e-7)
            errors.append(relative_error(analytic, numeric))
        return errors

    def check_raster(self) -> List[float]:
        camera = Camera(eye=(0.3, 0.2, 2.5), width=16, height=16)
        cfg = RasterConfig(sigma=1e-3)
        mesh = octahedron(0.4)
        shifted = octahedron(0.4, center=(0.1, -0.05, 0.0))
        target = soft_silhouette(shifted, camera, cfg)
        return [vertex_check(lambda m: silhouette_loss_and_grad(m, camera, cfg, target), mesh)]

    def check_shapeopt(self) -> List[float]:
        mesh = octahedron(0.5)
        errors = [
            vertex_check(lambda m: drag(m, DragConfig(flow_direction=(1.0, 0.3, -0.2))), mesh),
            vertex_check(lambda m: drag(m, DragConfig(pressure="constant")), mesh),
            vertex_check(lambda m: constraint_penalty(m, [ConstraintBox(
                min_corner=(0.0, -0.2, -0.2), max_corner=(0.6, 0.2, 0.2))]), mesh),
        ]
        rng = module_rng(self.seed, "gradcheck.shapeopt")
        table = rng.normal(size=(12, 3))
        cfg = RegularizerConfig(alpha=0.2, k=5).with_table(table)
        z = rng.normal(size=3)
        _, analytic = latent_knn_regularizer(z, cfg)
        numeric = central_difference(lambda c: latent_knn_regularizer(c, cfg)[0], z, 1e-6)
        errors.append(relative_error(analytic, numeric))
        return errors

    # ============ Отчет ============

    def run(self, suites=SUITES) -> Dict[str, object]:
        results = []
        for name in suites:
            if not self.net.is_finite() and name in ("sdfnet", "diffiso"):
                errors = [float("inf")]
            else:
                try:
                    errors = getattr(self, f"check_{name}")()
                except (ValueError, FloatingPointError) as e:
                    logger.error(f"gradcheck {name}: {e}")
                    errors = [float("inf")]
            finite = [e for e in errors if np.isfinite(e)]
            worst = max(errors) if errors else None
            passed = bool(errors) and len(finite) == len(errors) and worst <= TOLERANCES[name]
            results.append(SuiteResult(
                name=name,
                tolerance=TOLERANCES[name],
                checks=len(errors),
                worst_relative_error=float(worst) if worst is not None and np.isfinite(worst) else None,
                passed=passed,
            ))
            logger.info(f"gradcheck {name}: худшая ошибка {worst}, допуск {TOLERANCES[name]}")
        return {
            "passed": all(r.passed for r in results),
            "suites": {r.name: asdict(r) for r in results},
        }

    def write_report(self, path: Path, report: Dict[str, object]) -> Path:
        path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path
