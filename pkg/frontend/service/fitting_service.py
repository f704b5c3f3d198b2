import csv
import json
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from diffiso.extractor import SurfaceExtractor
from frontend.service.training_service import require_dir
from geometry.grid import sample_field
from losses.metrics import evaluate_surfaces
from losses.sampling import sample_mesh_points
from marching.cubes import TriMesh, marching_cubes
from marching.obj_io import export_obj, import_obj
from raster.camera import Camera
from raster.pgm import read_pgm, write_pgm
from raster.soft import soft_silhouette
from sdfnet.checkpoint import load_checkpoint
from shapeopt.adam import OptimizationResult, optimize_latent
from shapeopt.objectives import (ChamferObjective, LatentObjective, SilhouetteObjective,
                                 assemble_drag_objective)
from utils.config import RunConfig
from utils.errors import ContractError
from utils.logger import get_logger
from utils.rng import module_rng

logger = get_logger(__name__)

LatentSource = Union[int, str, None]


class FittingService:
    """
    Операции над обученной сетью: извлечение, рендер, подгонка латентного кода
    (Чамфер, силуэт, сопротивление), оценка и замер ускоренного извлечения.
    """

    def __init__(self, config: RunConfig, checkpoint_path=None):
        self.config = config
        path = checkpoint_path or config.paths.checkpoint
        self.net, self.latents, self.raw_config = load_checkpoint(path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        pass

    # ============ Вспомогательные ============

    def resolve_latent(self, source: LatentSource = None) -> np.ndarray:
        """
        Латентный код по индексу таблицы или из JSON файла со списком чисел.
        """
        if source is None:
            source = self.config.paths.latent if self.config.paths.latent is not None else 0
        if isinstance(source, str) and source.lstrip("-").isdigit():
            source = int(source)
        if isinstance(source, int):
            if not 0 <= source < len(self.latents):
                raise ContractError(f"Индекс кода {source} вне таблицы из {len(self.latents)} кодов")
            return self.latents[source].copy()
        try:
            values = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ContractError(f"Не удалось прочитать латентный код {source}: {e}")
        z = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(z) != self.net.latent_dim:
            raise ContractError(f"Длина кода {len(z)} в {source} не совпадает с Z={self.net.latent_dim}")
        return z

    def dense_mesh(self, z: np.ndarray) -> TriMesh:
        field = sample_field(self.net.evaluator(z), self.config.grid, workers=self.config.workers)
        return marching_cubes(field)

    def _extractor(self) -> SurfaceExtractor:
        sparse = self.config.sparse
        return SurfaceExtractor(self.config.grid, dense_every=sparse.dense_every,
                                workers=self.config.workers, sparse=sparse.enabled,
                                lipschitz=sparse.lipschitz)

    def _regularizer(self):
        return self.config.regularizer.with_table(self.latents)

    def _camera(self, camera_path: Optional[str]) -> Camera:
        path = camera_path or self.config.paths.camera
        return Camera.from_json(path) if path else self.config.camera

    # ============ Команды ============

    def extract(self, source: LatentSource = None) -> Dict[str, Path]:
        out_dir = require_dir(self.config.paths.out_dir)
        z = self.resolve_latent(source)
        mesh = self.dense_mesh(z)
        if mesh.is_empty:
            logger.warning("Поверхность не найдена: записывается пустой OBJ")
        path = out_dir / "mesh.obj"
        export_obj(mesh, path)
        return {"mesh": path}

    def render(self, source: LatentSource = None, camera_path: Optional[str] = None) -> Dict[str, Path]:
        out_dir = require_dir(self.config.paths.out_dir)
        camera = self._camera(camera_path)
        image = soft_silhouette(self.dense_mesh(self.resolve_latent(source)), camera, self.config.raster)
        path = write_pgm(out_dir / "silhouette.pgm", image)
        camera_file = out_dir / "camera.json"
        camera_file.write_text(json.dumps(camera.to_json(), indent=1) + "\n", encoding="utf-8")
        return {"image": path, "camera": camera_file}

    def fit_chamfer(self, target_obj, source: LatentSource = None) -> Dict[str, object]:
        target = import_obj(target_obj)
        if target.is_empty:
            raise ContractError(f"Целевая сетка {target_obj} пуста")
        cloud = sample_mesh_points(target, target.num_vertices, "vertices")
        objective = ChamferObjective(self.net, self._extractor(), cloud)
        return self._optimize(objective, self.resolve_latent(source))

    def fit_silhouette(self, target_pgm, camera_path: Optional[str] = None,
                       source: LatentSource = None) -> Dict[str, object]:
        target = read_pgm(target_pgm)
        objective = SilhouetteObjective(self.net, self._extractor(), self._camera(camera_path),
                                        self.config.raster, target)
        return self._optimize(objective, self.resolve_latent(source))

    def optimize_drag(self, source: LatentSource = None) -> Dict[str, object]:
        cfg = self.config
        objective = assemble_drag_objective(
            self.net, cfg.grid, cfg.drag, cfg.boxes, self._regularizer(),
            sparse=cfg.sparse.enabled, dense_every=cfg.sparse.dense_every, workers=cfg.workers,
        )
        return self._optimize(objective, self.resolve_latent(source))

    def bench_extract(self, resolutions: Sequence[int], step: float = 0.05,
                      source: LatentSource = None) -> Dict[str, object]:
        """
        Плотная и ускоренная выборка после шага по z заданной длины в случайном направлении.
        """
        out_dir = require_dir(self.config.paths.out_dir)
        z = self.resolve_latent(source)
        direction = module_rng(self.config.seed, "frontend.bench").normal(size=z.shape)
        direction /= max(np.linalg.norm(direction), 1e-12)
        z_next = z + step * direction

        rows = []
        for resolution in resolutions:
            grid = self.config.grid.with_resolution(resolution)
            extractor = SurfaceExtractor(grid, workers=self.config.workers,
                                         lipschitz=self.config.sparse.lipschitz)
            extractor.extract(self.net.evaluator(z))
            started = time.perf_counter()
            sparse = extractor.extract(self.net.evaluator(z_next))
            sparse_time = time.perf_counter() - started

            started = time.perf_counter()
            dense_mesh = marching_cubes(sample_field(self.net.evaluator(z_next), grid,
                                                     workers=self.config.workers))
            dense_time = time.perf_counter() - started
            rows.append({
                "resolution": resolution,
                "dense_evaluations": resolution ** 3,
                "sparse_evaluations": sparse.evaluations,
                "dense_seconds": dense_time,
                "sparse_seconds": sparse_time,
                "fallback": bool(extractor.fallbacks),
                "same_vertex_count": dense_mesh.num_vertices == sparse.mesh.num_vertices,
            })
            logger.info(
                f"N={resolution}: плотно {resolution ** 3} вычислений за {dense_time:.3f} с, "
                f"ускоренно {sparse.evaluations} за {sparse_time:.3f} с"
            )
        path = out_dir / "bench.json"
        path.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
        return {"bench": path, "rows": rows}

    def evaluate(self, pred_obj, target_obj, normalize: Optional[str] = None) -> Dict[str, object]:
        out_dir = require_dir(self.config.paths.out_dir)
        report = evaluate_surfaces(import_obj(pred_obj), import_obj(target_obj),
                                   seed=self.config.seed, normalize=normalize)
        path = out_dir / "report.json"
        path.write_text(report.to_json_line() + "\n", encoding="utf-8")
        return {"report": path, "metrics": report}

    # ============ Цикл оптимизации ============

    def _optimize(self, objective: LatentObjective, z0: np.ndarray) -> Dict[str, object]:
        cfg = self.config
        out_dir = require_dir(cfg.paths.out_dir)
        rows: List[Dict[str, float]] = []
        every = cfg.paths.snapshot_every

        def record(it: int, z: np.ndarray, value: float, grad: np.ndarray) -> None:
            last = objective.last
            row = {"iter": it, "objective": value}
            row.update(last.components if last else {})
            row["grad_norm"] = float(np.linalg.norm(grad))
            rows.append(row)
            if every and it % every == 0 and last is not None and last.mesh is not None:
                export_obj(last.mesh, out_dir / f"mesh_{it:04d}.obj")

        result = optimize_latent(objective, z0, cfg.adam, callback=record, progress=True)
        return self._write_run(out_dir, result, rows)

    def _write_run(self, out_dir: Path, result: OptimizationResult,
                   rows: List[Dict[str, float]]) -> Dict[str, object]:
        run_csv = out_dir / "run.csv"
        columns = ["iter", "objective"]
        for row in rows:
            columns += [key for key in row if key not in columns and key != "grad_norm"]
        columns.append("grad_norm")
        with open(run_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

        best_z = result.best_z
        latent = out_dir / "latent.json"
        latent.write_text(json.dumps([float(v) for v in best_z]) + "\n", encoding="utf-8")
        mesh_path = out_dir / "mesh.obj"
        export_obj(self.dense_mesh(best_z), mesh_path)

        summary = {
            "best_index": result.best_index,
            "best_value": result.best_value,
            "initial_value": result.initial_value,
            "relative_objective": result.relative_objective,
            "stopped_nonfinite": result.stopped_nonfinite,
        }
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
        logger.info(f"L% = {result.relative_objective:.4f} (лучшая итерация {result.best_index})")
        return {"latent": latent, "mesh": mesh_path, "run": run_csv, "summary": summary, "z": best_z}
