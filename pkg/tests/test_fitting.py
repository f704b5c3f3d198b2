import csv
import json

import numpy as np
import pytest

from diffiso.extractor import SurfaceExtractor
from frontend.service.fitting_service import FittingService
from geometry.grid import Grid3D, sample_field
from geometry.shapes import shape_family
from marching.cubes import marching_cubes
from marching.topology import genus
from raster.camera import Camera
from raster.pgm import write_pgm
from raster.soft import RasterConfig, soft_silhouette
from shapeopt.adam import AdamConfig, optimize_latent
from shapeopt.objectives import ChamferObjective, SilhouetteObjective
from utils.config import RunConfig

pytestmark = pytest.mark.slow


def run_config(out_dir, checkpoint, **sections) -> RunConfig:
    data = {
        "workers": 1,
        "grid": {"resolution": 48},
        "paths": {"out_dir": str(out_dir), "checkpoint": str(checkpoint), "snapshot_every": 0},
    }
    data.update(sections)
    return RunConfig.model_validate(data)


def mesh_genus(net, z, grid) -> int:
    return genus(marching_cubes(sample_field(net.evaluator(z), grid)))


class TestTopologyChange:
    """Из кода сферы к цели-тору: род поверхности меняется с 0 на 1."""

    @pytest.fixture
    def setup(self, trained_family):
        net, latents, shapes = trained_family
        grid = Grid3D(resolution=64)
        torus_mesh = marching_cubes(sample_field(shapes[1], grid))
        assert mesh_genus(net, latents[0], grid) == 0
        return net, latents, grid, torus_mesh

    def test_chamfer_fit(self, setup):
        net, latents, grid, torus_mesh = setup
        objective = ChamferObjective(net, SurfaceExtractor(grid), torus_mesh.vertices)
        result = optimize_latent(objective, latents[0], AdamConfig(learning_rate=1e-2, iterations=300))

        assert mesh_genus(net, result.best_z, grid) == 1
        assert result.best_value < 1e-3

    def test_silhouette_fit(self, setup):
        net, latents, grid, torus_mesh = setup
        camera = Camera()
        raster = RasterConfig()
        target = soft_silhouette(torus_mesh, camera, raster)
        objective = SilhouetteObjective(net, SurfaceExtractor(grid), camera, raster, target)
        result = optimize_latent(objective, latents[0], AdamConfig(learning_rate=1e-2, iterations=400))

        assert mesh_genus(net, result.best_z, grid) == 1
        assert result.relative_objective < 1.0


def test_fit_silhouette_halves_error_on_held_out_targets(tmp_path, trained_family, family_checkpoint):
    net, _, _ = trained_family
    targets = shape_family(0, 5, seed=11)
    camera = Camera()
    raster = RasterConfig()
    camera_path = tmp_path / "camera.json"
    camera_path.write_text(json.dumps(camera.to_json()), encoding="utf-8")

    for i, shape in enumerate(targets):
        out = tmp_path / f"target_{i}"
        out.mkdir()
        image = soft_silhouette(marching_cubes(sample_field(shape, Grid3D(resolution=48))), camera, raster)
        target_path = write_pgm(out / "target.pgm", image)

        config = run_config(out, family_checkpoint, adam={"iterations": 400, "learning_rate": 1e-2})
        with FittingService(config) as service:
            result = service.fit_silhouette(str(target_path), str(camera_path), source=0)

        assert result["summary"]["relative_objective"] <= 0.5, f"цель {i}: {shape}"
        assert (out / "latent.json").exists()


def test_optimize_drag_reduces_objective_within_constraints(tmp_path, family_checkpoint):
    box = {"min_corner": [-0.42, -0.05, -0.05], "max_corner": [0.42, 0.05, 0.05], "weight": 2.0}
    config = run_config(
        tmp_path, family_checkpoint,
        boxes=[box],
        drag={"flow_direction": [1.0, 0.0, 0.0], "q": 1.0},
        adam={"iterations": 400, "learning_rate": 1e-2},
    )
    with FittingService(config) as service:
        result = service.optimize_drag(source=0)

    summary = result["summary"]
    assert not summary["stopped_nonfinite"]
    assert summary["relative_objective"] < 0.95

    with open(result["run"], newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 401
    constraint = np.array([float(row["constraint"]) for row in rows])
    assert constraint[0] > 0
    assert np.all(constraint <= 2.0 * constraint[0])
    assert json.loads((tmp_path / "summary.json").read_text(encoding="utf-8")) == summary
