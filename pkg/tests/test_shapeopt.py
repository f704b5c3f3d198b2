import numpy as np
import pytest

from diffiso.extractor import SurfaceExtractor
from frontend.service.gradcheck_service import octahedron, vertex_check
from geometry.grid import Grid3D, sample_field
from marching.cubes import TriMesh, marching_cubes
from raster.camera import Camera
from raster.soft import RasterConfig, SilhouetteImage
from shapeopt.adam import Adam, AdamConfig, optimize_latent
from shapeopt.constraints import POINTS_PER_AXIS, ConstraintBox, constraint_penalty, vertex_normals
from shapeopt.drag import DragConfig, drag, face_geometry, newtonian_pressure
from shapeopt.objectives import (ChamferObjective, SilhouetteObjective, assemble_drag_objective)
from shapeopt.regularizer import RegularizerConfig, latent_knn_regularizer, latent_regularizer
from utils.errors import ContractError
from utils.gradcheck import central_difference, relative_error


@pytest.fixture
def plate():
    """Единичный квадрат в плоскости x = 0 с нормалью +x."""
    vertices = np.array([[0.0, 0, 0], [0, 1, 0], [0, 1, 1], [0, 0, 1]])
    return TriMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


class TestDrag:
    def test_plate_facing_flow(self, plate):
        value, _ = drag(plate, DragConfig(q=2.0))
        assert value == pytest.approx(2.0)

    def test_plate_facing_away(self, plate):
        flipped = TriMesh(plate.vertices, plate.faces[:, [0, 2, 1]])
        value, grad = drag(flipped, DragConfig())
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros((4, 3)))

    def test_sphere_matches_closed_form(self, sphere):
        mesh = marching_cubes(sample_field(sphere, Grid3D(resolution=64)))
        value, _ = drag(mesh, DragConfig(q=1.0))
        assert value == pytest.approx(np.pi * 0.25 / 2.0, rel=0.02)

    def test_constant_pressure_on_closed_surface_vanishes(self, sphere_mesh):
        value, _ = drag(sphere_mesh, DragConfig(pressure="constant", flow_direction=(0.3, -1.0, 0.2)))
        assert abs(value) < 1e-9
        assert abs(drag(octahedron(), DragConfig(pressure="constant"))[0]) < 1e-12

    @pytest.mark.parametrize("cfg", [
        DragConfig(flow_direction=(1.0, 0.3, -0.2)),
        DragConfig(flow_direction=(0.0, 0.0, 1.0), q=3.0),
        DragConfig(pressure="constant"),
    ])
    def test_gradient(self, cfg):
        assert vertex_check(lambda m: drag(m, cfg), octahedron(0.5)) < 1e-5

    @pytest.mark.parametrize("pressure", ["newtonian", "constant"])
    def test_linear_in_dynamic_pressure(self, sphere_mesh, pressure):
        direction = (1.0, 0.4, -0.3)
        base_value, base_grad = drag(sphere_mesh, DragConfig(flow_direction=direction, pressure=pressure))
        value, grad = drag(sphere_mesh, DragConfig(flow_direction=direction, pressure=pressure, q=3.0))
        assert value == pytest.approx(3.0 * base_value, rel=1e-12, abs=1e-15)
        np.testing.assert_allclose(grad, 3.0 * base_grad, rtol=1e-12, atol=1e-15)

    def test_empty_mesh(self):
        value, grad = drag(TriMesh.empty(), DragConfig())
        assert value == 0.0 and grad.shape == (0, 3)

    def test_direction_normalized(self):
        assert DragConfig(flow_direction=(3.0, 0.0, 4.0)).flow_direction == pytest.approx((0.6, 0.0, 0.8))
        with pytest.raises(ValueError):
            DragConfig(flow_direction=(0.0, 0.0, 0.0))

    def test_newtonian_pressure(self):
        cfg = DragConfig(q=2.0)
        np.testing.assert_allclose(newtonian_pressure(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0.6, 0.8, 0]]), cfg),
                                   [2.0, 0.0, 0.72])


class TestFaceGeometry:
    def test_plate(self, plate):
        geometry = face_geometry(plate)
        np.testing.assert_allclose(geometry.normals, [[1, 0, 0], [1, 0, 0]])
        np.testing.assert_allclose(geometry.areas, [0.5, 0.5])
        np.testing.assert_allclose(geometry.centroids[0], [0, 2 / 3, 1 / 3])

    def test_degenerate_face(self):
        mesh = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.array([[0, 1, 2]]))
        geometry = face_geometry(mesh)
        assert geometry.areas[0] == 0.0
        np.testing.assert_array_equal(geometry.normals[0], [0, 0, 1])


class TestConstraints:
    def test_box_inside_has_no_penalty(self, sphere_mesh):
        box = ConstraintBox(min_corner=(-0.2, -0.2, -0.2), max_corner=(0.2, 0.2, 0.2))
        value, grad = constraint_penalty(sphere_mesh, [box])
        assert value == 0.0
        assert not grad.any()

    def test_box_sticking_out(self, sphere_mesh):
        box = ConstraintBox(min_corner=(0.4, -0.1, -0.1), max_corner=(0.8, 0.1, 0.1), weight=2.0)
        value, _ = constraint_penalty(sphere_mesh, [box])
        assert value > 0.0
        bigger = sphere_mesh.with_vertices(1.5 * sphere_mesh.vertices)
        assert constraint_penalty(bigger, [box])[0] < value

    def test_gradient(self):
        box = ConstraintBox(min_corner=(0.0, -0.2, -0.2), max_corner=(0.6, 0.2, 0.2))
        assert vertex_check(lambda m: constraint_penalty(m, [box]), octahedron(0.5)) < 1e-5

    def test_empty_mesh_is_maximal(self):
        box = ConstraintBox(min_corner=(0, 0, 0), max_corner=(1, 1, 1), weight=0.5)
        value, grad = constraint_penalty(TriMesh.empty(), [box])
        assert value == pytest.approx(0.5 * POINTS_PER_AXIS ** 3 * 3.0)
        assert grad.shape == (0, 3)

    def test_no_boxes(self, sphere_mesh):
        assert constraint_penalty(sphere_mesh, [])[0] == 0.0

    def test_lattice_points_inside_box(self):
        box = ConstraintBox(min_corner=(0, 0, 0), max_corner=(1, 2, 3))
        points = box.lattice_points()
        assert points.shape == (POINTS_PER_AXIS ** 3, 3)
        assert np.all(points > 0) and np.all(points < [1, 2, 3])

    def test_invalid_box(self):
        with pytest.raises(ValueError):
            ConstraintBox(min_corner=(0, 0, 0), max_corner=(1, 0, 1))

    def test_vertex_normals_point_outward(self):
        mesh = octahedron(1.0)
        normals = vertex_normals(mesh)
        assert np.all(np.einsum("ij,ij->i", normals, mesh.vertices) > 0)


class TestRegularizer:
    @pytest.fixture
    def table(self):
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])

    def test_knn_value_and_gradient(self, table):
        cfg = RegularizerConfig(alpha=1.0, k=2).with_table(table)
        value, grad = latent_knn_regularizer(np.zeros(2), cfg)
        assert value == pytest.approx(0.5)
        np.testing.assert_allclose(grad, [-1.0, 0.0])

    def test_knn_gradient_matches_differences(self, table):
        cfg = RegularizerConfig(alpha=0.2, k=2).with_table(table)
        z = np.array([0.3, 0.4])
        numeric = central_difference(lambda c: latent_knn_regularizer(c, cfg)[0], z, 1e-6)
        assert relative_error(latent_knn_regularizer(z, cfg)[1], numeric) < 1e-8

    def test_ties_pick_lowest_index(self):
        cfg = RegularizerConfig(alpha=1.0, k=1).with_table([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        _, grad = latent_knn_regularizer(np.zeros(2), cfg)
        np.testing.assert_allclose(grad, [-2.0, 0.0])

    def test_k_capped_by_table(self, table):
        assert RegularizerConfig(k=10).with_table(table).k == 3
        with pytest.raises(ValueError):
            RegularizerConfig(k=4, latent_table=tuple(map(tuple, table)))

    def test_zero_alpha_and_l2_mode(self, table):
        assert latent_knn_regularizer(np.ones(2), RegularizerConfig(alpha=0.0))[0] == 0.0
        value, grad = latent_regularizer(np.array([1.0, 2.0]), RegularizerConfig(alpha=0.5, mode="l2"))
        assert value == pytest.approx(2.5)
        np.testing.assert_allclose(grad, [1.0, 2.0])

    def test_errors(self, table):
        with pytest.raises(ContractError):
            latent_knn_regularizer(np.zeros(2), RegularizerConfig())
        with pytest.raises(ContractError):
            latent_knn_regularizer(np.zeros(3), RegularizerConfig(k=1).with_table(table))


class TestAdam:
    def test_single_step_is_sign_sized(self):
        param = np.array([1.0])
        Adam([param], 0.1).step([np.array([5.0])])
        assert param[0] == pytest.approx(0.9)

    def test_quadratic_converges(self):
        center = np.array([0.3, -0.7, 1.2])
        result = optimize_latent(lambda z: (float(np.sum((z - center) ** 2)), 2 * (z - center)),
                                 np.zeros(3), AdamConfig(learning_rate=0.05, iterations=500))
        np.testing.assert_allclose(result.best_z, center, atol=2e-2)
        assert len(result.trajectory) == 501
        assert result.relative_objective < 1e-3

    def test_zero_iterations_returns_start(self):
        result = optimize_latent(lambda z: (1.0, np.ones(2)), np.array([0.5, 0.5]), AdamConfig(iterations=0))
        np.testing.assert_array_equal(result.best_z, [0.5, 0.5])
        assert result.relative_objective == 1.0

    def test_best_iterate_is_kept(self):
        # Градиент с обратным знаком: каждый шаг увеличивает цель
        result = optimize_latent(lambda z: (float(z @ z), -2 * z), np.array([0.5]),
                                 AdamConfig(learning_rate=0.1, iterations=5))
        assert result.best_index == 0
        assert result.relative_objective == 1.0

    def test_nonfinite_stops(self):
        calls = []

        def objective(z):
            calls.append(1)
            return (float("inf") if len(calls) > 2 else float(z @ z)), 2 * z

        result = optimize_latent(objective, np.ones(2), AdamConfig(iterations=10))
        assert result.stopped_nonfinite
        assert len(result.trajectory) == 2
        assert result.relative_objective <= 1.0

    def test_callback(self):
        seen = []
        optimize_latent(lambda z: (float(z @ z), 2 * z), np.ones(2), AdamConfig(iterations=3),
                        callback=lambda it, z, value, grad: seen.append(it))
        assert seen == [0, 1, 2, 3]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)


class TestObjectives:
    @pytest.fixture
    def grid(self):
        return Grid3D(resolution=20)

    def test_self_fit_has_zero_gradient(self, bowl, grid):
        z0 = np.array([0.02, 0.01])
        target = marching_cubes(sample_field(bowl.evaluator(z0), grid)).vertices
        objective = ChamferObjective(bowl, SurfaceExtractor(grid), target)
        value, grad = objective(z0)
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros(2))
        assert objective.last.components == {"chamfer": 0.0}

    def test_chamfer_descent(self, bowl, grid):
        target = marching_cubes(sample_field(bowl.evaluator(np.array([0.3, 0.0])), grid)).vertices
        objective = ChamferObjective(bowl, SurfaceExtractor(grid), target)
        result = optimize_latent(objective, np.zeros(2), AdamConfig(learning_rate=0.05, iterations=30))
        assert result.best_value < 0.5 * result.initial_value
        assert len(objective.history) == 31

    def test_regularizer_component(self, bowl, grid):
        objective = ChamferObjective(bowl, SurfaceExtractor(grid), np.zeros((1, 3)),
                                     RegularizerConfig(alpha=0.5, mode="l2"))
        value, _ = objective(np.array([1.0, 0.0]))
        assert objective.last.components["regularizer"] == pytest.approx(0.5)
        assert value == pytest.approx(sum(objective.last.components.values()))

    def test_empty_mesh_is_infinite(self, bowl):
        far = Grid3D(resolution=6, min_corner=(2, 2, 2), max_corner=(3, 3, 3))
        objective = ChamferObjective(bowl, SurfaceExtractor(far), np.zeros((1, 3)))
        value, grad = objective(np.zeros(2))
        assert value == float("inf")
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_latent_length_checked(self, bowl, grid):
        objective = ChamferObjective(bowl, SurfaceExtractor(grid), np.zeros((1, 3)))
        with pytest.raises(ContractError):
            objective(np.zeros(3))

    def test_silhouette_size_mismatch(self, bowl, grid):
        with pytest.raises(ContractError):
            SilhouetteObjective(bowl, SurfaceExtractor(grid), Camera(width=8, height=8),
                                RasterConfig(), SilhouetteImage.blank(8, 4))

    def test_silhouette_objective_runs(self, bowl, grid):
        camera = Camera(width=16, height=16)
        objective = SilhouetteObjective(bowl, SurfaceExtractor(grid), camera, RasterConfig(),
                                        SilhouetteImage.blank(16, 16))
        value, grad = objective(np.zeros(2))
        assert value > 0
        # Пустая цель: уменьшение силуэта (рост z0) уменьшает потери
        assert grad[0] < 0

    def test_drag_objective(self, bowl, grid):
        reg = RegularizerConfig(alpha=0.1, k=2).with_table([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
        box = ConstraintBox(min_corner=(-0.1, -0.1, -0.1), max_corner=(0.1, 0.1, 0.1))
        objective = assemble_drag_objective(bowl, grid, DragConfig(), [box], reg)
        value, grad = objective(np.zeros(2))
        assert set(objective.last.components) == {"drag", "constraint", "regularizer"}
        assert objective.last.components["drag"] > 0
        # Уменьшение тела уменьшает сопротивление
        assert grad[0] < 0
        assert np.isfinite(value)
