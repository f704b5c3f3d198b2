import itertools
import json

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from losses.chamfer import chamfer_l2, chamfer_sqrt_l2, nearest_neighbors
from losses.metrics import (EMD_MAX_POINTS, MetricReport, default_fscore_threshold, emd_exact,
                            evaluate_surfaces, fscore, surface_iou)
from losses.sampling import cloud_transform, normalize_cloud, sample_mesh_points
from marching.cubes import TriMesh
from utils.errors import ContractError
from utils.gradcheck import central_difference, relative_error


@pytest.fixture
def clouds():
    rng = np.random.default_rng(0)
    return rng.normal(size=(50, 3)), rng.normal(size=(50, 3))


class TestChamfer:
    def test_closed_form(self):
        P = np.array([[0.0, 0.0, 0.0]])
        Q = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        value, grad = chamfer_l2(P, Q)
        assert value == pytest.approx(6.0)
        np.testing.assert_allclose(grad, [[-4.0, -4.0, 0.0]])
        assert chamfer_l2(P, Q, reduction="mean")[0] == pytest.approx(3.5)
        assert chamfer_sqrt_l2(P, Q) == pytest.approx(4.0)

    def test_matches_brute_force(self, clouds):
        P, Q = clouds
        d2 = cdist(P, Q, "sqeuclidean")
        expected = d2.min(axis=1).sum() + d2.min(axis=0).sum()
        assert chamfer_l2(P, Q)[0] == pytest.approx(expected, abs=1e-12)
        d = np.sqrt(d2)
        expected_sqrt = d.min(axis=1).mean() + d.min(axis=0).mean()
        assert chamfer_sqrt_l2(P, Q, reduction="mean") == pytest.approx(expected_sqrt, abs=1e-12)

    @pytest.mark.parametrize("reduction", ["sum", "mean"])
    def test_gradient(self, clouds, reduction):
        P, Q = clouds
        _, analytic = chamfer_l2(P, Q, reduction=reduction)
        numeric = central_difference(lambda p: chamfer_l2(p, Q, reduction=reduction)[0], P, 1e-7)
        assert relative_error(analytic, numeric) < 1e-6

    def test_identical_clouds(self, clouds):
        P, _ = clouds
        value, grad = chamfer_l2(P, P.copy())
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros_like(P))

    def test_ties_pick_lowest_index(self):
        P = np.zeros((1, 3))
        Q = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert nearest_neighbors(P, Q)[0] == 0
        assert nearest_neighbors(P, Q[1:])[0] == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_ties_beyond_initial_candidates(self, seed):
        edges = [p for p in itertools.product((-1.0, 0.0, 1.0), repeat=3) if np.count_nonzero(p) == 2]
        Q = np.random.default_rng(seed).permutation(np.array(edges + [(3.0, 3.0, 3.0)]))
        P = np.array([[0.0, 0.0, 0.0], [3.0, 3.0, 2.5]])
        nearest = nearest_neighbors(P, Q)
        assert nearest[0] == min(i for i, q in enumerate(Q) if np.dot(q, q) == 2.0)
        assert nearest[1] == int(np.flatnonzero(Q[:, 0] == 3.0)[0])

    def test_workers_do_not_change_result(self, clouds):
        P, Q = clouds
        a = chamfer_l2(P, Q, workers=1)
        b = chamfer_l2(P, Q, workers=4)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_invalid_inputs(self, clouds):
        P, _ = clouds
        with pytest.raises(ContractError):
            chamfer_l2(P, np.zeros((0, 3)))
        with pytest.raises(ContractError):
            chamfer_l2(P, P, reduction="max")
        bad = P.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ContractError):
            chamfer_l2(bad, P)


class TestEmd:
    def test_matches_permutations(self):
        rng = np.random.default_rng(1)
        P, Q = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
        cost = cdist(P, Q)
        best = min(sum(cost[i, p] for i, p in enumerate(perm)) for perm in itertools.permutations(range(7)))
        assert emd_exact(P, Q) == pytest.approx(best, abs=1e-12)

    def test_translation(self):
        P = np.random.default_rng(2).normal(size=(10, 3))
        assert emd_exact(P, P + [0.5, 0.0, 0.0]) == pytest.approx(5.0)

    def test_size_limits(self):
        with pytest.raises(ContractError):
            emd_exact(np.zeros((3, 3)), np.zeros((4, 3)))
        big = np.zeros((EMD_MAX_POINTS + 1, 3))
        with pytest.raises(ContractError):
            emd_exact(big, big)


class TestFscore:
    def test_identical_and_disjoint(self, clouds):
        P, _ = clouds
        assert fscore(P, P, 0.01) == pytest.approx(100.0)
        assert fscore(P, P + 100.0, 1.0) == 0.0

    def test_threshold_is_strict(self):
        P = np.zeros((1, 3))
        Q = np.array([[0.25, 0.0, 0.0]])
        assert fscore(P, Q, 0.25) == 0.0
        assert fscore(P, Q, 0.2500001) == pytest.approx(100.0)

    def test_matches_brute_force(self, clouds):
        P, Q = clouds
        d = cdist(P, Q)
        precision = 100.0 * np.mean(d.min(axis=1) < 1.0)
        recall = 100.0 * np.mean(d.min(axis=0) < 1.0)
        expected = 2 * precision * recall / (precision + recall)
        assert fscore(P, Q, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_default_threshold(self):
        cube = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
        assert default_fscore_threshold(cube) == pytest.approx(0.05 * np.sqrt(3))

    def test_nonpositive_threshold(self, clouds):
        with pytest.raises(ContractError):
            fscore(*clouds, 0.0)


class TestSurfaceIou:
    def test_one_third(self):
        P = np.array([[0.1, 0.1, 0.1], [0.9, 0.1, 0.1]])
        Q = np.array([[0.9, 0.1, 0.1], [0.9, 0.9, 0.9]])
        assert surface_iou(P, Q, resolution=2) == pytest.approx(1.0 / 3.0)

    def test_identical(self, clouds):
        P, _ = clouds
        assert surface_iou(P, P) == 1.0

    def test_resolution_checked(self, clouds):
        with pytest.raises(ContractError):
            surface_iou(*clouds, resolution=1)


class TestMeshSampling:
    @pytest.fixture
    def triangle(self):
        return TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))

    def test_points_lie_on_triangle(self, triangle):
        points = sample_mesh_points(triangle, 500, seed=3)
        assert points.shape == (500, 3)
        assert np.all(points[:, 2] == 0)
        assert np.all(points[:, :2] >= -1e-15)
        assert np.all(points[:, 0] + points[:, 1] <= 1 + 1e-12)

    def test_deterministic(self, sphere_mesh):
        np.testing.assert_array_equal(sample_mesh_points(sphere_mesh, 100, seed=4),
                                      sample_mesh_points(sphere_mesh, 100, seed=4))

    def test_vertices_mode(self, triangle):
        np.testing.assert_array_equal(sample_mesh_points(triangle, 1, mode="vertices"), triangle.vertices)

    def test_invalid(self, triangle):
        with pytest.raises(ContractError):
            sample_mesh_points(triangle, 0)
        with pytest.raises(ContractError):
            sample_mesh_points(TriMesh.empty(), 10)

    def test_normalization(self):
        points = np.random.default_rng(5).uniform(-3, 7, size=(200, 3))
        sphere = normalize_cloud(points, "unit_sphere")
        assert np.max(np.linalg.norm(sphere, axis=1)) == pytest.approx(1.0)
        box = normalize_cloud(points, "unit_box")
        assert np.max(box.max(axis=0) - box.min(axis=0)) == pytest.approx(1.0)
        with pytest.raises(ContractError):
            cloud_transform(points, "unit_cube")


class TestEvaluate:
    def test_self_comparison(self, sphere_mesh):
        report = evaluate_surfaces(sphere_mesh, sphere_mesh, seed=0)
        assert report.chamfer_l2 < 1e-2
        assert report.fscore > 90.0
        assert 0.0 < report.surface_iou <= 1.0
        assert report.emd > 0.0
        assert set(json.loads(report.to_json_line())) == set(MetricReport.model_fields)

    def test_shrunk_target_scores_worse(self, sphere_mesh):
        shrunk = sphere_mesh.with_vertices(0.6 * sphere_mesh.vertices)
        same = evaluate_surfaces(sphere_mesh, sphere_mesh, seed=1)
        worse = evaluate_surfaces(sphere_mesh, shrunk, seed=1)
        assert worse.chamfer_l2 > same.chamfer_l2
        assert worse.fscore < same.fscore

    def test_normalized_report_is_scale_free(self, sphere_mesh):
        a = evaluate_surfaces(sphere_mesh, sphere_mesh, seed=2, normalize="unit_sphere")
        scaled = sphere_mesh.with_vertices(3.0 * sphere_mesh.vertices)
        b = evaluate_surfaces(scaled, scaled, seed=2, normalize="unit_sphere")
        assert a.chamfer_l2 == pytest.approx(b.chamfer_l2, rel=1e-9)
