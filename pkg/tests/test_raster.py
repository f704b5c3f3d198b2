import numpy as np
import pytest

from frontend.service.gradcheck_service import octahedron, vertex_check
from marching.cubes import TriMesh
from raster.camera import Camera, project
from raster.pgm import quantize, read_pgm, write_pgm
from raster.soft import (RasterConfig, SilhouetteImage, backward_vertices, silhouette_l1,
                         silhouette_loss_and_grad, soft_silhouette)
from utils.errors import ContractError, PgmParseError
from utils.gradcheck import central_difference, relative_error


class TestCamera:
    def test_origin_projects_to_center(self):
        pixels, _, valid = project(Camera(), np.zeros((1, 3)))
        np.testing.assert_allclose(pixels[0], [32.0, 32.0])
        assert valid[0]

    def test_image_axes(self):
        pixels, _, _ = project(Camera(), np.array([[0.1, 0.0, 0.0], [0.0, 0.1, 0.0]]))
        assert pixels[0, 0] > 32.0
        assert pixels[1, 1] < 32.0

    def test_point_behind_camera_is_invalid(self):
        _, _, valid = project(Camera(), np.array([[0.0, 0.0, 3.0], [0.0, 0.0, 2.5]]))
        assert not valid.any()

    def test_jacobian_matches_differences(self):
        camera = Camera(eye=(0.4, -0.3, 2.0), width=48, height=32)
        points = np.random.default_rng(0).uniform(-0.5, 0.5, size=(5, 3))
        _, jac, _ = project(camera, points)
        for i, point in enumerate(points):
            for axis in range(2):
                numeric = central_difference(lambda p: project(camera, p)[0][0, axis], point, 1e-6)
                assert relative_error(jac[i, :, axis], numeric) < 1e-7

    def test_json_round_trip(self):
        camera = Camera.from_json({"eye": [1, 2, 3], "fov_deg": 30.0, "width": 20, "height": 10})
        assert camera.fov == pytest.approx(np.deg2rad(30.0))
        again = Camera.from_json(camera.to_json())
        assert again.eye == camera.eye and again.width == 20
        assert again.fov == pytest.approx(camera.fov, rel=1e-12)

    @pytest.mark.parametrize("kwargs", [
        {"eye": (0.0, 0.0, 0.0)},
        {"up": (0.0, 0.0, 1.0)},
        {"width": 0},
    ])
    def test_invalid_pose(self, kwargs):
        with pytest.raises(ValueError):
            Camera(**kwargs)


class TestSoftSilhouette:
    def test_empty_mesh_renders_background(self):
        image = soft_silhouette(TriMesh.empty(), Camera(width=8, height=6))
        assert image.values.shape == (6, 8)
        assert np.all(image.values == 0.0)
        assert np.all(soft_silhouette(TriMesh.empty(), Camera(width=4, height=4),
                                      RasterConfig(background=0.25)).values == pytest.approx(0.25))

    def test_huge_triangle_covers_image(self):
        mesh = TriMesh(np.array([[-50.0, -50.0, 0.0], [50.0, -50.0, 0.0], [0.0, 50.0, 0.0]]),
                       np.array([[0, 1, 2]]))
        image = soft_silhouette(mesh, Camera(width=16, height=16))
        assert np.all(image.values > 0.999)

    def test_octahedron_center_covered_corners_empty(self):
        image = soft_silhouette(octahedron(0.5), Camera(width=32, height=32))
        assert image.values[16, 16] > 0.99
        assert image.values[0, 0] < 1e-6
        assert np.all((image.values >= 0) & (image.values <= 1))

    def test_sharper_sigma_gives_harder_edges(self):
        camera = Camera(width=32, height=32)
        soft = soft_silhouette(octahedron(0.5), camera, RasterConfig(sigma=1e-2))
        hard = soft_silhouette(octahedron(0.5), camera, RasterConfig(sigma=1e-5))
        fuzzy = lambda v: np.sum((v > 0.05) & (v < 0.95))
        assert fuzzy(hard.values) < fuzzy(soft.values)

    def test_l1(self):
        ones = SilhouetteImage(4, 4, np.ones((4, 4)))
        assert silhouette_l1(ones, SilhouetteImage.blank(4, 4)) == 16.0
        with pytest.raises(ContractError):
            silhouette_l1(ones, SilhouetteImage.blank(4, 5))

    def test_values_checked(self):
        with pytest.raises(ContractError):
            SilhouetteImage(2, 2, np.full((2, 2), 1.5))

    def test_gradient_matches_differences(self):
        camera = Camera(eye=(0.3, 0.2, 2.5), width=16, height=16)
        cfg = RasterConfig(sigma=1e-3)
        target = soft_silhouette(octahedron(0.4, center=(0.1, -0.05, 0.0)), camera, cfg)
        error = vertex_check(lambda m: silhouette_loss_and_grad(m, camera, cfg, target), octahedron(0.4))
        assert error < 1e-3

    def test_backward_vertices_shape_and_size_check(self):
        camera = Camera(width=8, height=8)
        grad = backward_vertices(octahedron(0.3), camera, RasterConfig(), SilhouetteImage.blank(8, 8))
        assert grad.shape == (6, 3)
        with pytest.raises(ContractError):
            silhouette_loss_and_grad(octahedron(0.3), camera, RasterConfig(), SilhouetteImage.blank(4, 8))

    def test_matching_target_has_no_loss(self):
        camera = Camera(width=8, height=8)
        cfg = RasterConfig(sigma=1e-3)
        target = soft_silhouette(octahedron(0.3), camera, cfg)
        value, _ = silhouette_loss_and_grad(octahedron(0.3), camera, cfg, target)
        assert value == pytest.approx(0.0, abs=1e-12)


class TestPgm:
    def test_quantization(self):
        np.testing.assert_array_equal(quantize(np.array([0.0, 0.5, 0.998, 1.0])), [0, 128, 254, 255])

    def test_round_trip(self, tmp_path):
        values = np.random.default_rng(1).random((3, 5))
        path = write_pgm(tmp_path / "image.pgm", SilhouetteImage(5, 3, values))
        image = read_pgm(path)
        assert (image.width, image.height) == (5, 3)
        np.testing.assert_array_equal(image.values, quantize(values) / 255)

    def test_comments_and_free_layout(self, tmp_path):
        path = tmp_path / "image.pgm"
        path.write_text("P2\n# comment\n2 2 # size\n10\n0 5\n10 10\n", encoding="ascii")
        np.testing.assert_allclose(read_pgm(path).values, [[0.0, 0.5], [1.0, 1.0]])

    @pytest.mark.parametrize("text, line", [
        ("P5\n1 1\n255\n0\n", 1),
        ("P2\n1 1\n255\n300\n", 4),
        ("P2\n1 1\n255\n0 0\n", 4),
        ("P2\n1 1\n0\n0\n", 3),
    ])
    def test_errors_carry_line(self, tmp_path, text, line):
        path = tmp_path / "bad.pgm"
        path.write_text(text, encoding="ascii")
        with pytest.raises(PgmParseError) as info:
            read_pgm(path)
        assert info.value.line_number == line
